"""Estimator-style wrappers around training, inference and normalization."""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import checkpoint, metrics
from .data import compute_norm_stats
from .exceptions import DimensionMismatch
from .interpolation import fill_arrays
from .masks import INBETWEEN, KEYFRAME, broadcast_masks
from .model import FULL, ModelConfig
from .quaternion import align_sequence
from .skeleton import GLOBAL, LOCAL, standardize_tpose, to_global, to_local
from .training import LR_DECAY, TrainConfig, train
from .validation import check_mask, check_positions, check_sequences

_MODEL_KEYS = ("n_layers", "n_heads", "d_model", "d_ffn", "max_len", "features", "coord")
_TRAIN_KEYS = ("epochs", "batch_size", "max_lr", "warmup_epochs", "decay_factor", "decay_every",
               "decay_mode", "alpha_rec", "alpha_k", "grad_clip", "seed", "scenarios", "window")


class PositionScaler(TransformerMixin, BaseEstimator):
    """Per-joint, per-axis standardization of positions."""

    def __init__(self, floor=1e-8):
        self.floor = floor

    def fit(self, X, y=None):
        self.stats_ = compute_norm_stats([check_positions(X)], floor=self.floor)
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        return self.stats_.standardize(self._check(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "stats_")
        return self.stats_.unstandardize(self._check(X))

    def _check(self, X):
        X = check_positions(X)
        if X.shape[-2] != self.stats_.n_joints:
            raise DimensionMismatch(f"fitted on {self.stats_.n_joints} joints, got {X.shape[-2]}")
        return X


class MotionCompleter(BaseEstimator):
    """Train the completion transformer and fill masked frames in one pass.

    ``fit`` takes a list of :class:`MotionSequence`. ``predict(X, masks)``
    accepts sequences in either coordinate system and returns completed
    sequences in the same system, with keyframes copied from the input.
    Sequences sharing a length and mask go through the encoder as one batch.
    """

    def __init__(self, n_layers=8, n_heads=8, d_model=256, d_ffn=512, max_len=128,
                 features=FULL, coord=GLOBAL, epochs=1000, batch_size=32, max_lr=1e-3,
                 warmup_epochs=50, decay_factor=0.75, decay_every=200, decay_mode=LR_DECAY,
                 alpha_rec=1.0, alpha_k=0.01, grad_clip=1.0, seed=0, scenarios=(INBETWEEN,),
                 window=(50, 20), standardize_tpose=False, n_jobs=1):
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_model = d_model
        self.d_ffn = d_ffn
        self.max_len = max_len
        self.features = features
        self.coord = coord
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_lr = max_lr
        self.warmup_epochs = warmup_epochs
        self.decay_factor = decay_factor
        self.decay_every = decay_every
        self.decay_mode = decay_mode
        self.alpha_rec = alpha_rec
        self.alpha_k = alpha_k
        self.grad_clip = grad_clip
        self.seed = seed
        self.scenarios = scenarios
        self.window = window
        self.standardize_tpose = standardize_tpose
        self.n_jobs = n_jobs

    def model_config(self, n_joints):
        return ModelConfig(n_joints=n_joints, **{k: getattr(self, k) for k in _MODEL_KEYS})

    def train_config(self):
        return TrainConfig(**{k: getattr(self, k) for k in _TRAIN_KEYS})

    def fit(self, X, y=None, log_fn=None):
        X = check_sequences(X)
        J = X[0].n_joints
        X = check_sequences(X, J)
        self.model_, self.history_ = train(X, self.model_config(J), self.train_config(),
                                           log_fn=log_fn)
        return self

    @classmethod
    def from_model(cls, model, **params):
        """Wrap an already trained :class:`CompletionTransformer`."""
        cfg = model.config
        est = cls(**{k: getattr(cfg, k) for k in _MODEL_KEYS}, **params)
        est.model_ = model
        est.history_ = []
        return est

    @property
    def skeleton_(self):
        return self.model_.skeleton

    # inference

    def _to_model(self, seq):
        skel = seq.skeleton or self.model_.skeleton
        if self.model_.config.coord == LOCAL:
            return to_local(seq, skel)
        return to_global(seq, skel)

    def _from_model(self, seq, like):
        if like.coord == seq.coord:
            return seq
        skel = like.skeleton or self.model_.skeleton
        return to_local(seq, skel) if like.coord == LOCAL else to_global(seq, skel)

    def _complete_group(self, items):
        """One encoder pass over clips that share a length and a mask."""
        seqs = [s for s, _ in items]
        labels = items[0][1].labels
        inputs = [self._to_model(s) for s in seqs]
        pos = np.stack([s.positions for s in inputs])
        rot = np.stack([align_sequence(s.rotations) for s in inputs])
        pos, rot = fill_arrays(pos, rot, labels)
        t0 = time.perf_counter()
        pos, rot = self.model_.complete_arrays(pos, rot, labels)
        self.forward_seconds_ += time.perf_counter() - t0
        key = labels == KEYFRAME
        out = []
        for i, (src, model_in) in enumerate(zip(seqs, inputs)):
            done = self._from_model(replace(model_in, positions=pos[i], rotations=rot[i]), src)
            if self.standardize_tpose and done.coord == GLOBAL:
                done = standardize_tpose(done, src.skeleton or self.model_.skeleton)
            done = done.copy()
            done.positions[key] = src.positions[key]
            done.rotations[key] = src.rotations[key]
            out.append(done)
        return out

    def predict(self, X, masks):
        """Complete one sequence or a list of sequences.

        ``masks`` is a single mask shared by every sequence or one per
        sequence.
        """
        check_is_fitted(self, "model_")
        single = hasattr(X, "positions")
        X = check_sequences(X, self.model_.config.n_joints)
        masks = [check_mask(m, s.n_frames) for s, m in zip(X, broadcast_masks(masks, len(X)))]
        self.forward_seconds_ = 0.0
        groups = {}
        for i, (s, m) in enumerate(zip(X, masks)):
            groups.setdefault((s.n_frames, m.labels.tobytes()), []).append(i)
        chunks = []
        for idx in groups.values():
            step = -(-len(idx) // max(1, self.n_jobs))
            chunks += [idx[k:k + step] for k in range(0, len(idx), step)]
        run = lambda idx: self._complete_group([(X[i], masks[i]) for i in idx])  # noqa: E731
        if self.n_jobs > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                results = list(pool.map(run, chunks))
        else:
            results = [run(c) for c in chunks]
        out = [None] * len(X)
        for idx, res in zip(chunks, results):
            for i, s in zip(idx, res):
                out[i] = s
        return out[0] if single else out

    def score(self, X, masks):
        """Negative L2P over the unknown frames (higher is better)."""
        check_is_fitted(self, "model_")
        X = check_sequences(X)
        preds = self.predict(X, masks)
        masks = broadcast_masks(masks, len(X))
        scores = [
            metrics.l2p(to_global(p).positions, to_global(s).positions, check_mask(m, s.n_frames),
                        self.model_.norm_stats)
            for p, s, m in zip(preds, X, masks)
        ]
        return -float(np.mean(scores))

    # persistence

    def save(self, path):
        check_is_fitted(self, "model_")
        meta = {"params": {k: v for k, v in self.get_params().items() if k not in _MODEL_KEYS}}
        checkpoint.save(path, self.model_, meta)

    @classmethod
    def load(cls, path, **overrides):
        model, meta = checkpoint.load(path)
        params = dict(meta.get("params", {}))
        for k in ("scenarios", "window"):
            if isinstance(params.get(k), list):
                params[k] = tuple(params[k])
        params.update(overrides)
        return cls.from_model(model, **params)
