"""Optimizer, learning-rate schedule, training loop and evaluation driver."""

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import metrics
from . import tensor as tn
from .data import STD_FLOOR, WindowSpec, compute_norm_stats, slice_windows
from .exceptions import (DimensionMismatch, EmptyDataset, NumericDivergence, SequenceTooShort,
                         ShapeError)
from .interpolation import fill_arrays
from .losses import total_loss
from .masks import INBETWEEN, KEYFRAME, as_labels, make_mask, sample_mask
from .model import FEATURE_STD_FLOOR, POSITIONS, CompletionTransformer
from .quaternion import align_sequence
from .skeleton import LOCAL, standardize_tpose, to_global, to_local

log = logging.getLogger(__name__)

LR_DECAY = "lr"
L2_DECAY = "l2"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 32
    max_lr: float = 1e-3
    warmup_epochs: int = 50
    decay_factor: float = 0.75
    decay_every: int = 200
    decay_mode: str = LR_DECAY
    alpha_rec: float = 1.0
    alpha_k: float = 0.01
    grad_clip: float = 1.0
    seed: int = 0
    scenarios: tuple = (INBETWEEN,)
    ranges: dict = field(default_factory=dict)
    window: tuple = (50, 20)
    divergence_factor: float = 100.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("warmup_epochs must be in [0, epochs)")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_mode not in (LR_DECAY, L2_DECAY):
            raise ValueError(f"decay_mode must be {LR_DECAY!r} or {L2_DECAY!r}")
        if not self.divergence_factor > 1:
            raise ValueError("divergence_factor must exceed 1")
        if self.batch_size < 1 or self.decay_every < 1:
            raise ValueError("batch_size and decay_every must be positive")
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if self.window is not None:
            object.__setattr__(self, "window", tuple(self.window))

    def to_dict(self):
        return asdict(self)


def lr_schedule(epoch, cfg):
    """Linear warm-up from 0, then step decay every ``decay_every`` epochs.

    ``epoch`` may be fractional. With ``decay_mode == "l2"`` the decay factor
    is spent on weight decay instead and the rate stays at ``max_lr``.
    """
    if epoch < cfg.warmup_epochs:
        return cfg.max_lr * epoch / cfg.warmup_epochs
    if cfg.decay_mode != LR_DECAY:
        return cfg.max_lr
    steps = math.floor((epoch - cfg.warmup_epochs) / cfg.decay_every)
    return cfg.max_lr * cfg.decay_factor ** steps


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, in place on the ``params`` arrays."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return state


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


# -- data preparation ------------------------------------------------------------


def prepare_windows(sequences, coord, window):
    """Convert to ``coord``, make rotations continuous and cut windows.

    Returns ``(model_windows, global_windows)`` as stacked arrays dicts.
    """
    if not sequences:
        raise EmptyDataset("no training sequences")
    spec = WindowSpec(*window) if window is not None else None
    model_pos, model_rot, glob_pos, glob_rot = [], [], [], []
    for seq in sequences:
        g = to_global(seq)
        m = to_local(seq) if coord == LOCAL else g
        pieces = [(m, g)]
        if spec is not None:
            pieces = list(zip(slice_windows(m, spec), slice_windows(g, spec)))
        for mw, gw in pieces:
            model_pos.append(mw.positions)
            model_rot.append(align_sequence(mw.rotations))
            glob_pos.append(gw.positions)
            glob_rot.append(gw.rotations)
    lengths = {p.shape[0] for p in model_pos}
    if len(lengths) != 1:
        raise SequenceTooShort(f"windows have differing lengths {sorted(lengths)}; set a window")
    return (
        {"positions": np.stack(model_pos), "rotations": np.stack(model_rot)},
        {"positions": np.stack(glob_pos), "rotations": np.stack(glob_rot)},
    )


def _kinematic_scale(stats):
    return float(np.mean(stats.std))


def train_step(model, batch_pos, batch_rot, gt_global_pos, labels, cfg, feature_stats,
               kinematic_scale):
    """Forward, loss and backward for one batch; returns ``(loss, terms, grads)``."""
    mcfg = model.config
    pos_in, rot_in = fill_arrays(batch_pos, batch_rot, labels)
    x = model.encode_features(pos_in, rot_in, labels)
    y = model.forward(x, labels)
    pred_pos = model.decode_positions(y)
    pred_rot = model.decode_rotations(y)
    skel = model.skeleton if mcfg.features != POSITIONS else None
    alpha_k = cfg.alpha_k if skel is not None else 0.0
    loss, terms = total_loss(
        pred_pos, pred_rot, batch_pos, batch_rot if pred_rot is not None else None, labels,
        skel=skel, coord=mcfg.coord, stats=feature_stats, alpha_rec=cfg.alpha_rec,
        alpha_k=alpha_k, gt_global_pos=gt_global_pos, kinematic_scale=kinematic_scale,
    )
    model.zero_grad()
    tn.backward(loss)
    grads = {k: p.grad for k, p in model.params.items() if p.grad is not None}
    return loss, terms, grads


def train(sequences, model_cfg, cfg, skeleton=None, log_fn=None):
    """Train a fresh model; returns ``(model, history)``.

    Raises :class:`NumericDivergence` when a step's loss is non-finite or
    exceeds ``cfg.divergence_factor`` times the first step's loss.

    ``history`` holds one dict per epoch with the mean loss terms and the
    learning rate. ``log_fn`` is called with each of those dicts.
    """
    rng = np.random.default_rng(cfg.seed)
    skeleton = skeleton or next((s.skeleton for s in sequences if s.skeleton is not None), None)
    if model_cfg.coord == LOCAL and skeleton is None:
        raise ValueError("local-coordinate training needs a skeleton")
    seqs = [s if s.skeleton is not None or skeleton is None else replace(s, skeleton=skeleton)
            for s in sequences]
    data, glob = prepare_windows(seqs, model_cfg.coord, cfg.window)
    n, T, J = data["positions"].shape[:3]
    if J != model_cfg.n_joints:
        raise DimensionMismatch(f"data has {J} joints, model config says {model_cfg.n_joints}")
    if T > model_cfg.max_len:
        raise DimensionMismatch(f"windows of {T} frames exceed max_len {model_cfg.max_len}")

    norm_stats = compute_norm_stats(glob["positions"], floor=STD_FLOOR)
    feature_stats = compute_norm_stats(data["positions"], floor=FEATURE_STD_FLOOR)
    model = CompletionTransformer(model_cfg, seed=cfg.seed, feature_stats=feature_stats,
                                  norm_stats=norm_stats, skeleton=skeleton)
    state = AdamState(weight_decay=cfg.decay_factor if cfg.decay_mode == L2_DECAY else 0.0)
    kin_scale = _kinematic_scale(norm_stats)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    history = []
    first = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = {}
        for step in range(steps_per_epoch):
            idx = np.sort(order[step * cfg.batch_size:(step + 1) * cfg.batch_size])
            labels = sample_mask(rng, T, cfg.scenarios, cfg.ranges).labels
            loss, terms, grads = train_step(
                model, data["positions"][idx], data["rotations"][idx], glob["positions"][idx],
                labels, cfg, feature_stats, kin_scale,
            )
            value = loss.item()
            if not math.isfinite(value):
                raise NumericDivergence(f"non-finite loss at epoch {epoch}, step {step}")
            first = value if first is None else first
            if value > cfg.divergence_factor * first:
                raise NumericDivergence(
                    f"loss {value:.4g} at epoch {epoch}, step {step} exceeds "
                    f"{cfg.divergence_factor:g}x the first step's {first:.4g}")
            clip_grad_norm(grads, cfg.grad_clip)
            lr = lr_schedule(epoch + step / steps_per_epoch, cfg)
            adam_step({k: p.data for k, p in model.params.items()}, grads, state, lr)
            sums["loss"] = sums.get("loss", 0.0) + value
            for k, t in terms.items():
                sums[k] = sums.get(k, 0.0) + t.item()
        record = {"epoch": epoch, "lr": lr_schedule(epoch, cfg)}
        record.update({k: v / steps_per_epoch for k, v in sums.items()})
        history.append(record)
        if log_fn is not None:
            log_fn(record)
        log.debug("epoch %d loss %.5f", epoch, record["loss"])
    return model, history


# -- evaluation ------------------------------------------------------------------------


def overwrite_keyframes(pred, gt, labels):
    labels = as_labels(labels)
    key = labels == KEYFRAME
    pred = pred.copy()
    pred.positions[key] = gt.positions[key]
    pred.rotations[key] = gt.rotations[key]
    return pred


def evaluate(predictor, sequences, kind=INBETWEEN, lengths=(5, 15, 30), stats=None,
             standardize=False, skeleton=None, npss_span="transition"):
    """Metric table for one predictor on global ground-truth windows.

    ``predictor.predict(list_of_sequences, mask)`` must return completed
    sequences; their keyframes are overwritten with the ground truth and,
    with ``standardize=True``, bone lengths are reset to the skeleton before
    scoring.
    """
    if not sequences:
        raise EmptyDataset("no evaluation sequences")
    gts = [to_global(s) for s in sequences]
    T = gts[0].n_frames
    if any(s.n_frames != T for s in gts):
        raise DimensionMismatch("evaluation windows must share one length")
    if stats is None:
        raise ValueError("evaluation needs training-set statistics for L2P")
    report = {"scenario": kind, "lengths": list(lengths), "l2q": [], "l2p": [], "npss": [],
              "per_sequence": {"l2q": [], "l2p": [], "npss": []}}
    gt_pos = np.stack([s.positions for s in gts])
    gt_rot = np.stack([s.rotations for s in gts])
    for length in lengths:
        mask = make_mask(kind, length, T)
        preds = predictor.predict(gts, mask)
        preds = [overwrite_keyframes(to_global(p), g, mask.labels) for p, g in zip(preds, gts)]
        if standardize:
            preds = [standardize_tpose(p, skeleton or p.skeleton or g.skeleton)
                     for p, g in zip(preds, gts)]
        pr_pos = np.stack([p.positions for p in preds])
        pr_rot = np.stack([p.rotations for p in preds])
        report["l2q"].append(metrics.l2q(pr_rot, gt_rot, mask))
        report["l2p"].append(metrics.l2p(pr_pos, gt_pos, mask, stats))
        report["npss"].append(metrics.npss(pr_rot, gt_rot, mask, npss_span))
        report["per_sequence"]["l2q"].append(
            [metrics.l2q(p, g, mask) for p, g in zip(pr_rot, gt_rot)])
        report["per_sequence"]["l2p"].append(
            [metrics.l2p(p, g, mask, stats) for p, g in zip(pr_pos, gt_pos)])
        report["per_sequence"]["npss"].append(
            [metrics.npss(p, g, mask, npss_span) for p, g in zip(pr_rot, gt_rot)])
    return report
