"""Single-shot motion completion transformer.

Pipeline for one call: flattened pose vectors -> temporal conv tokens ->
plus mixture embedding (learned position row + learned keyframe-label row)
-> layer norm -> post-norm encoder layers -> temporal conv back to pose
features. Every frame comes out of the same pass.
"""

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import quaternion as quat
from . import tensor as tn
from .data import NormStats
from .exceptions import MaskLengthMismatch, ShapeError
from .masks import IGNORED, as_labels
from .skeleton import GLOBAL, LOCAL

FULL = "full"
POSITIONS = "positions"
FEATURE_STD_FLOOR = 1e-3


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 8
    n_heads: int = 8
    d_model: int = 256
    d_ffn: int = 512
    max_len: int = 128
    n_joints: int = 22
    features: str = FULL
    coord: str = GLOBAL
    ln_eps: float = 1e-5
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.features not in (FULL, POSITIONS):
            raise ValueError(f"features must be {FULL!r} or {POSITIONS!r}")
        if self.coord not in (LOCAL, GLOBAL):
            raise ValueError(f"coord must be {LOCAL!r} or {GLOBAL!r}")
        if self.features == POSITIONS and self.coord != GLOBAL:
            raise ValueError("positions-only input is global by construction")
        for name in ("n_layers", "n_heads", "d_model", "d_ffn", "max_len", "n_joints"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def input_dim(self):
        return self.n_joints * (7 if self.features == FULL else 3)

    @property
    def head_dim(self):
        return self.d_model // self.n_heads

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def init_params(config, seed=0):
    """Fresh parameters as float arrays keyed by dotted name."""
    rng = np.random.default_rng(seed)
    F, D = config.d_model, config.input_dim

    def conv(c_out, c_in):
        bound = 1.0 / np.sqrt(3 * c_in)
        return rng.uniform(-bound, bound, (c_out, c_in, 3)), rng.uniform(-bound, bound, c_out)

    def normal(*shape):
        return rng.normal(0.0, config.init_std, shape)

    p = {}
    p["input_conv.weight"], p["input_conv.bias"] = conv(F, D)
    p["embedding.position"] = normal(config.max_len, F)
    p["embedding.keyframe"] = normal(3, F)
    p["input_norm.gamma"], p["input_norm.beta"] = np.ones(F), np.zeros(F)
    for i in range(config.n_layers):
        pre = f"layers.{i}."
        for w in ("q", "k", "v", "o"):
            p[pre + f"attn.w{w}"] = normal(F, F)
            p[pre + f"attn.b{w}"] = np.zeros(F)
        p[pre + "norm1.gamma"], p[pre + "norm1.beta"] = np.ones(F), np.zeros(F)
        p[pre + "ffn.w1"], p[pre + "ffn.b1"] = normal(F, config.d_ffn), np.zeros(config.d_ffn)
        p[pre + "ffn.w2"], p[pre + "ffn.b2"] = normal(config.d_ffn, F), np.zeros(F)
        p[pre + "norm2.gamma"], p[pre + "norm2.beta"] = np.ones(F), np.zeros(F)
    p["output_conv.weight"], p["output_conv.bias"] = conv(D, F)
    return p


def param_shapes(config):
    F, D, H = config.d_model, config.input_dim, config.d_ffn
    shapes = {
        "input_conv.weight": (F, D, 3),
        "input_conv.bias": (F,),
        "embedding.position": (config.max_len, F),
        "embedding.keyframe": (3, F),
        "input_norm.gamma": (F,),
        "input_norm.beta": (F,),
    }
    for i in range(config.n_layers):
        pre = f"layers.{i}."
        for w in ("q", "k", "v", "o"):
            shapes[pre + f"attn.w{w}"] = (F, F)
            shapes[pre + f"attn.b{w}"] = (F,)
        shapes.update({
            pre + "norm1.gamma": (F,), pre + "norm1.beta": (F,),
            pre + "ffn.w1": (F, H), pre + "ffn.b1": (H,),
            pre + "ffn.w2": (H, F), pre + "ffn.b2": (F,),
            pre + "norm2.gamma": (F,), pre + "norm2.beta": (F,),
        })
    shapes["output_conv.weight"] = (D, F, 3)
    shapes["output_conv.bias"] = (D,)
    return shapes


# -- building blocks ----------------------------------------------------------


def embed_tokens(x, weight, bias):
    return tn.conv1d(x, weight, bias)


def mixture(position, keyframe, labels):
    """Per-frame embedding ``position[t] + keyframe[labels[t]]``."""
    labels = as_labels(labels)
    T = labels.shape[-1]
    if T > position.shape[0]:
        raise ShapeError(f"sequence of {T} frames exceeds max_len {position.shape[0]}")
    return tn.getitem(position, slice(0, T)) + tn.getitem(keyframe, labels)


def _swap_last_pair(ndim):
    axes = list(range(ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return tuple(axes)


def mhsa(h, w, n_heads, hook=None):
    """Multi-head scaled dot-product self attention.

    ``w`` maps ``wq, wk, wv, wo`` and their biases ``bq ...`` to tensors.
    ``hook`` receives the attention weights ``(..., heads, T, T)``.
    """
    *lead, T, F = h.shape
    if F % n_heads:
        raise ShapeError(f"feature size {F} is not divisible by {n_heads} heads")
    dh = F // n_heads
    split = tuple(lead) + (T, n_heads, dh)
    perm = _swap_last_pair(len(split))

    def heads(name):
        proj = tn.matmul(h, w["w" + name]) + w["b" + name]
        return tn.transpose(tn.reshape(proj, split), perm)

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = tn.matmul(q, tn.transpose(k)) / float(np.sqrt(dh))
    attn = tn.softmax(scores, axis=-1)
    if hook is not None:
        hook(attn.data)
    out = tn.transpose(tn.matmul(attn, v), perm)
    out = tn.reshape(out, tuple(lead) + (T, F))
    return tn.matmul(out, w["wo"]) + w["bo"]


def ffn(h, w):
    hidden = tn.gelu(tn.matmul(h, w["w1"]) + w["b1"])
    return tn.matmul(hidden, w["w2"]) + w["b2"]


def encoder_layer(h, w, n_heads, eps=1e-5, hook=None):
    """Post-norm layer: ``h = Norm(h + MHSA(h)); h = Norm(h + FFN(h))``."""
    attn_w = {k[5:]: v for k, v in w.items() if k.startswith("attn.")}
    ffn_w = {k[4:]: v for k, v in w.items() if k.startswith("ffn.")}
    h = tn.layer_norm(h + mhsa(h, attn_w, n_heads, hook), w["norm1.gamma"], w["norm1.beta"], eps)
    return tn.layer_norm(h + ffn(h, ffn_w), w["norm2.gamma"], w["norm2.beta"], eps)


# -- the network ----------------------------------------------------------------


class CompletionTransformer:
    """Parameters plus the feature encoding around the encoder.

    ``feature_stats`` standardizes positions on the way in and is inverted on
    the way out; ``norm_stats`` (global positions of the training set) and
    ``skeleton`` are carried along for losses and evaluation.
    """

    def __init__(self, config, params=None, seed=0, feature_stats=None, norm_stats=None,
                 skeleton=None):
        self.config = config
        raw = init_params(config, seed) if params is None else params
        expected = param_shapes(config)
        if set(raw) != set(expected):
            missing = sorted(set(expected) - set(raw))
            extra = sorted(set(raw) - set(expected))
            raise ShapeError(f"parameter names mismatch; missing={missing} extra={extra}")
        for name, shape in expected.items():
            if tuple(np.shape(raw[name])) != shape:
                raise ShapeError(f"{name}: expected {shape}, got {np.shape(raw[name])}")
        self.params = {k: tn.parameter(v) for k, v in raw.items()}
        J = config.n_joints
        self.feature_stats = feature_stats or NormStats(np.zeros((J, 3)), np.ones((J, 3)))
        self.norm_stats = norm_stats
        self.skeleton = skeleton
        self.encoder_passes = 0
        self.attention_hook = None

    def parameters(self):
        return self.params

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def layer_weights(self, i):
        pre = f"layers.{i}."
        return {k[len(pre):]: v for k, v in self.params.items() if k.startswith(pre)}

    def cast(self, dtype):
        """Re-create parameters in ``dtype`` (for float64 gradient checks)."""
        for k, p in self.params.items():
            self.params[k] = tn.Tensor(p.data.astype(dtype), requires_grad=True, dtype=dtype)
        return self

    # features <-> poses

    def encode_features(self, positions, rotations, labels):
        """Standardized, flattened input features with ignored frames zeroed."""
        positions = np.asarray(positions, dtype=np.float64)
        labels = as_labels(labels)
        J = self.config.n_joints
        if positions.shape[-2] != J:
            raise ShapeError(f"model expects {J} joints, got {positions.shape[-2]}")
        lead = positions.shape[:-2]
        if labels.shape != lead[len(lead) - labels.ndim:]:
            raise MaskLengthMismatch(f"mask shape {labels.shape} does not match frames {lead}")
        z = self.feature_stats.standardize(positions).reshape(lead + (3 * J,))
        if self.config.features == FULL:
            z = np.concatenate([z, np.asarray(rotations).reshape(lead + (4 * J,))], axis=-1)
        return np.where((labels == IGNORED)[..., None], 0.0, z)

    def decode_positions(self, y):
        """Positions tensor in length units from the first ``3J`` output features."""
        J = self.config.n_joints
        lead = y.shape[:-1]
        z = tn.reshape(y[..., :3 * J], lead + (J, 3))
        return z * self.feature_stats.std + self.feature_stats.mean

    def decode_rotations(self, y):
        J = self.config.n_joints
        if self.config.features != FULL:
            return None
        return tn.reshape(y[..., 3 * J:], y.shape[:-1] + (J, 4))

    # forward

    def forward(self, x, labels):
        """One encoder pass over ``x`` ``(..., T, input_dim)``; returns output features."""
        x = tn.as_tensor(x)
        labels = as_labels(labels)
        cfg = self.config
        if x.shape[-1] != cfg.input_dim:
            raise ShapeError(f"input has {x.shape[-1]} features, model expects {cfg.input_dim}")
        if labels.shape != x.shape[-labels.ndim - 1:-1]:
            raise MaskLengthMismatch(f"mask shape {labels.shape} does not match input {x.shape}")
        if x.shape[-2] > cfg.max_len:
            raise ShapeError(f"{x.shape[-2]} frames exceed max_len {cfg.max_len}")
        p = self.params
        self.encoder_passes += 1
        z = embed_tokens(x, p["input_conv.weight"], p["input_conv.bias"])
        e = mixture(p["embedding.position"], p["embedding.keyframe"], labels)
        h = tn.layer_norm(z + e, p["input_norm.gamma"], p["input_norm.beta"], cfg.ln_eps)
        for i in range(cfg.n_layers):
            hook = None
            if self.attention_hook is not None:
                hook = lambda a, i=i: self.attention_hook(i, a)  # noqa: E731
            h = encoder_layer(h, self.layer_weights(i), cfg.n_heads, cfg.ln_eps, hook)
        return tn.conv1d(h, p["output_conv.weight"], p["output_conv.bias"])

    def complete_arrays(self, positions, rotations, labels):
        """Inference on prefilled arrays ``(..., T, J, 3/4)``; one encoder pass.

        Returns float64 ``(positions, rotations)`` with unit quaternions.
        """
        labels = as_labels(labels)
        x = self.encode_features(positions, rotations, labels)
        with tn.no_grad():
            y = self.forward(x, labels)
            pos = self.decode_positions(y).data.astype(np.float64)
            rot = self.decode_rotations(y)
        if rot is None:
            rot = quat.identity(pos.shape[:-1])
        else:
            rot = rot.data.astype(np.float64)
            norm = np.linalg.norm(rot, axis=-1, keepdims=True)
            rot = np.where(norm > 0, rot / np.where(norm > 0, norm, 1.0), quat.IDENTITY)
        return pos, rot

    def complete(self, seq, mask):
        """Complete one prefilled :class:`MotionSequence` in a single pass."""
        labels = as_labels(mask)
        if len(labels) != seq.n_frames:
            raise MaskLengthMismatch(f"mask has {len(labels)} frames, sequence has {seq.n_frames}")
        if seq.coord != self.config.coord:
            raise ShapeError(f"model works in {self.config.coord} coordinates, got {seq.coord}")
        pos, rot = self.complete_arrays(seq.positions, seq.rotations, labels)
        return replace(seq, positions=pos, rotations=rot)
