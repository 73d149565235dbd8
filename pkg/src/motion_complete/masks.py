"""Per-frame completion labels and scenario mask construction."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DoesNotFit, NoKeyframes

KEYFRAME = 0
UNKNOWN = 1
IGNORED = 2

INBETWEEN = "inbetween"
INFILL = "infill"
BLEND = "blend"
SCENARIOS = (INBETWEEN, INFILL, BLEND)

CONTEXT_FRAMES = 10

# Inclusive sampling ranges for the scenario parameter during training.
PARAM_RANGES = {
    INBETWEEN: (5, 39),
    INFILL: (5, 30),
    BLEND: (5, 32),
}


def as_labels(mask):
    """Return an int8 label array from a mask, label sequence or array."""
    labels = np.asarray(getattr(mask, "labels", mask))
    if labels.dtype.kind not in "iu":
        raise TypeError("mask labels must be integers")
    if labels.size and (labels.min() < KEYFRAME or labels.max() > IGNORED):
        raise IndexError("mask labels must be in {0, 1, 2}")
    return labels.astype(np.int8)


@dataclass(frozen=True)
class CompletionMask:
    """Frame labels: 0 keyframe, 1 unknown, 2 ignored."""

    labels: np.ndarray

    def __post_init__(self):
        labels = as_labels(self.labels)
        if labels.ndim != 1:
            raise ValueError("mask labels must be one-dimensional")
        if not np.any(labels == KEYFRAME):
            raise NoKeyframes("a completion mask needs at least one keyframe")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    @property
    def keyframes(self):
        return np.flatnonzero(self.labels == KEYFRAME)

    @property
    def unknown(self):
        return np.flatnonzero(self.labels == UNKNOWN)

    @property
    def active(self):
        return self.labels != IGNORED


def make_mask(kind, param, n_frames):
    """Build the label layout for one of the three completion scenarios.

    ``inbetween``: ten context keyframes, ``param`` unknown frames, one target
    keyframe. ``infill``: keyframes every ``param`` frames from frame 0.
    ``blend``: ``param // 2`` keyframes on each side of ``param`` unknown
    frames. Everything past the active span is ignored.
    """
    param = int(param)
    labels = np.full(n_frames, IGNORED, dtype=np.int8)
    if kind == INBETWEEN:
        need = CONTEXT_FRAMES + param + 1
        if param < 1 or need > n_frames:
            raise DoesNotFit(f"in-betweening of length {param} needs {need} frames, have {n_frames}")
        labels[:CONTEXT_FRAMES] = KEYFRAME
        labels[CONTEXT_FRAMES:CONTEXT_FRAMES + param] = UNKNOWN
        labels[CONTEXT_FRAMES + param] = KEYFRAME
    elif kind == INFILL:
        if param < 1 or param >= n_frames:
            raise DoesNotFit(f"keyframe interval {param} does not fit {n_frames} frames")
        last = (n_frames - 1) // param * param
        labels[:last + 1] = UNKNOWN
        labels[0:last + 1:param] = KEYFRAME
    elif kind == BLEND:
        side = max(1, param // 2)
        need = 2 * side + param
        if param < 1 or need > n_frames:
            raise DoesNotFit(f"blend window {param} needs {need} frames, have {n_frames}")
        labels[:side] = KEYFRAME
        labels[side:side + param] = UNKNOWN
        labels[side + param:need] = KEYFRAME
    else:
        raise ValueError(f"unknown scenario {kind!r}; expected one of {SCENARIOS}")
    return CompletionMask(labels)


def max_param(kind, n_frames):
    """Largest scenario parameter that fits ``n_frames``."""
    if kind == INBETWEEN:
        return n_frames - CONTEXT_FRAMES - 1
    if kind == INFILL:
        return n_frames - 1
    if kind == BLEND:
        return (n_frames + 1) // 2 if n_frames >= 3 else 0
    raise ValueError(f"unknown scenario {kind!r}")


def sample_mask(rng, n_frames, kinds=(INBETWEEN,), ranges=None):
    """Draw a scenario and a parameter uniformly from its range."""
    ranges = {**PARAM_RANGES, **(ranges or {})}
    kind = kinds[rng.integers(len(kinds))]
    lo, hi = ranges[kind]
    hi = min(hi, max_param(kind, n_frames))
    # blend's bound above is loose for even windows
    while kind == BLEND and hi > lo and 2 * max(1, hi // 2) + hi > n_frames:
        hi -= 1
    if hi < lo:
        raise DoesNotFit(f"{kind} range {ranges[kind]} does not fit {n_frames} frames")
    return make_mask(kind, rng.integers(lo, hi + 1), n_frames)


def _is_single(masks):
    if isinstance(masks, CompletionMask):
        return True
    if isinstance(masks, np.ndarray):
        return masks.ndim == 1
    masks = list(masks)
    return bool(masks) and isinstance(masks[0], (int, np.integer))


def broadcast_masks(masks, n):
    """One mask per sequence from a shared mask or a list of masks."""
    if _is_single(masks):
        return [masks] * n
    masks = list(masks)
    if len(masks) != n:
        raise ValueError(f"got {len(masks)} masks for {n} sequences")
    return masks
