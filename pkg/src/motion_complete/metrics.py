"""Transition metrics: L2Q, L2P and NPSS.

All metrics are evaluated on the unknown frames only. Inputs are either a
single clip ``(T, J, k)`` with labels ``(T,)`` or a batch ``(N, T, J, k)``
with labels ``(N, T)`` or ``(T,)``.
"""

import numpy as np

from . import quaternion as quat
from .exceptions import MissingStats, ShapeError, TooShort
from .masks import IGNORED, UNKNOWN, as_labels


def _prepare(pred, gt, mask, width):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != width or pred.ndim not in (3, 4):
        raise ShapeError(f"expected matching (N, T, J, {width}) arrays, got {pred.shape} and {gt.shape}")
    if pred.ndim == 3:
        pred, gt = pred[None], gt[None]
    labels = np.broadcast_to(as_labels(mask), pred.shape[:2])
    unknown = labels == UNKNOWN
    if not unknown.any():
        raise ValueError("mask has no unknown frames")
    return pred, gt, unknown


def l2q(pred, gt, mask):
    """Mean over unknown frames of the L2 norm of the stacked quaternion error."""
    pred, gt, unknown = _prepare(pred, gt, mask, 4)
    pred = quat.quat_align(gt, pred)
    err = np.sqrt(np.sum((pred - gt) ** 2, axis=(-2, -1)))
    return float(err[unknown].mean())


def l2p(pred, gt, mask, stats):
    """Like :func:`l2q` on positions z-scored with training-set statistics."""
    if stats is None:
        raise MissingStats("L2P needs training-set normalization statistics")
    pred, gt, unknown = _prepare(pred, gt, mask, 3)
    diff = stats.standardize(pred) - stats.standardize(gt)
    err = np.sqrt(np.sum(diff ** 2, axis=(-2, -1)))
    return float(err[unknown].mean())


def power_spectrum(x):
    """Squared DFT magnitudes along axis 0 after removing each channel's mean."""
    x = np.asarray(x, dtype=np.float64)
    return np.abs(np.fft.fft(x - x.mean(axis=0), axis=0)) ** 2


def spectrum_emd(pred_power, gt_power):
    """1-D earth mover's distance between per-channel normalized spectra.

    Returns ``(emd, weight)`` per channel, where ``weight`` is the target's
    total power. A channel without power is a constant signal and gets all of
    its mass in the DC bin.
    """
    def normalized(p):
        total = p.sum(axis=0)
        out = np.divide(p, total, out=np.zeros_like(p), where=total > 0)
        out[0, total <= 0] = 1.0
        return out, total

    pred_n, _ = normalized(pred_power)
    gt_n, gt_total = normalized(gt_power)
    emd = np.abs(np.cumsum(pred_n, axis=0) - np.cumsum(gt_n, axis=0)).sum(axis=0)
    return emd, gt_total


def npss(pred, gt, mask, span="transition"):
    """Power-weighted spectral EMD over the flattened quaternion channels.

    ``span="transition"`` uses the unknown frames of each clip;
    ``span="window"`` uses every non-ignored frame.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim not in (3, 4):
        raise ShapeError(f"expected matching (N, T, J, k) arrays, got {pred.shape} and {gt.shape}")
    if pred.ndim == 3:
        pred, gt = pred[None], gt[None]
    labels = np.broadcast_to(as_labels(mask), pred.shape[:2])
    emds, weights = [], []
    for n in range(pred.shape[0]):
        if span == "transition":
            frames = labels[n] == UNKNOWN
        elif span == "window":
            frames = labels[n] != IGNORED
        else:
            raise ValueError(f"unknown span {span!r}")
        if frames.sum() < 2:
            raise TooShort("NPSS needs at least two frames")
        p = pred[n][frames].reshape(frames.sum(), -1)
        g = gt[n][frames].reshape(frames.sum(), -1)
        if pred.shape[-1] == 4:
            p = quat.quat_align(gt[n][frames], pred[n][frames]).reshape(p.shape)
        emd, w = spectrum_emd(power_spectrum(p), power_spectrum(g))
        emds.append(emd)
        weights.append(w)
    emd = np.concatenate(emds)
    weights = np.concatenate(weights)
    total = weights.sum()
    if total == 0:
        return float(emd.mean())
    return float(np.sum(emd * weights) / total)
