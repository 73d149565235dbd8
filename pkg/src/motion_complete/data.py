"""Dataset plumbing: windows, normalization statistics, CSV and synthetic motion."""

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from . import quaternion as quat
from .bvh import euler_to_quat, read_bvh
from .exceptions import EmptyDataset, SequenceTooShort, ShapeError
from .skeleton import GLOBAL, LOCAL, MotionSequence, Skeleton, depth_first_order, to_global

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class WindowSpec:
    width: int
    offset: int

    def __post_init__(self):
        if self.width < 2:
            raise ValueError("window width must be at least 2")
        if not 1 <= self.offset <= self.width:
            raise ValueError("window offset must be in [1, width]")


TRAIN_WINDOWS = WindowSpec(50, 20)
TEST_WINDOWS = WindowSpec(65, 25)


def slice_windows(seq, spec):
    """Cut fixed-width windows starting at 0, offset, 2*offset, ..."""
    T = seq.n_frames
    if T < spec.width:
        raise SequenceTooShort(f"sequence has {T} frames, window needs {spec.width}")
    starts = range(0, T - spec.width + 1, spec.offset)
    return [seq[s:s + spec.width] for s in starts]


@dataclass(frozen=True)
class NormStats:
    """Per-joint, per-axis mean and std of global positions."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if mean.ndim != 2 or mean.shape[1] != 3 or std.shape != mean.shape:
            raise ShapeError(f"mean and std must both be (J, 3), got {mean.shape} and {std.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def n_joints(self):
        return self.mean.shape[0]

    def standardize(self, positions):
        return (np.asarray(positions) - self.mean) / self.std

    def unstandardize(self, z):
        return np.asarray(z) * self.std + self.mean

    def to_dict(self):
        return {
            "shape": list(self.mean.shape),
            "mean": self.mean.ravel().tolist(),
            "std": self.std.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        shape = tuple(d["shape"])
        return cls(np.reshape(d["mean"], shape), np.reshape(d["std"], shape))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def compute_norm_stats(sequences, floor=STD_FLOOR):
    """Mean/std of global positions pooled over every frame of ``sequences``."""
    arrays = [np.asarray(getattr(s, "positions", s), dtype=np.float64) for s in sequences]
    if not arrays:
        raise EmptyDataset("cannot compute statistics of an empty dataset")
    stacked = np.concatenate([a.reshape(-1, *a.shape[-2:]) for a in arrays], axis=0)
    return NormStats(stacked.mean(axis=0), np.maximum(stacked.std(axis=0), floor))


# -- positions-only CSV -------------------------------------------------------


def read_positions_csv(path, frame_rate=30.0):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "frame" or (len(header) - 1) % 3:
            raise ValueError(f"{path}: expected header 'frame,j0x,j0y,j0z,...'")
        rows = [[float(v) for v in row[1:]] for row in reader if row]
    if not rows:
        raise SequenceTooShort(f"{path}: no frames")
    positions = np.array(rows).reshape(len(rows), -1, 3)
    rotations = quat.identity(positions.shape[:2])
    return MotionSequence(positions, rotations, coord=GLOBAL, frame_rate=frame_rate)


def write_positions_csv(path, seq):
    J = seq.n_joints
    header = ["frame"] + [f"j{j}{axis}" for j in range(J) for axis in "xyz"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, row in enumerate(seq.positions.reshape(seq.n_frames, -1)):
            writer.writerow([t] + [f"{v:.6f}" for v in row])


def load_sequence(path):
    """Load one ``.bvh`` (local) or ``.csv`` (global, positions only) file."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".bvh":
        return read_bvh(path).to_sequence()
    if ext == ".csv":
        return read_positions_csv(path)
    raise ValueError(f"unsupported file type {ext!r}")


def load_dataset(directory):
    """Load every BVH/CSV file in ``directory`` in sorted filename order."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"data directory {directory!r} does not exist")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith((".bvh", ".csv")))
    if not names:
        raise EmptyDataset(f"no .bvh or .csv files in {directory!r}")
    return [load_sequence(os.path.join(directory, n)) for n in names]


# -- synthetic motion ---------------------------------------------------------

SYNTH_COMPONENTS = 3
SYNTH_MAX_AMPLITUDE = 0.6  # radians, summed over components per channel
SYNTH_FREQ_RANGE = (0.25, 1.25)  # Hz
SYNTH_ROOT_SPEED = 120.0  # length units per second, upper bound
SYNTH_ROOT_HEIGHT = 90.0


def synth_skeleton(n_joints):
    """Deterministic binary-tree skeleton, numbered depth-first."""
    if n_joints < 2:
        raise ValueError("need at least two joints")
    rng = np.random.default_rng(10_000 + n_joints)
    heap = [-1] + [(j - 1) // 2 for j in range(1, n_joints)]
    order = depth_first_order(heap)
    rank = {old: new for new, old in enumerate(order)}
    parents = [-1] + [rank[heap[old]] for old in order[1:]]
    directions = rng.normal(size=(n_joints, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    offsets = directions * rng.uniform(10.0, 30.0, size=(n_joints, 1))
    offsets[0] = 0.0
    return Skeleton(tuple(parents), offsets)


def _band_limited(rng, n_channels, t):
    amps = rng.dirichlet(np.ones(SYNTH_COMPONENTS), size=n_channels)
    amps *= rng.uniform(0.2, 1.0, size=(n_channels, 1)) * SYNTH_MAX_AMPLITUDE
    freqs = rng.uniform(*SYNTH_FREQ_RANGE, size=(n_channels, SYNTH_COMPONENTS))
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_channels, SYNTH_COMPONENTS))
    arg = 2 * np.pi * freqs[None] * t[:, None, None] + phases[None]
    return np.sum(amps[None] * np.sin(arg), axis=-1)


def synth_motion(seed, n_frames, n_joints, frame_rate=30.0, skeleton=None):
    """Smooth, deterministic local motion for desk-scale experiments.

    Every joint's Euler channels are sums of ``SYNTH_COMPONENTS`` sinusoids
    whose amplitudes add up to at most ``SYNTH_MAX_AMPLITUDE``; the root
    drifts along a smoothly turning heading.
    """
    if n_frames < 2:
        raise ValueError("need at least two frames")
    skel = skeleton or synth_skeleton(n_joints)
    if skel.n_joints != n_joints:
        raise ShapeError("skeleton joint count does not match n_joints")
    rng = np.random.default_rng(seed)
    t = np.arange(n_frames) / frame_rate

    angles = _band_limited(rng, 3 * n_joints, t).reshape(n_frames, n_joints, 3)
    heading = rng.uniform(0.0, 2 * np.pi) + _band_limited(rng, 1, t)[:, 0]
    angles[:, 0, 1] += heading
    rotations = quat.align_sequence(euler_to_quat(angles, "XYZ"))

    speed = rng.uniform(0.0, SYNTH_ROOT_SPEED)
    velocity = speed * np.stack([np.cos(heading), np.zeros_like(heading), -np.sin(heading)], axis=-1)
    root = np.cumsum(velocity, axis=0) / frame_rate
    root -= root[0]
    root[:, 1] = SYNTH_ROOT_HEIGHT + 5.0 * _band_limited(rng, 1, t)[:, 0]

    positions = np.broadcast_to(skel.offsets, (n_frames, n_joints, 3)).copy()
    positions[:, 0] = root
    return MotionSequence(positions, rotations, coord=LOCAL, frame_rate=frame_rate, skeleton=skel)


def synth_corpus(seed, count, n_frames, n_joints, coord=GLOBAL):
    seeds = np.random.SeedSequence(seed).generate_state(count)
    seqs = [synth_motion(int(s), n_frames, n_joints) for s in seeds]
    if coord == GLOBAL:
        seqs = [to_global(s) for s in seqs]
    return seqs


def with_continuous_rotations(seq):
    """Hemisphere-align rotations along time for every joint."""
    return replace(seq, rotations=quat.align_sequence(seq.rotations, axis=0))
