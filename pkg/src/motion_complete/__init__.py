"""Single-pass transformer motion completion with quaternion kinematics."""

from .bvh import BvhDocument, parse_bvh, read_bvh, write_bvh
from .data import NormStats, WindowSpec, compute_norm_stats, load_dataset, slice_windows, synth_corpus
from .estimator import MotionCompleter, PositionScaler
from .exceptions import (CheckpointError, DimensionMismatch, MaskLengthMismatch, MotionCompleteError,
                         NumericDivergence, ShapeError)
from .interpolation import InterpolationBaseline, ZeroVelocityBaseline, fill_unknown, zero_velocity
from .masks import BLEND, IGNORED, INBETWEEN, INFILL, KEYFRAME, UNKNOWN, CompletionMask, make_mask
from .metrics import l2p, l2q, npss
from .model import CompletionTransformer, ModelConfig
from .skeleton import MotionSequence, Skeleton, fk, ik, standardize_tpose, to_global, to_local
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"
