import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from motion_complete.data import synth_corpus, synth_motion
from motion_complete.skeleton import Skeleton

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def chain():
    """Three joints in a line along +y."""
    return Skeleton((-1, 0, 1), [[0, 0, 0], [0, 10, 0], [0, 5, 0]], ("hips", "spine", "head"))


@pytest.fixture
def local_clip():
    return synth_motion(7, 40, 5)


@pytest.fixture
def global_corpus():
    return synth_corpus(3, 4, 40, 5)


def random_quats(rng, shape):
    q = rng.normal(size=tuple(shape) + (4,))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def random_skeleton(rng, n_joints):
    parents = [-1] + [int(rng.integers(0, j)) for j in range(1, n_joints)]
    return Skeleton(tuple(parents), rng.uniform(-20, 20, (n_joints, 3)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
