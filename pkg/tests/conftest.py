"""Shared fixtures: small configurations and synthetic feature data."""

import numpy as np
import pytest

from kehsim.activity import ActivityLabel, PehPosition, SourceSignal
from kehsim.sampler import FeatureVector
from kehsim.utils.config import load_config

# Short sessions that start inside the UVLO band so no warm-up is discarded.
# Three 60 s stair runs leave at least 3 fused windows per class at t_c = 5.
SMALL_OVERRIDES = (
    "sim.dt=0.0025",
    "sim.v0=3.5",
    "subjects.count=1",
    "schedule.segments=WALK:60,SD:60,SU:60,RUN:60,ST:60",
    "schedule.repeats=3",
    "classifier.kinds=knn",
    "eval.folds=3",
    "eval.repetitions=1",
    "sweep.t_c=[2,5]",
)


@pytest.fixture
def small_overrides():
    return list(SMALL_OVERRIDES)


@pytest.fixture
def small_config():
    return load_config(overrides=SMALL_OVERRIDES)


def constant_signal(v_s: float, seconds: float, dt: float, label: str = "WALK") -> SourceSignal:
    n = int(round(seconds / dt))
    return SourceSignal(
        dt=dt,
        v_s_series=np.full(n, float(v_s)),
        labels=np.full(n, label),
        position=PehPosition.FRONT,
    )


def blob_vectors(centers, n_per_class: int = 30, spread: float = 0.0, seed: int = 0):
    """Fused vectors around (r_rear, r_front) centers, one center per label."""
    rng = np.random.default_rng(seed)
    vectors = []
    for label, (rear, front) in centers.items():
        for i in range(n_per_class):
            dr, df = rng.normal(0.0, spread, 2) if spread else (i * 1e-5, i * 1e-5)
            vectors.append(
                FeatureVector(r_rear=rear + dr, r_front=front + df, label=ActivityLabel(label))
            )
    return vectors


SEPARABLE_CENTERS = {
    "WALK": (0.016, 0.011),
    "RUN": (0.040, 0.033),
    "SU": (0.026, 0.021),
    "SD": (0.018, 0.021),
    "ST": (0.0, 0.0),
}


@pytest.fixture
def separable_vectors():
    return blob_vectors(SEPARABLE_CENTERS, n_per_class=30)
