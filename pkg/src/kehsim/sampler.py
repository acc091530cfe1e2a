"""Sampler: duty-cycled capacitor-voltage sampling, rate estimation and dual-harvester fusion."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from kehsim.activity import ActivityLabel, PehPosition
from kehsim.circuit import VoltageTrace
from kehsim.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

# A dense-trace drop larger than this within one step can only be a buck discharge.
DISCHARGE_STEP_DROP_V = 1e-3


@dataclass(frozen=True)
class AdcSpec:
    """ADC resolution and reference voltage."""

    bits: int = 10
    v_ref: float = 5.0

    def __post_init__(self) -> None:
        if not 8 <= self.bits <= 16:
            raise ConfigError(f"ADC bits must be in [8, 16], got {self.bits}")
        if not self.v_ref > 0:
            raise ConfigError(f"ADC v_ref must be > 0, got {self.v_ref}")

    @property
    def max_level(self) -> int:
        return 2**self.bits - 1

    @property
    def lsb(self) -> float:
        return self.v_ref / self.max_level

    def level(self, v):
        """ADC code(s) for voltage(s) v: floor of v / v_ref * (2^bits - 1), clipped."""
        raw = np.floor(np.asarray(v, dtype=float) / self.v_ref * self.max_level + 1e-9)
        return np.clip(raw, 0, self.max_level).astype(np.int64)

    def quantize(self, v):
        """Voltage(s) v after a round trip through the ADC."""
        return self.level(v) * self.lsb


@dataclass(frozen=True)
class SamplerConfig:
    """Duty-cycled sampling and rate-estimation settings."""

    t_c: float = 5.0
    adc: AdcSpec = field(default_factory=AdcSpec)
    random_phase: bool = False
    flat_epsilon: float = 1e-4
    flat_drop_v: float = 0.05
    settle: bool = True
    settle_v: float = 3.08
    drop_underestimated: bool = False

    def __post_init__(self) -> None:
        if not self.t_c > 0:
            raise ConfigError(f"t_c must be > 0, got {self.t_c}")
        if self.t_c > 5.0:
            logger.debug("t_c=%.1f s exceeds the 5 s stair sojourn time", self.t_c)
        if self.flat_epsilon < 0 or self.flat_drop_v < 0:
            raise ConfigError("flat_epsilon and flat_drop_v must be >= 0")


@dataclass(frozen=True)
class SparseSample:
    """
    One MCU wake-up reading.

    ``segment_in`` / ``segment_out`` identify the activity runs of the dense steps
    ending and starting at this instant; ``discharges`` counts buck discharges so far.
    """

    t: float
    v: float
    label: str
    segment_in: int = 0
    segment_out: int = 0
    discharges: int = 0


@dataclass(frozen=True)
class RateSample:
    """Positive capacitor-voltage increment rate over one window."""

    t_end: float
    r: float
    position: PehPosition
    label: ActivityLabel
    delta_v: float = 0.0

    def __post_init__(self) -> None:
        if not self.r > 0:
            raise DomainError(f"rate sample must have r > 0, got {self.r}")


@dataclass(frozen=True)
class FlatWindow:
    """Window with no measurable charging (stationary or leakage only)."""

    t_end: float
    label: ActivityLabel


@dataclass
class RateStats:
    """Counters of how candidate windows were handled."""

    candidates: int = 0
    kept: int = 0
    transition: int = 0
    flat: int = 0
    non_positive: int = 0
    settling: int = 0
    underestimated: int = 0


@dataclass
class RateSeries:
    """Rates of one harvester position plus flat windows and counters."""

    position: PehPosition
    t_c: float
    samples: List[RateSample] = field(default_factory=list)
    flat: List[FlatWindow] = field(default_factory=list)
    stats: RateStats = field(default_factory=RateStats)


@dataclass(frozen=True)
class FeatureVector:
    """Fused feature <r_rear, r_front> of one window."""

    r_rear: float
    r_front: float
    label: ActivityLabel
    t_end: float = 0.0


def _segments(labels: np.ndarray) -> np.ndarray:
    changes = np.zeros(len(labels), dtype=np.int64)
    if len(labels) > 1:
        changes[1:] = labels[1:] != labels[:-1]
    return np.cumsum(changes)


def _discharge_counts(trace: VoltageTrace) -> np.ndarray:
    if trace.discharges is not None:
        return np.asarray(trace.discharges, dtype=np.int64)
    dropping = np.diff(trace.samples) < -DISCHARGE_STEP_DROP_V
    onset = dropping & ~np.concatenate([[False], dropping[:-1]])
    return np.concatenate([[0], np.cumsum(onset)])


def sparse_sample(trace: VoltageTrace, cfg: SamplerConfig, seed: int = 0) -> List[SparseSample]:
    """
    Read the capacitor voltage once every t_c seconds through the ADC.

    Args:
        trace: Dense voltage trace
        cfg: Sampler configuration
        seed: Seed for the sampling phase when cfg.random_phase is set

    Returns:
        Samples at t = offset, offset + t_c, ... (offset 0 unless random_phase)

    Raises:
        DomainError: If the trace is shorter than 2 * t_c
    """
    if trace.duration < 2 * cfg.t_c - 1e-9:
        raise DomainError(
            f"trace of {trace.duration:.3f} s is shorter than 2 * t_c = {2 * cfg.t_c} s"
        )
    offset = 0.0
    if cfg.random_phase:
        offset = float(np.random.default_rng(seed).uniform(0.0, cfg.t_c))
        offset = round(offset / trace.dt) * trace.dt

    count = int(np.floor((trace.duration - offset) / cfg.t_c + 1e-9)) + 1
    times = offset + np.arange(count) * cfg.t_c
    index = np.minimum(np.round(times / trace.dt).astype(np.int64), len(trace) - 1)

    segments = _segments(np.asarray(trace.labels))
    segment_out = np.concatenate([segments[1:], segments[-1:]])
    discharges = _discharge_counts(trace)
    volts = cfg.adc.quantize(trace.samples[index])

    return [
        SparseSample(
            t=float(times[k]),
            v=float(volts[k]),
            label=str(trace.labels[i]),
            segment_in=int(segments[i]),
            segment_out=int(segment_out[i]),
            discharges=int(discharges[i]),
        )
        for k, i in enumerate(index)
    ]


def estimate_rates(
    samples: Sequence[SparseSample],
    cfg: SamplerConfig,
    position: PehPosition = PehPosition.REAR,
) -> RateSeries:
    """
    Estimate r = (V(t + t_c) - V(t)) / t_c for every pair of adjacent samples.

    Windows spanning an activity change are dropped. Windows that barely move
    (r < flat_epsilon and a drop no larger than flat_drop_v, no buck discharge)
    are recorded as flat. Remaining windows with V(t + t_c) <= V(t) are
    discarded.
    A kept window that spans a buck discharge is counted as underestimated.

    cfg.settle (on by default) adds one discard rule on top of these: a
    positive window whose starting reading is below the ADC reading of
    settle_v is skipped and counted as settling. It removes the start-up
    charge from 0 V, before the buck first reaches its rising threshold.
    Set settle=False to keep every positive window.

    Args:
        samples: Time-ordered sparse samples with uniform spacing t_c
        cfg: Sampler configuration
        position: Harvester the samples came from

    Returns:
        RateSeries (possibly empty)
    """
    series = RateSeries(position=PehPosition(position), t_c=cfg.t_c)
    stats = series.stats
    # Readings sit on ADC levels; half an LSB absorbs rounding in sample files.
    settle_level = float(cfg.adc.quantize(cfg.settle_v)) - cfg.adc.lsb / 2
    for a, b in zip(samples, samples[1:]):
        stats.candidates += 1
        if a.segment_out != b.segment_in:
            stats.transition += 1
            continue
        label = ActivityLabel(b.label)
        delta_v = b.v - a.v
        r = delta_v / cfg.t_c
        discharged = b.discharges > a.discharges
        if r < cfg.flat_epsilon and delta_v >= -cfg.flat_drop_v and not discharged:
            stats.flat += 1
            series.flat.append(FlatWindow(t_end=b.t, label=label))
            continue
        if delta_v <= 0:
            stats.non_positive += 1
            continue
        if cfg.settle and a.v < settle_level:
            stats.settling += 1
            continue
        if discharged:
            stats.underestimated += 1
            if cfg.drop_underestimated:
                continue
        series.samples.append(
            RateSample(t_end=b.t, r=r, position=series.position, label=label, delta_v=delta_v)
        )
        stats.kept += 1
    logger.debug("%s rates: %s", series.position.value, stats)
    return series


def sample_spacing(samples: Sequence[SparseSample]) -> float:
    """
    Wake-up period of an evenly spaced sample sequence.

    Raises:
        DomainError: If there are fewer than two samples or the spacing varies
    """
    if len(samples) < 2:
        raise DomainError(f"need at least two samples, got {len(samples)}")
    steps = np.diff([s.t for s in samples])
    if not np.allclose(steps, steps[0], rtol=0.0, atol=1e-6):
        raise DomainError("samples are not evenly spaced")
    return round(float(steps[0]), 6)


def _key(t: float) -> float:
    return round(t, 6)


def fuse(
    front: Union[RateSeries, Sequence[RateSample]],
    rear: Union[RateSeries, Sequence[RateSample]],
) -> List[FeatureVector]:
    """
    Pair front and rear rates of the same windows into feature vectors.

    A window yields a vector only if both positions kept it (both-or-nothing),
    or if both positions saw a flat window, which yields (0, 0).

    Args:
        front: Front-harvester RateSeries (or plain list of RateSample)
        rear: Rear-harvester RateSeries (or plain list of RateSample)

    Returns:
        FeatureVectors ordered by window end time
    """
    def split(series) -> Tuple[Dict[float, RateSample], Dict[float, FlatWindow]]:
        if isinstance(series, RateSeries):
            rates, flats = series.samples, series.flat
        else:
            rates, flats = series, []
        return {_key(s.t_end): s for s in rates}, {_key(w.t_end): w for w in flats}

    front_rates, front_flat = split(front)
    rear_rates, rear_flat = split(rear)

    vectors = []
    for key in sorted(set(front_rates) | set(front_flat)):
        if key in front_rates and key in rear_rates:
            f, r = front_rates[key], rear_rates[key]
            if f.label is r.label:
                vectors.append(
                    FeatureVector(r_rear=r.r, r_front=f.r, label=f.label, t_end=f.t_end)
                )
        elif key in front_flat and key in rear_flat:
            w = front_flat[key]
            if w.label is rear_flat[key].label:
                vectors.append(FeatureVector(r_rear=0.0, r_front=0.0, label=w.label, t_end=w.t_end))
    return vectors


def extract_features(
    front: VoltageTrace,
    rear: VoltageTrace,
    cfg: SamplerConfig,
    seed: int = 0,
) -> Tuple[List[FeatureVector], RateSeries, RateSeries]:
    """
    Run sampling, rate estimation and fusion for one session.

    Both positions share the wake-up instants (same seed).

    Returns:
        Tuple of (feature vectors, front RateSeries, rear RateSeries)
    """
    front_series = estimate_rates(sparse_sample(front, cfg, seed), cfg, PehPosition.FRONT)
    rear_series = estimate_rates(sparse_sample(rear, cfg, seed), cfg, PehPosition.REAR)
    return fuse(front_series, rear_series), front_series, rear_series


def class_separation(
    vectors: Sequence[FeatureVector], columns: Optional[Sequence[str]] = None
) -> float:
    """
    Standardized inter-class distance of feature vectors.

    Mean Euclidean distance between class centroids divided by the pooled
    within-class standard deviation (RMS distance of points to their centroid).

    Args:
        vectors: Labeled feature vectors (at least two classes)
        columns: Feature attributes to use (default: r_rear and r_front)

    Returns:
        Separation ratio (inf if every class is a single point)
    """
    columns = list(columns or ("r_rear", "r_front"))
    labels = sorted({v.label for v in vectors}, key=lambda lab: list(ActivityLabel).index(lab))
    if len(labels) < 2:
        raise DomainError("class separation needs at least two classes")
    X = np.array([[getattr(v, c) for c in columns] for v in vectors], dtype=float)
    y = np.array([v.label for v in vectors])

    centroids = np.array([X[y == lab].mean(axis=0) for lab in labels])
    spread = np.concatenate([X[y == lab] - c for lab, c in zip(labels, centroids)])
    within = float(np.sqrt(np.mean(np.sum(spread**2, axis=1))))
    pairs = [
        np.linalg.norm(centroids[i] - centroids[j])
        for i in range(len(labels))
        for j in range(i + 1, len(labels))
    ]
    between = float(np.mean(pairs))
    return between / within if within > 0 else float("inf")
