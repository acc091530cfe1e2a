"""Activity: synthetic per-activity, per-harvester charging-source signals."""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from kehsim.errors import ConfigError
from kehsim.utils.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)

MIN_SEGMENT_S = 5.0
JITTER_TRUNCATION = 2.0


class ActivityLabel(str, Enum):
    """Activity classes, declared in the fixed tie-breaking order."""

    WALK = "WALK"
    RUN = "RUN"
    SU = "SU"
    SD = "SD"
    ST = "ST"


LABEL_ORDER: Tuple[ActivityLabel, ...] = tuple(ActivityLabel)


class PehPosition(str, Enum):
    """Placement of a piezoelectric harvester in the shoe."""

    FRONT = "front"
    REAR = "rear"


@dataclass(frozen=True)
class PositionProfile:
    """Foot-strike burst model for one harvester."""

    strike_rate: float
    v_s_mean: float
    v_s_jitter_rel: float = 0.1
    burst_duty: float = 0.4

    def __post_init__(self) -> None:
        if self.strike_rate < 0:
            raise ConfigError(f"strike_rate must be >= 0, got {self.strike_rate}")
        if self.v_s_mean < 0:
            raise ConfigError(f"v_s_mean must be >= 0, got {self.v_s_mean}")
        if not 0 <= self.v_s_jitter_rel < 1:
            raise ConfigError(f"v_s_jitter_rel must be in [0, 1), got {self.v_s_jitter_rel}")
        if not 0 < self.burst_duty <= 1:
            raise ConfigError(f"burst_duty must be in (0, 1], got {self.burst_duty}")


@dataclass(frozen=True)
class ActivityProfile:
    """Source parameters of one activity at both harvester positions."""

    label: ActivityLabel
    front: PositionProfile
    rear: PositionProfile

    def position(self, position: PehPosition) -> PositionProfile:
        return self.front if PehPosition(position) is PehPosition.FRONT else self.rear


@dataclass(frozen=True)
class SubjectParams:
    """Per-subject variation of gait intensity and cadence."""

    id: str
    intensity_scale: float = 1.0
    cadence_scale: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("intensity_scale", "cadence_scale"):
            value = getattr(self, name)
            if not 0.5 <= value <= 2.0:
                raise ConfigError(f"subject {self.id}: {name}={value} outside [0.5, 2.0]")


@dataclass(frozen=True, eq=False)
class SourceSignal:
    """Piecewise-constant rectified source voltage with one activity label per step."""

    dt: float
    v_s_series: np.ndarray
    labels: np.ndarray
    position: PehPosition

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigError(f"source dt must be > 0, got {self.dt}")
        if len(self.v_s_series) == 0:
            raise ConfigError("source signal is empty")
        if len(self.labels) != len(self.v_s_series):
            raise ValueError("source labels and values differ in length")
        if float(np.min(self.v_s_series)) < 0:
            raise ValueError("source signal contains negative voltages")

    @property
    def duration(self) -> float:
        return len(self.v_s_series) * self.dt

    @property
    def label(self) -> Optional[ActivityLabel]:
        """The single activity of this signal, or None if it spans several."""
        first = self.labels[0]
        if np.all(self.labels == first):
            return ActivityLabel(first)
        return None


# Charging rate r ~ duty * (v_s - V) / (R C) - V / (R_leak C) inside the UVLO band.
# Targets (rear, front) in V/s: WALK (0.034, 0.025), SD (0.038, 0.123),
# SU (0.048, 0.127), RUN (0.274, 0.254). Front SD/SU and rear WALK/SD overlap;
# RUN crosses the band within one window and aliases below the stair rates.
DEFAULT_INTENSITY: Dict[ActivityLabel, Dict[PehPosition, PositionProfile]] = {
    ActivityLabel.WALK: {
        PehPosition.FRONT: PositionProfile(strike_rate=1.8, v_s_mean=22.2, burst_duty=0.4),
        PehPosition.REAR: PositionProfile(strike_rate=1.8, v_s_mean=28.5, burst_duty=0.4),
    },
    ActivityLabel.RUN: {
        PehPosition.FRONT: PositionProfile(strike_rate=2.6, v_s_mean=210.0, burst_duty=0.35),
        PehPosition.REAR: PositionProfile(strike_rate=2.6, v_s_mean=226.5, burst_duty=0.35),
    },
    ActivityLabel.SU: {
        PehPosition.FRONT: PositionProfile(strike_rate=1.6, v_s_mean=94.0, burst_duty=0.4),
        PehPosition.REAR: PositionProfile(strike_rate=1.6, v_s_mean=38.3, burst_duty=0.4),
    },
    ActivityLabel.SD: {
        PehPosition.FRONT: PositionProfile(strike_rate=2.0, v_s_mean=91.2, burst_duty=0.4),
        PehPosition.REAR: PositionProfile(strike_rate=2.0, v_s_mean=31.3, burst_duty=0.4),
    },
    ActivityLabel.ST: {
        PehPosition.FRONT: PositionProfile(strike_rate=0.0, v_s_mean=0.0, burst_duty=0.4),
        PehPosition.REAR: PositionProfile(strike_rate=0.0, v_s_mean=0.0, burst_duty=0.4),
    },
}

IntensityTable = Mapping[ActivityLabel, Mapping[PehPosition, PositionProfile]]


def with_jitter(table: IntensityTable, jitter_rel: float) -> Dict:
    """Copy of an intensity table with every position's jitter set to jitter_rel."""
    return {
        label: {pos: replace(pp, v_s_jitter_rel=jitter_rel) for pos, pp in per_pos.items()}
        for label, per_pos in table.items()
    }


def make_profile(
    label: ActivityLabel,
    subject: SubjectParams,
    table: Optional[IntensityTable] = None,
) -> ActivityProfile:
    """
    Build the activity profile of one subject.

    Args:
        label: Activity
        subject: Subject parameters
        table: Intensity table (defaults to DEFAULT_INTENSITY)

    Returns:
        ActivityProfile with v_s_mean scaled by intensity_scale and strike_rate
        scaled by cadence_scale
    """
    table = DEFAULT_INTENSITY if table is None else table
    label = ActivityLabel(label)
    try:
        per_pos = table[label]
    except KeyError:
        raise ConfigError(f"no intensity profile for activity {label.value}") from None

    def scaled(pp: PositionProfile) -> PositionProfile:
        return replace(
            pp,
            strike_rate=pp.strike_rate * subject.cadence_scale,
            v_s_mean=pp.v_s_mean * subject.intensity_scale,
        )

    return ActivityProfile(
        label=label,
        front=scaled(per_pos[PehPosition.FRONT]),
        rear=scaled(per_pos[PehPosition.REAR]),
    )


def _truncated_normal(rng: np.random.Generator, size: int, limit: float) -> np.ndarray:
    z = rng.standard_normal(size)
    bad = np.abs(z) > limit
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > limit
    return z


def generate_source(
    profile: ActivityProfile,
    position: PehPosition,
    duration: float,
    dt: float,
    seed: int,
) -> SourceSignal:
    """
    Generate the foot-strike source signal of one activity at one position.

    Bursts start at t = k / strike_rate and last burst_duty / strike_rate seconds.
    Each burst has amplitude v_s_mean * (1 + jitter_rel * z), z drawn from a
    standard normal truncated at +-2; the source is zero between bursts.

    Args:
        profile: Activity profile
        position: Harvester position
        duration: Signal length in seconds (>= 1)
        dt: Step in seconds
        seed: Seed for burst amplitudes

    Returns:
        SourceSignal labeled with the profile's activity
    """
    if duration < 1.0:
        raise ConfigError(f"duration must be >= 1 s, got {duration}")
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    position = PehPosition(position)
    pp = profile.position(position)
    n = int(round(duration / dt))
    values = np.zeros(n)

    if pp.strike_rate > 0 and pp.v_s_mean > 0:
        cycles = np.arange(n) * dt * pp.strike_rate + 1e-9
        burst_index = np.floor(cycles).astype(np.int64)
        in_burst = (cycles - burst_index) < pp.burst_duty
        rng = np.random.default_rng(seed)
        z = _truncated_normal(rng, int(burst_index[-1]) + 1, JITTER_TRUNCATION)
        amplitudes = np.clip(pp.v_s_mean * (1.0 + pp.v_s_jitter_rel * z), 0.0, None)
        values = np.where(in_burst, amplitudes[burst_index], 0.0)

    labels = np.full(n, profile.label.value)
    return SourceSignal(dt=dt, v_s_series=values, labels=labels, position=position)


def parse_schedule(text: str, repeats: int = 1) -> List[Tuple[ActivityLabel, float]]:
    """
    Parse a ``label:seconds`` comma list, e.g. ``"WALK:20,SU:8,SD:8"``.

    Args:
        text: Schedule string
        repeats: Number of times to repeat the whole list

    Returns:
        List of (activity, duration) segments
    """
    segments = []
    for item in (part.strip() for part in text.split(",")):
        if not item:
            continue
        label, sep, seconds = item.partition(":")
        if not sep:
            raise ConfigError(f"schedule item '{item}' is not label:seconds")
        try:
            segments.append((ActivityLabel(label.strip().upper()), float(seconds)))
        except ValueError:
            raise ConfigError(f"invalid schedule item '{item}'") from None
    if not segments:
        raise ConfigError("schedule is empty")
    if repeats < 1:
        raise ConfigError(f"schedule repeats must be >= 1, got {repeats}")
    return segments * repeats


def generate_session(
    schedule: Sequence[Tuple[ActivityLabel, float]],
    subject: SubjectParams,
    dt: float,
    table: Optional[IntensityTable] = None,
) -> Tuple[SourceSignal, SourceSignal]:
    """
    Generate the front and rear source signals of a scheduled session.

    Args:
        schedule: Sequence of (activity, duration in seconds), each >= 5 s
        subject: Subject parameters; its rng_seed roots all sub-streams
        dt: Step in seconds
        table: Intensity table (defaults to DEFAULT_INTENSITY)

    Returns:
        Tuple of (front, rear) SourceSignal with per-step labels
    """
    if not schedule:
        raise ConfigError("schedule is empty")
    for label, seconds in schedule:
        if seconds < MIN_SEGMENT_S:
            raise ConfigError(
                f"segment {ActivityLabel(label).value}:{seconds}s shorter than {MIN_SEGMENT_S}s"
            )

    signals = {}
    for position in PehPosition:
        parts, labels = [], []
        for index, (label, seconds) in enumerate(schedule):
            profile = make_profile(label, subject, table)
            seed = derive_seed(subject.rng_seed, position.value, index)
            part = generate_source(profile, position, seconds, dt, seed)
            parts.append(part.v_s_series)
            labels.append(part.labels)
        signals[position] = SourceSignal(
            dt=dt,
            v_s_series=np.concatenate(parts),
            labels=np.concatenate(labels),
            position=position,
        )
    logger.debug(
        "subject %s: generated %d segments, %.1f s", subject.id, len(schedule),
        signals[PehPosition.FRONT].duration,
    )
    return signals[PehPosition.FRONT], signals[PehPosition.REAR]


def make_subjects(
    count: int,
    seed: int,
    intensity_spread: float = 0.15,
    cadence_spread: float = 0.1,
) -> List[SubjectParams]:
    """
    Draw a synthetic subject population.

    Scales are uniform in [1 - spread, 1 + spread], clipped to [0.5, 2.0].
    """
    if count < 1:
        raise ConfigError(f"subject count must be >= 1, got {count}")
    rng = make_rng(seed, "subjects")
    subjects = []
    for i in range(count):
        intensity = rng.uniform(1 - intensity_spread, 1 + intensity_spread)
        intensity = float(np.clip(intensity, 0.5, 2.0))
        cadence = float(np.clip(rng.uniform(1 - cadence_spread, 1 + cadence_spread), 0.5, 2.0))
        subject_id = f"S{i + 1:02d}"
        subjects.append(
            SubjectParams(
                id=subject_id,
                intensity_scale=intensity,
                cadence_scale=cadence,
                rng_seed=derive_seed(seed, "subject", subject_id),
            )
        )
    return subjects
