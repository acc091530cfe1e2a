"""Circuit: rectified source -> storage capacitor -> buck converter dynamics."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from kehsim.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

# Fraction of V_max reached after half a time constant (1 - e^-0.5, as published).
LINEARITY_FRACTION = 0.393

# Reference prototype: 470 uF capacitor, 0 -> 4 V in 60 s from a 20.8 V source,
# self-discharge 4 V -> 3 V in 700 s.
REFERENCE_CAPACITANCE = 470e-6
REFERENCE_SOURCE_V = 20.8
REFERENCE_CHARGE = (4.0, 60.0)
REFERENCE_LEAK = (4.0, 3.0, 700.0)

DEFAULT_R_SERIES = -REFERENCE_CHARGE[1] / math.log(
    1.0 - REFERENCE_CHARGE[0] / REFERENCE_SOURCE_V
) / REFERENCE_CAPACITANCE
DEFAULT_LEAK_RESISTANCE = REFERENCE_LEAK[2] / math.log(
    REFERENCE_LEAK[0] / REFERENCE_LEAK[1]
) / REFERENCE_CAPACITANCE


class Phase(str, Enum):
    """Capacitor cycle phase."""

    CHARGING = "charging"
    DISCHARGING = "discharging"


@dataclass(frozen=True)
class CapacitorSpec:
    """Storage capacitor. ``leak_resistance=math.inf`` disables self-discharge."""

    capacitance: float = REFERENCE_CAPACITANCE
    v_rating: float = 25.0
    leak_resistance: float = DEFAULT_LEAK_RESISTANCE

    def __post_init__(self) -> None:
        if not self.capacitance > 0:
            raise ConfigError(f"capacitance must be > 0, got {self.capacitance}")
        if not self.v_rating > 0:
            raise ConfigError(f"v_rating must be > 0, got {self.v_rating}")
        if not self.leak_resistance > 0:
            raise ConfigError(f"leak_resistance must be > 0, got {self.leak_resistance}")

    @property
    def leak_tau(self) -> float:
        """Self-discharge time constant in seconds (inf when leakage is off)."""
        return self.leak_resistance * self.capacitance


@dataclass(frozen=True)
class BuckSpec:
    """Buck converter undervoltage-lockout thresholds and discharge ramp."""

    v_uvlo_rising: float = 4.0
    v_uvlo_falling: float = 3.08
    discharge_duration: float = 0.01

    def __post_init__(self) -> None:
        if not 0 < self.v_uvlo_falling < self.v_uvlo_rising:
            raise ConfigError(
                f"UVLO thresholds must satisfy 0 < falling < rising, got "
                f"falling={self.v_uvlo_falling}, rising={self.v_uvlo_rising}"
            )
        if not self.discharge_duration > 0:
            raise ConfigError(f"discharge_duration must be > 0, got {self.discharge_duration}")

    def check_against(self, cap: CapacitorSpec) -> None:
        """Raise ConfigError if the rising threshold exceeds the capacitor rating."""
        if self.v_uvlo_rising > cap.v_rating:
            raise ConfigError(
                f"v_uvlo_rising={self.v_uvlo_rising} V exceeds capacitor rating "
                f"{cap.v_rating} V"
            )


@dataclass(frozen=True)
class SourceModel:
    """Rectified DC source level behind an effective series resistance."""

    v_s: float = REFERENCE_SOURCE_V
    r_series: float = DEFAULT_R_SERIES

    def __post_init__(self) -> None:
        if not self.v_s >= 0:
            raise ConfigError(f"v_s must be >= 0, got {self.v_s}")
        if not self.r_series > 0:
            raise ConfigError(f"r_series must be > 0, got {self.r_series}")

    def tau(self, cap: CapacitorSpec) -> float:
        """RC charging time constant in seconds."""
        return self.r_series * cap.capacitance


@dataclass(frozen=True)
class ChargeState:
    """Instantaneous capacitor state. Ramp fields are only meaningful while discharging."""

    t: float = 0.0
    v: float = 0.0
    phase: Phase = Phase.CHARGING
    ramp_from: float = 0.0
    ramp_elapsed: float = 0.0


@dataclass(frozen=True)
class LinearityReport:
    """Outcome of the linear-charging design check."""

    ok: bool
    v_max_required: float
    v_max: float
    chord_deviation: float


@dataclass(frozen=True, eq=False)
class VoltageTrace:
    """
    Dense capacitor-voltage trace on a uniform grid.

    ``samples[i]`` is the voltage at ``t = i * dt``; ``labels[i]`` is the activity
    of the step that ended at that instant (``labels[0]`` repeats the first step's).
    """

    dt: float
    samples: np.ndarray
    labels: np.ndarray
    discharges: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigError(f"trace dt must be > 0, got {self.dt}")
        if len(self.samples) != len(self.labels):
            raise ValueError(
                f"trace has {len(self.samples)} samples but {len(self.labels)} labels"
            )
        if len(self.samples) and float(np.min(self.samples)) < 0:
            raise ValueError("trace contains negative voltages")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt


def _v_max(src: SourceModel, cap: CapacitorSpec) -> float:
    return min(cap.v_rating, src.v_s)


def charge_voltage_closed_form(
    t: float, v0: float, src: SourceModel, cap: CapacitorSpec
) -> float:
    """
    Closed-form RC charging law without leakage.

    V(t) = V_max + (v0 - V_max) * exp(-t / tau), with V_max = min(v_rating, v_s).

    Args:
        t: Time since the start of charging in seconds (may be inf)
        v0: Initial capacitor voltage
        src: Source model (v_s, r_series)
        cap: Capacitor spec

    Returns:
        Capacitor voltage at time t

    Raises:
        DomainError: If t < 0, v0 < 0 or v0 > V_max
    """
    v_max = _v_max(src, cap)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if v0 < 0 or v0 > v_max:
        raise DomainError(f"v0={v0} V outside [0, V_max={v_max}] V")
    return v_max + (v0 - v_max) * math.exp(-t / src.tau(cap))


def charge_time_closed_form(
    v_target: float, v0: float, src: SourceModel, cap: CapacitorSpec
) -> float:
    """
    Time for the leak-free charging law to go from v0 to v_target.

    Raises:
        DomainError: If v_target is not in [v0, V_max)
    """
    v_max = _v_max(src, cap)
    if not 0 <= v0 <= v_target < v_max:
        raise DomainError(
            f"need 0 <= v0 <= v_target < V_max, got v0={v0}, v_target={v_target}, V_max={v_max}"
        )
    return -src.tau(cap) * math.log((v_max - v_target) / (v_max - v0))


def calibrate_series_resistance(
    v_s: float, v_target: float, t_target: float, cap: CapacitorSpec
) -> float:
    """
    Series resistance that charges ``cap`` from 0 V to v_target in t_target seconds.

    Args:
        v_s: Constant source voltage
        v_target: Voltage to reach
        t_target: Time allowed in seconds
        cap: Capacitor spec (only the capacitance is used)

    Returns:
        Resistance in ohms
    """
    if not 0 < v_target < v_s or t_target <= 0:
        raise DomainError(
            f"need 0 < v_target < v_s and t_target > 0, got v_target={v_target}, "
            f"v_s={v_s}, t_target={t_target}"
        )
    tau = -t_target / math.log(1.0 - v_target / v_s)
    return tau / cap.capacitance


def calibrate_leak_resistance(
    v_start: float, v_end: float, duration: float, cap: CapacitorSpec
) -> float:
    """Parallel leak resistance that self-discharges v_start -> v_end in ``duration`` s."""
    if not 0 < v_end < v_start or duration <= 0:
        raise DomainError(
            f"need 0 < v_end < v_start and duration > 0, got {v_start} -> {v_end} in {duration}"
        )
    return duration / math.log(v_start / v_end) / cap.capacitance


def leakage_decay(v0: float, t: float, cap: CapacitorSpec) -> float:
    """Capacitor voltage after t seconds of self-discharge with no source."""
    return v0 * math.exp(-t / cap.leak_tau)


def chord_deviation(fraction_of_tau: float = 0.5, points: int = 10001) -> float:
    """
    Max distance between the charging law (v0=0) and its chord over [0, fraction*tau].

    Returned as a fraction of V_max; evaluated densely.
    """
    x = np.linspace(0.0, fraction_of_tau, points)
    curve = 1.0 - np.exp(-x)
    chord = curve[-1] * x / fraction_of_tau
    return float(np.max(curve - chord))


def check_linearity(cap: CapacitorSpec, buck: BuckSpec, v_s: float) -> LinearityReport:
    """
    Check that the UVLO rising threshold is reached within the first half time constant.

    Within [0, 0.5 tau] the charging curve stays close to a straight line, so the
    voltage increment rate measured over a window tracks the harvested power.

    Args:
        cap: Capacitor spec
        buck: Buck converter spec
        v_s: Rectified source voltage

    Returns:
        LinearityReport with ok, the required V_max and the effective V_max
    """
    v_max_required = buck.v_uvlo_rising / LINEARITY_FRACTION
    v_max = min(cap.v_rating, v_s)
    return LinearityReport(
        ok=v_max >= v_max_required,
        v_max_required=v_max_required,
        v_max=v_max,
        chord_deviation=chord_deviation(),
    )


@dataclass(frozen=True)
class _StepFactors:
    """Per-dt constants of the exponential-Euler update."""

    source_gain: float
    charge_decay: float
    leak_decay: float


def _step_factors(dt: float, r_series: float, cap: CapacitorSpec) -> _StepFactors:
    r_leak = cap.leak_resistance
    if math.isinf(r_leak):
        gain = 1.0
        r_parallel = r_series
        leak_decay = 1.0
    else:
        gain = r_leak / (r_series + r_leak)
        r_parallel = r_series * r_leak / (r_series + r_leak)
        leak_decay = math.exp(-dt / cap.leak_tau)
    return _StepFactors(
        source_gain=gain,
        charge_decay=math.exp(-dt / (r_parallel * cap.capacitance)),
        leak_decay=leak_decay,
    )


def check_dt(dt: float, buck: BuckSpec) -> None:
    """Raise ConfigError unless 0 < dt <= discharge_duration / 4."""
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    if dt > buck.discharge_duration / 4 * (1 + 1e-9):
        raise ConfigError(
            f"dt={dt} s too large: must be <= discharge_duration/4 "
            f"= {buck.discharge_duration / 4} s"
        )


def _advance(
    v: float,
    phase: Phase,
    ramp_from: float,
    ramp_elapsed: float,
    v_s: float,
    dt: float,
    factors: _StepFactors,
    cap: CapacitorSpec,
    buck: BuckSpec,
) -> Tuple[float, Phase, float, float]:
    if phase is Phase.DISCHARGING:
        elapsed = ramp_elapsed + dt
        if elapsed >= buck.discharge_duration * (1 - 1e-9):
            return buck.v_uvlo_falling, Phase.CHARGING, 0.0, 0.0
        frac = elapsed / buck.discharge_duration
        return ramp_from - (ramp_from - buck.v_uvlo_falling) * frac, phase, ramp_from, elapsed

    # Bridge rectifier: the source only pushes current while it is above the capacitor.
    if v_s > v:
        v_inf = v_s * factors.source_gain
        v_new = v_inf + (v - v_inf) * factors.charge_decay
    else:
        v_new = v * factors.leak_decay
    v_new = min(max(v_new, 0.0), cap.v_rating)

    # Leakage alone never wakes the buck, even from above the rising threshold.
    if v_new >= buck.v_uvlo_rising and v_new >= v:
        return v_new, Phase.DISCHARGING, v_new, 0.0
    return v_new, Phase.CHARGING, 0.0, 0.0


def step(
    state: ChargeState, dt: float, src: SourceModel, cap: CapacitorSpec, buck: BuckSpec
) -> ChargeState:
    """
    Advance the capacitor by one time step.

    Charging integrates dV/dt = (v_s - V)/(R C) - V/(R_leak C) exactly for a
    constant source (exponential Euler). A charging step that ends at or above
    the UVLO rising threshold without falling starts a linear discharge ramp
    down to the falling threshold over discharge_duration.

    Args:
        state: Current state
        dt: Step in seconds, at most discharge_duration / 4
        src: Source during this step
        cap: Capacitor spec
        buck: Buck converter spec

    Returns:
        State at t + dt

    Raises:
        ConfigError: If dt is not positive or too large
    """
    check_dt(dt, buck)
    factors = _step_factors(dt, src.r_series, cap)
    v, phase, ramp_from, ramp_elapsed = _advance(
        state.v, state.phase, state.ramp_from, state.ramp_elapsed, src.v_s, dt, factors, cap, buck
    )
    return ChargeState(
        t=state.t + dt, v=v, phase=phase, ramp_from=ramp_from, ramp_elapsed=ramp_elapsed
    )


def simulate_trace(
    src_signal,
    cap: CapacitorSpec,
    buck: BuckSpec,
    dt: float = 0.001,
    v0: float = 0.0,
    seed: int = 0,
    r_series: float = DEFAULT_R_SERIES,
    noise_v: float = 0.0,
) -> VoltageTrace:
    """
    Simulate the capacitor voltage driven by a source signal.

    The source is held constant between its own samples (zero-order hold), so a
    signal on a coarser grid than ``dt`` is fine.

    Args:
        src_signal: SourceSignal with dt, v_s_series and per-step labels
        cap: Capacitor spec
        buck: Buck converter spec
        dt: Integration step in seconds
        v0: Initial capacitor voltage
        seed: Seed for the optional measurement noise
        r_series: Effective series resistance of the source
        noise_v: Std of additive Gaussian measurement noise in volts (0 disables)

    Returns:
        VoltageTrace with duration/dt + 1 samples starting at t=0
    """
    series = np.asarray(src_signal.v_s_series, dtype=float)
    if series.size == 0:
        raise ConfigError("source signal is empty")
    check_dt(dt, buck)
    if not 0 <= v0 <= cap.v_rating:
        raise DomainError(f"v0={v0} V outside [0, {cap.v_rating}] V")

    duration = series.size * src_signal.dt
    n_steps = int(round(duration / dt))
    src_index = np.minimum(
        (np.arange(n_steps) * dt / src_signal.dt + 1e-9).astype(np.int64), series.size - 1
    )
    v_s_steps = series[src_index].tolist()
    step_labels = np.asarray(src_signal.labels)[src_index]

    factors = _step_factors(dt, r_series, cap)
    out = np.empty(n_steps + 1)
    out[0] = v0
    discharges = np.zeros(n_steps + 1, dtype=np.int64)
    v, phase, ramp_from, ramp_elapsed = v0, Phase.CHARGING, 0.0, 0.0
    count = 0
    for i, v_s in enumerate(v_s_steps):
        v, new_phase, ramp_from, ramp_elapsed = _advance(
            v, phase, ramp_from, ramp_elapsed, v_s, dt, factors, cap, buck
        )
        if new_phase is Phase.DISCHARGING and phase is Phase.CHARGING:
            count += 1
        phase = new_phase
        out[i + 1] = v
        discharges[i + 1] = count

    if noise_v > 0:
        rng = np.random.default_rng(seed)
        out = np.clip(out + rng.normal(0.0, noise_v, out.size), 0.0, cap.v_rating)

    labels = np.concatenate([step_labels[:1], step_labels])
    logger.debug(
        "simulated %d steps (%.1f s), %d buck discharges, final %.3f V",
        n_steps,
        n_steps * dt,
        count,
        v,
    )
    return VoltageTrace(dt=dt, samples=out, labels=labels, discharges=discharges)
