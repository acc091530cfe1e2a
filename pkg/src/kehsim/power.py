"""Power: duty-cycled sensing power, BLE broadcast energy and overall system power.

Units: power in µW (mW where named), time in ms (s for periods), energy in µJ.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

from kehsim.errors import ConfigError

# MCU sampling wake-up and deep sleep
P_SAMPLE_UW = 480.0
T_SAMPLE_MS = 0.6
P_SLEEP_UW = 6.0


@dataclass(frozen=True)
class SensingPowerParams:
    """Duty-cycled sampling: wake for t_s ms at p_sample, n times per second; else sleep."""

    p_sample: float = P_SAMPLE_UW
    t_s: float = T_SAMPLE_MS
    p_sleep: float = P_SLEEP_UW
    n: float = 0.2

    def __post_init__(self) -> None:
        for name in ("p_sample", "t_s", "p_sleep", "n"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def duty(self) -> float:
        """Fraction of each second spent awake."""
        return self.t_s * self.n / 1000.0


class SensingBreakdown(NamedTuple):
    sampling: float
    sleep_floor: float

    @property
    def total(self) -> float:
        return self.sampling + self.sleep_floor


def sensing_power(p: SensingPowerParams) -> float:
    """
    Average sensing power in µW.

    duty * p_sample + (1 - duty) * p_sleep while the duty cycle fits in a
    second, p_sample once sampling is continuous.
    """
    if p.duty <= 1.0:
        return p.duty * p.p_sample + (1.0 - p.duty) * p.p_sleep
    return p.p_sample


def sensing_breakdown(p: SensingPowerParams) -> SensingBreakdown:
    """Split sensing power into the sampling share above the sleep floor and the floor itself."""
    total = sensing_power(p)
    return SensingBreakdown(sampling=total - p.p_sleep, sleep_floor=p.p_sleep)


class TxState(NamedTuple):
    """One radio state: duration (ms) at power (µW)."""

    ms: float
    uw: float

    @property
    def energy_uj(self) -> float:
        return self.ms * self.uw / 1000.0


@dataclass(frozen=True)
class TxProfile:
    """
    BLE advertising event.

    A beacon packet carries the protocol bytes plus up to ``max_extra_bytes_per_packet``
    payload bytes, each adding ``per_extra_byte`` ms on air. Every packet goes
    out on every advertising channel; transmissions are separated by gaps.
    """

    setup: TxState = TxState(1.12, 1008.0)
    per_channel_tx_base: TxState = TxState(0.28, 3990.0)
    inter_tx_gap: TxState = TxState(0.3, 2460.0)
    post: TxState = TxState(1.72, 744.0)
    per_extra_byte: float = 0.008
    max_extra_bytes_per_packet: int = 28
    channels: int = 3

    def __post_init__(self) -> None:
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.max_extra_bytes_per_packet < 1:
            raise ConfigError("max_extra_bytes_per_packet must be >= 1")
        if self.per_extra_byte < 0:
            raise ConfigError("per_extra_byte must be >= 0")


class TxCost(NamedTuple):
    energy_uj: float
    duration_ms: float

    @property
    def avg_power_mw(self) -> float:
        return self.energy_uj / self.duration_ms if self.duration_ms > 0 else 0.0

    @classmethod
    def from_power(cls, avg_power_mw: float, duration_ms: float) -> "TxCost":
        return cls(avg_power_mw * duration_ms, duration_ms)


def packets_per_channel(profile: TxProfile, payload_bytes: int) -> int:
    return max(1, math.ceil(payload_bytes / profile.max_extra_bytes_per_packet))


def tx_energy(profile: TxProfile, payload_bytes: int) -> TxCost:
    """
    Energy and duration of broadcasting ``payload_bytes`` in one advertising event.

    Args:
        profile: Radio state table
        payload_bytes: Application bytes carried on top of the protocol payload

    Returns:
        TxCost(energy_uj, duration_ms)
    """
    if payload_bytes < 0:
        raise ConfigError(f"payload_bytes must be >= 0, got {payload_bytes}")
    packets = packets_per_channel(profile, payload_bytes)
    extra = math.ceil(payload_bytes / packets)
    packet_ms = profile.per_channel_tx_base.ms + profile.per_extra_byte * extra
    transmissions = profile.channels * packets
    gaps = transmissions - 1

    states = [
        profile.setup,
        TxState(transmissions * packet_ms, profile.per_channel_tx_base.uw),
        TxState(gaps * profile.inter_tx_gap.ms, profile.inter_tx_gap.uw),
        profile.post,
    ]
    return TxCost(
        energy_uj=sum(s.energy_uj for s in states),
        duration_ms=sum(s.ms for s in states),
    )


# Published per-event measurements: raw 125-sample batch and 2-byte result.
MEASURED_TX: Dict[int, TxCost] = {
    250: TxCost.from_power(3.129, 24.25),
    2: TxCost.from_power(1.716, 4.3),
}


@dataclass(frozen=True)
class SystemPowerInput:
    sensing: SensingPowerParams
    tx_energy: float = 0.0
    tx_duration: float = 0.0
    period: float = 5.0

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ConfigError(f"period must be > 0, got {self.period}")
        if self.tx_energy < 0 or self.tx_duration < 0:
            raise ConfigError("tx_energy and tx_duration must be >= 0")


def system_power(inp: SystemPowerInput) -> float:
    """Time-weighted average of sensing over ``period`` and one transmission, in µW."""
    energy = sensing_power(inp.sensing) * inp.period + inp.tx_energy
    return energy / (inp.period + inp.tx_duration / 1000.0)


def savings(baseline: float, improved: float) -> float:
    """Saving of ``improved`` against ``baseline`` in percent."""
    if baseline <= 0:
        raise ConfigError(f"baseline must be > 0, got {baseline}")
    return 100.0 * (1.0 - improved / baseline)


@dataclass(frozen=True)
class Scenario:
    """A sensing-and-reporting configuration: sample at n Hz, send payload_bytes every period."""

    name: str
    n: float
    payload_bytes: int
    period: float = 5.0


# Raw transducer sampling (25 Hz, 2 B per sample) vs capacitor-voltage sampling.
TRANSDUCER = Scenario("transducer-25Hz", n=25.0, payload_bytes=250)
CAPACITOR = Scenario("capacitor-0.2Hz", n=0.2, payload_bytes=2)


@dataclass(frozen=True)
class ScenarioPower:
    scenario: Scenario
    sensing_uw: float
    tx_model: TxCost
    tx_used: TxCost
    system_uw: float
    breakdown: SensingBreakdown = field(default=SensingBreakdown(0.0, 0.0))


def evaluate_scenario(
    scenario: Scenario,
    base: Optional[SensingPowerParams] = None,
    profile: Optional[TxProfile] = None,
    measured: bool = True,
) -> ScenarioPower:
    """
    Sensing, transmission and system power of one scenario.

    With ``measured`` the system figure uses MEASURED_TX when the payload has
    a published measurement, else the state-table model.
    """
    base = base or SensingPowerParams()
    profile = profile or TxProfile()
    params = SensingPowerParams(base.p_sample, base.t_s, base.p_sleep, scenario.n)
    model = tx_energy(profile, scenario.payload_bytes)
    used = MEASURED_TX.get(scenario.payload_bytes, model) if measured else model
    system = system_power(
        SystemPowerInput(params, used.energy_uj, used.duration_ms, scenario.period)
    )
    return ScenarioPower(
        scenario=scenario,
        sensing_uw=sensing_power(params),
        tx_model=model,
        tx_used=used,
        system_uw=system,
        breakdown=sensing_breakdown(params),
    )
