"""Experiment configuration: embedded defaults, YAML or key=value files, overrides."""

import difflib
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import yaml

from kehsim.activity import (
    DEFAULT_INTENSITY,
    MIN_SEGMENT_S,
    ActivityLabel,
    PehPosition,
    PositionProfile,
    SubjectParams,
    make_subjects,
    parse_schedule,
)
from kehsim.circuit import (
    DEFAULT_LEAK_RESISTANCE,
    DEFAULT_R_SERIES,
    BuckSpec,
    CapacitorSpec,
    SourceModel,
    check_dt,
    check_linearity,
)
from kehsim.classify import ClassifierKind, ClassifierSpec, FeatureMask
from kehsim.errors import ConfigError
from kehsim.power import SensingPowerParams, TxProfile, TxState
from kehsim.sampler import AdcSpec, SamplerConfig

logger = logging.getLogger(__name__)

T_C_RANGE = (1.0, 10.0)
YAML_SUFFIXES = (".yaml", ".yml")
_PROFILE_FIELDS = ("strike_rate", "v_s_mean", "v_s_jitter_rel", "burst_duty")


def _activity_defaults() -> Dict[str, Any]:
    values = {}
    for label, per_pos in DEFAULT_INTENSITY.items():
        for position, pp in per_pos.items():
            for name in _PROFILE_FIELDS:
                values[f"activity.{label.value}.{position.value}.{name}"] = getattr(pp, name)
    return values


DEFAULTS: Dict[str, Any] = {
    "seed": 7,
    "sim.dt": 0.001,
    "sim.v0": 0.0,
    "sim.trace_noise_v": 0.0,
    "capacitor.capacitance": 470e-6,
    "capacitor.v_rating": 25.0,
    "capacitor.leak_resistance": DEFAULT_LEAK_RESISTANCE,
    "buck.v_uvlo_rising": 4.0,
    "buck.v_uvlo_falling": 3.08,
    "buck.discharge_duration": 0.01,
    "source.v_s": 20.8,
    "source.r_series": DEFAULT_R_SERIES,
    "adc.bits": 10,
    "adc.v_ref": 5.0,
    "sampler.t_c": 5.0,
    "sampler.random_phase": False,
    "sampler.flat_epsilon": 1e-4,
    "sampler.flat_drop_v": 0.05,
    "sampler.settle": True,
    "sampler.drop_underestimated": False,
    "activity.jitter": None,
    **_activity_defaults(),
    "subjects.count": 10,
    "subjects.intensity_spread": 0.15,
    "subjects.cadence_spread": 0.1,
    "schedule.segments": "WALK:60,SD:60,SU:60,RUN:60,ST:60",
    "schedule.repeats": 10,
    "classifier.kinds": ["random_forest"],
    "classifier.k": 3,
    "classifier.n_trees": 100,
    "classifier.tree_min_leaf": 2,
    "classifier.forest_min_leaf": 1,
    "classifier.bootstrap": True,
    "eval.folds": 10,
    "eval.repetitions": 10,
    "eval.masks": ["front", "rear", "fused"],
    "eval.jobs": 1,
    "sweep.t_c": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    "power.p_sample_uw": 480.0,
    "power.t_sample_ms": 0.6,
    "power.p_sleep_uw": 6.0,
    "power.period_s": 5.0,
    "power.measured_tx": True,
    "power.setup_ms": 1.12,
    "power.setup_uw": 1008.0,
    "power.tx_ms": 0.28,
    "power.tx_uw": 3990.0,
    "power.gap_ms": 0.3,
    "power.gap_uw": 2460.0,
    "power.post_ms": 1.72,
    "power.post_uw": 744.0,
    "power.byte_ms": 0.008,
    "power.max_extra_bytes": 28,
    "power.channels": 3,
}

# Keys whose default is None accept a float.
_OPTIONAL_FLOAT = {"activity.jitter"}


def _parse_value(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _flatten(tree: Mapping, prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def load_config_file(config_path: Path) -> Dict[str, Any]:
    """
    Load a configuration file into a flat dotted-key dictionary.

    YAML files (.yaml/.yml) may nest sections; any other file is read as
    ``key=value`` lines with ``#`` comments.

    Args:
        config_path: Path to config file

    Returns:
        Flat dictionary of raw values
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config not found: {config_path}")

    text = config_path.read_text()
    if config_path.suffix.lower() in YAML_SUFFIXES:
        try:
            tree = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{config_path}: invalid YAML: {e}") from e
        if not isinstance(tree, Mapping):
            raise ConfigError(f"{config_path}: top level must be a mapping")
        return _flatten(tree)

    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"{config_path}:{lineno}: expected key=value, got '{line}'")
        values[key.strip()] = _parse_value(raw.strip())
    return values


def parse_overrides(items: Iterable[str]) -> Dict[str, Any]:
    """Parse ``key=value`` command-line overrides."""
    values = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override '{item}' is not key=value")
        values[key.strip()] = _parse_value(raw.strip())
    return values


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    try:
        if key in _OPTIONAL_FLOAT:
            return None if value is None else float(value)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, list):
            items = value if isinstance(value, list) else str(value).split(",")
            if isinstance(default[0], float):
                return [float(v) for v in items]
            return [str(v).strip() for v in items]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None


def merge_values(*layers: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Merge raw value layers over DEFAULTS, validating keys and types.

    Raises:
        ConfigError: On unknown keys or unparsable values
    """
    values = dict(DEFAULTS)
    for layer in layers:
        for key, raw in layer.items():
            if key not in DEFAULTS:
                hint = difflib.get_close_matches(key, DEFAULTS, n=1)
                suffix = f" (did you mean {hint[0]}?)" if hint else ""
                raise ConfigError(f"unknown config key: {key}{suffix}")
            values[key] = _coerce(key, raw)
    return values


@dataclass(frozen=True)
class SubjectsConfig:
    count: int = 10
    intensity_spread: float = 0.15
    cadence_spread: float = 0.1


@dataclass(frozen=True)
class EvalConfig:
    folds: int = 10
    repetitions: int = 10
    masks: Tuple[FeatureMask, ...] = tuple(FeatureMask)
    jobs: int = 1


@dataclass(frozen=True)
class PowerConfig:
    sensing: SensingPowerParams
    profile: TxProfile
    period: float = 5.0
    measured_tx: bool = True


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Every parameter of an experiment; ``values`` keeps the flat form for manifests."""

    seed: int
    dt: float
    v0: float
    trace_noise_v: float
    capacitor: CapacitorSpec
    buck: BuckSpec
    source: SourceModel
    sampler: SamplerConfig
    intensity: Mapping[ActivityLabel, Mapping[PehPosition, PositionProfile]]
    subjects: SubjectsConfig
    schedule: Tuple[Tuple[ActivityLabel, float], ...]
    classifiers: Tuple[ClassifierSpec, ...]
    evaluation: EvalConfig
    t_c_sweep: Tuple[float, ...]
    power: PowerConfig
    values: Mapping[str, Any]

    def make_subjects(self) -> List[SubjectParams]:
        return make_subjects(
            self.subjects.count,
            self.seed,
            self.subjects.intensity_spread,
            self.subjects.cadence_spread,
        )

    def sampler_for(self, t_c: float) -> SamplerConfig:
        return replace(self.sampler, t_c=t_c)

    def manifest(self) -> Dict[str, Any]:
        """Flat, sorted echo of every parameter."""
        return {key: self.values[key] for key in sorted(self.values)}


def _intensity(values: Mapping[str, Any]) -> Dict:
    jitter = values["activity.jitter"]
    table = {}
    for label in ActivityLabel:
        table[label] = {}
        for position in PehPosition:
            prefix = f"activity.{label.value}.{position.value}."
            fields = {name: values[prefix + name] for name in _PROFILE_FIELDS}
            if jitter is not None:
                fields["v_s_jitter_rel"] = jitter
            table[label][position] = PositionProfile(**fields)
    return table


def _classifiers(values: Mapping[str, Any]) -> Tuple[ClassifierSpec, ...]:
    specs = []
    for name in values["classifier.kinds"]:
        try:
            kind = ClassifierKind(name)
        except ValueError:
            options = ", ".join(k.value for k in ClassifierKind)
            raise ConfigError(f"unknown classifier '{name}' (choose from {options})") from None
        min_leaf = (
            values["classifier.forest_min_leaf"]
            if kind is ClassifierKind.RANDOM_FOREST
            else values["classifier.tree_min_leaf"]
        )
        specs.append(
            ClassifierSpec(
                kind=kind,
                k=values["classifier.k"],
                min_leaf=min_leaf,
                n_trees=values["classifier.n_trees"],
                bootstrap=values["classifier.bootstrap"],
            )
        )
    if not specs:
        raise ConfigError("classifier.kinds is empty")
    return tuple(specs)


def _masks(values: Mapping[str, Any]) -> Tuple[FeatureMask, ...]:
    try:
        masks = tuple(FeatureMask(m) for m in values["eval.masks"])
    except ValueError:
        raise ConfigError(f"invalid eval.masks: {values['eval.masks']}") from None
    if not masks:
        raise ConfigError("eval.masks is empty")
    return masks


def _check_t_c(t_c: float, key: str) -> None:
    low, high = T_C_RANGE
    if not low <= t_c <= high:
        raise ConfigError(f"{key}={t_c} s outside [{low:g}, {high:g}] s")


def build_config(values: Mapping[str, Any]) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig from merged flat values.

    Raises:
        ConfigError: If any sub-config is invalid or the linear-charging check fails
    """
    cap = CapacitorSpec(
        capacitance=values["capacitor.capacitance"],
        v_rating=values["capacitor.v_rating"],
        leak_resistance=values["capacitor.leak_resistance"],
    )
    buck = BuckSpec(
        v_uvlo_rising=values["buck.v_uvlo_rising"],
        v_uvlo_falling=values["buck.v_uvlo_falling"],
        discharge_duration=values["buck.discharge_duration"],
    )
    buck.check_against(cap)
    source = SourceModel(v_s=values["source.v_s"], r_series=values["source.r_series"])
    report = check_linearity(cap, buck, source.v_s)
    if not report.ok:
        raise ConfigError(
            f"linear charging needs V_max >= {report.v_max_required:.2f} V "
            f"(v_uvlo_rising / 0.393), but min(v_rating, v_s) = {report.v_max:.2f} V"
        )
    check_dt(values["sim.dt"], buck)
    if not 0 <= values["sim.v0"] <= cap.v_rating:
        raise ConfigError(f"sim.v0={values['sim.v0']} V outside [0, {cap.v_rating}] V")
    if values["sim.trace_noise_v"] < 0:
        raise ConfigError("sim.trace_noise_v must be >= 0")

    sampler = SamplerConfig(
        t_c=values["sampler.t_c"],
        adc=AdcSpec(bits=values["adc.bits"], v_ref=values["adc.v_ref"]),
        random_phase=values["sampler.random_phase"],
        flat_epsilon=values["sampler.flat_epsilon"],
        flat_drop_v=values["sampler.flat_drop_v"],
        settle=values["sampler.settle"],
        settle_v=buck.v_uvlo_falling,
        drop_underestimated=values["sampler.drop_underestimated"],
    )
    _check_t_c(sampler.t_c, "sampler.t_c")
    sweep = tuple(values["sweep.t_c"])
    if not sweep:
        raise ConfigError("sweep.t_c is empty")
    for t_c in sweep:
        _check_t_c(t_c, "sweep.t_c")

    subjects = SubjectsConfig(
        count=values["subjects.count"],
        intensity_spread=values["subjects.intensity_spread"],
        cadence_spread=values["subjects.cadence_spread"],
    )
    if subjects.count < 1:
        raise ConfigError("subjects.count must be >= 1")
    for key in ("subjects.intensity_spread", "subjects.cadence_spread"):
        if not 0 <= values[key] < 0.5:
            raise ConfigError(f"{key} must be in [0, 0.5), got {values[key]}")

    evaluation = EvalConfig(
        folds=values["eval.folds"],
        repetitions=values["eval.repetitions"],
        masks=_masks(values),
        jobs=values["eval.jobs"],
    )
    if evaluation.folds < 2 or evaluation.repetitions < 1 or evaluation.jobs < 1:
        raise ConfigError("eval.folds must be >= 2, eval.repetitions and eval.jobs >= 1")

    power = PowerConfig(
        sensing=SensingPowerParams(
            p_sample=values["power.p_sample_uw"],
            t_s=values["power.t_sample_ms"],
            p_sleep=values["power.p_sleep_uw"],
        ),
        profile=TxProfile(
            setup=TxState(values["power.setup_ms"], values["power.setup_uw"]),
            per_channel_tx_base=TxState(values["power.tx_ms"], values["power.tx_uw"]),
            inter_tx_gap=TxState(values["power.gap_ms"], values["power.gap_uw"]),
            post=TxState(values["power.post_ms"], values["power.post_uw"]),
            per_extra_byte=values["power.byte_ms"],
            max_extra_bytes_per_packet=values["power.max_extra_bytes"],
            channels=values["power.channels"],
        ),
        period=values["power.period_s"],
        measured_tx=values["power.measured_tx"],
    )
    if not power.period > 0:
        raise ConfigError("power.period_s must be > 0")

    schedule = tuple(parse_schedule(values["schedule.segments"], values["schedule.repeats"]))
    short = [f"{label.value}:{s:g}" for label, s in schedule if s < MIN_SEGMENT_S]
    if short:
        raise ConfigError(f"schedule segments shorter than {MIN_SEGMENT_S:g} s: {short[0]}")

    config = ExperimentConfig(
        seed=values["seed"],
        dt=values["sim.dt"],
        v0=values["sim.v0"],
        trace_noise_v=values["sim.trace_noise_v"],
        capacitor=cap,
        buck=buck,
        source=source,
        sampler=sampler,
        intensity=_intensity(values),
        subjects=subjects,
        schedule=schedule,
        classifiers=_classifiers(values),
        evaluation=evaluation,
        t_c_sweep=sweep,
        power=power,
        values=dict(values),
    )
    logger.debug(
        "config: seed=%d dt=%g t_c=%g, %d subjects, r_series=%.1f kOhm",
        config.seed,
        config.dt,
        sampler.t_c,
        subjects.count,
        source.r_series / 1e3,
    )
    return config


def load_config(
    config_path: Optional[Path] = None, overrides: Iterable[str] = ()
) -> ExperimentConfig:
    """
    Build the experiment configuration: defaults, then the file, then overrides.

    Args:
        config_path: Optional YAML or key=value file
        overrides: ``key=value`` strings applied last

    Returns:
        Validated ExperimentConfig
    """
    layers = []
    if config_path is not None:
        layers.append(load_config_file(config_path))
    layers.append(parse_overrides(overrides))
    return build_config(merge_values(*layers))


def save_config(config_path: Path, config: ExperimentConfig) -> None:
    """Write the flat parameter set of ``config`` as YAML."""
    config_path = Path(config_path)
    config_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config_path, "w") as f:
        yaml.safe_dump(config.manifest(), f, default_flow_style=False, sort_keys=True)
