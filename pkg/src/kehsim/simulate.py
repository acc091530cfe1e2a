"""Simulate: subject sessions, voltage traces, sparse samples and feature files."""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click

from kehsim import __version__
from kehsim.activity import PehPosition, SubjectParams, generate_session
from kehsim.circuit import VoltageTrace, simulate_trace
from kehsim.errors import ConfigError, DomainError
from kehsim.sampler import (
    FeatureVector,
    RateSeries,
    estimate_rates,
    extract_features,
    fuse,
    sample_spacing,
    sparse_sample,
)
from kehsim.utils.config import ExperimentConfig, save_config
from kehsim.utils.io import (
    read_samples_csv,
    read_trace_csv,
    write_features_csv,
    write_json,
    write_samples_csv,
    write_trace_csv,
)
from kehsim.utils.rng import derive_seed

logger = logging.getLogger(__name__)

TRACE_DIR = "traces"
CONFIG_FILE = "config.yaml"


@dataclass(frozen=True, eq=False)
class SubjectSession:
    """Front and rear capacitor traces of one simulated subject."""

    subject: SubjectParams
    front: VoltageTrace
    rear: VoltageTrace

    def trace(self, position: PehPosition) -> VoltageTrace:
        return self.front if PehPosition(position) is PehPosition.FRONT else self.rear


def simulate_subject(config: ExperimentConfig, subject: SubjectParams) -> SubjectSession:
    """
    Generate the subject's scheduled session and simulate both capacitors.

    Args:
        config: Experiment configuration
        subject: Subject whose rng_seed drives the source signals

    Returns:
        SubjectSession
    """
    front_src, rear_src = generate_session(
        config.schedule, subject, config.dt, table=config.intensity
    )
    traces = {}
    for position, src in ((PehPosition.FRONT, front_src), (PehPosition.REAR, rear_src)):
        traces[position] = simulate_trace(
            src,
            config.capacitor,
            config.buck,
            dt=config.dt,
            v0=config.v0,
            seed=derive_seed(config.seed, "noise", subject.id, position.value),
            r_series=config.source.r_series,
            noise_v=config.trace_noise_v,
        )
    return SubjectSession(subject, traces[PehPosition.FRONT], traces[PehPosition.REAR])


def session_features(
    config: ExperimentConfig, session: SubjectSession, t_c: Optional[float] = None
) -> Tuple[List[FeatureVector], RateSeries, RateSeries]:
    """Fused features of a session at accumulation window t_c (config default if None)."""
    cfg = config.sampler if t_c is None else config.sampler_for(t_c)
    seed = derive_seed(config.seed, "phase", session.subject.id)
    return extract_features(session.front, session.rear, cfg, seed)


def trace_path(out_dir: Path, subject_id: str, position: PehPosition) -> Path:
    return Path(out_dir) / TRACE_DIR / f"{subject_id}_{PehPosition(position).value}.csv"


def run_simulate(config: ExperimentConfig, out_dir: Path, stride: int = 10) -> List[Path]:
    """
    Simulate every subject and write front/rear trace CSVs plus a manifest.

    Args:
        config: Experiment configuration
        out_dir: Output directory
        stride: Write every stride-th dense sample

    Returns:
        Written trace paths
    """
    click.echo("Simulate: Capacitor Voltage Traces")
    click.echo("=" * 50)
    subjects = config.make_subjects()
    click.echo(
        f"{len(subjects)} subject(s), schedule of {len(config.schedule)} segment(s), "
        f"dt={config.dt * 1000:g} ms, trace stride {stride}"
    )

    written = []
    discharges: Dict[str, Dict[str, int]] = {}
    for subject in subjects:
        session = simulate_subject(config, subject)
        discharges[subject.id] = {}
        for position in PehPosition:
            trace = session.trace(position)
            path = trace_path(out_dir, subject.id, position)
            write_trace_csv(path, trace, stride=stride)
            logger.debug("wrote %s (%d samples, stride %d)", path, len(trace), stride)
            written.append(path)
            count = int(trace.discharges[-1]) if trace.discharges is not None else 0
            discharges[subject.id][position.value] = count
        click.echo(
            f"  {subject.id}: {session.front.duration:.0f} s, buck discharges "
            f"front={discharges[subject.id]['front']} rear={discharges[subject.id]['rear']}"
        )

    write_json(
        Path(out_dir) / "manifest.json",
        {
            "command": "simulate",
            "version": __version__,
            "stride": stride,
            "config": config.manifest(),
            "subjects": [asdict(s) for s in subjects],
            "discharges": discharges,
            "files": [str(p.relative_to(out_dir)) for p in written],
        },
    )
    save_config(Path(out_dir) / CONFIG_FILE, config)
    click.echo(f"\nSimulate completed successfully! Output saved to: {out_dir}")
    return written


def run_sample(
    config: ExperimentConfig, trace_file: Path, out_path: Path, t_c: Optional[float] = None
) -> RateSeries:
    """Sparse-sample one trace CSV, write the samples and report the rate counters."""
    cfg = config.sampler if t_c is None else config.sampler_for(t_c)
    trace_file = Path(trace_file)
    subject_id, _, suffix = trace_file.stem.rpartition("_")
    position = PehPosition(suffix) if suffix in ("front", "rear") else PehPosition.REAR
    trace = read_trace_csv(trace_file)
    samples = sparse_sample(
        trace, cfg, seed=derive_seed(config.seed, "phase", subject_id or trace_file.stem)
    )
    write_samples_csv(out_path, samples)
    series = estimate_rates(samples, cfg, position)

    click.echo(f"Sample: {trace_file.name} every {cfg.t_c:g} s")
    click.echo("=" * 50)
    click.echo(f"  Samples: {len(samples)}")
    stats = series.stats
    click.echo(
        f"  Windows: {stats.candidates} candidate, {stats.kept} rate, {stats.flat} flat, "
        f"{stats.non_positive} non-positive, {stats.transition} transition, "
        f"{stats.settling} settling, {stats.underestimated} underestimated"
    )
    click.echo(f"  Output saved to: {out_path}")
    return series


def _features_from_samples(
    config: ExperimentConfig, front_path: Path, rear_path: Path
) -> Tuple[List[FeatureVector], RateSeries, RateSeries]:
    front_samples = read_samples_csv(front_path)
    rear_samples = read_samples_csv(rear_path)
    t_c = sample_spacing(front_samples)
    if sample_spacing(rear_samples) != t_c:
        raise DomainError(f"{front_path.name} and {rear_path.name} use different wake-up periods")
    cfg = config.sampler_for(t_c)
    front = estimate_rates(front_samples, cfg, PehPosition.FRONT)
    rear = estimate_rates(rear_samples, cfg, PehPosition.REAR)
    return fuse(front, rear), front, rear


def run_features(
    config: ExperimentConfig,
    traces_dir: Path,
    out_dir: Path,
    t_c: Optional[float] = None,
    from_samples: bool = False,
) -> List[Path]:
    """
    Build fused feature CSVs from a ``simulate`` output directory.

    Pairs ``<subject>_front.csv`` with ``<subject>_rear.csv`` and writes
    ``<out_dir>/<subject>.csv`` per subject. With ``from_samples`` the pairs are
    sample CSVs written by ``sample`` and t_c is their wake-up period.
    """
    if from_samples and t_c is not None:
        raise ConfigError("t_c comes from the sample spacing; drop --t-c with --from-samples")
    traces_dir = Path(traces_dir)
    if (traces_dir / TRACE_DIR).is_dir():
        traces_dir = traces_dir / TRACE_DIR
    fronts = sorted(traces_dir.glob("*_front.csv"))
    if not fronts:
        raise FileNotFoundError(f"No *_front.csv files in {traces_dir}")

    cfg = config.sampler if t_c is None else config.sampler_for(t_c)
    if from_samples:
        click.echo("Features: fused rates from sample files")
    else:
        click.echo(f"Features: fused rates every {cfg.t_c:g} s")
    click.echo("=" * 50)
    written = []
    for front_path in fronts:
        subject_id = front_path.name[: -len("_front.csv")]
        rear_path = traces_dir / f"{subject_id}_rear.csv"
        if not rear_path.exists():
            raise FileNotFoundError(f"Missing rear file for {subject_id}: {rear_path}")
        if from_samples:
            vectors, front, rear = _features_from_samples(config, front_path, rear_path)
        else:
            vectors, front, rear = extract_features(
                read_trace_csv(front_path),
                read_trace_csv(rear_path),
                cfg,
                seed=derive_seed(config.seed, "phase", subject_id),
            )
        path = Path(out_dir) / f"{subject_id}.csv"
        write_features_csv(path, vectors)
        written.append(path)
        click.echo(
            f"  {subject_id}: {len(vectors)} vectors "
            f"(front kept {front.stats.kept}, rear kept {rear.stats.kept})"
        )
    click.echo(f"\nFeatures completed successfully! Output saved to: {out_dir}")
    return written
