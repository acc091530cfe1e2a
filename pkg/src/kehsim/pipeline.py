"""Pipeline: subject-dependent classification reports and accumulation-window sweeps."""

import logging
import shutil
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import click

from kehsim import __version__
from kehsim.activity import LABEL_ORDER
from kehsim.classify import ClassifierSpec, Dataset, FeatureMask
from kehsim.evaluate import EvalReport, check_cv, evaluate_subjects, summary_text
from kehsim.errors import ConfigError, DatasetError
from kehsim.sampler import FeatureVector, class_separation
from kehsim.simulate import CONFIG_FILE, session_features, simulate_subject
from kehsim.utils.config import ExperimentConfig, save_config
from kehsim.utils.io import (
    read_features_csv,
    write_confusion_csv,
    write_features_csv,
    write_json,
    write_table_csv,
    write_text,
)

logger = logging.getLogger(__name__)

AGGREGATE_FILE = "aggregate.csv"


def _write_report(report_dir: Path, name: str, report: EvalReport) -> None:
    write_json(report_dir / f"{name}.json", report.to_dict())
    write_confusion_csv(report_dir / f"{name}_confusion.csv", report.confusion)
    write_text(report_dir / f"{name}.txt", summary_text(report))


def _aggregate_row(
    t_c: Optional[float],
    spec: ClassifierSpec,
    mask: FeatureMask,
    report: Optional[EvalReport],
    subjects: int,
    skipped: int,
) -> Dict[str, Any]:
    row = {
        "t_c": t_c,
        "classifier": spec.name,
        "feature_mask": mask.value,
        "subjects": subjects,
        "skipped": skipped,
        "accuracy_mean": report.accuracy_mean if report else float("nan"),
        "accuracy_std": report.accuracy_std if report else float("nan"),
    }
    for i, label in enumerate(LABEL_ORDER):
        row[f"tpr_{label.value}"] = report.per_class_tpr[i] if report else float("nan")
    return row


def _usable(
    datasets: Mapping[str, Dataset], folds: int, repetitions: int, where: str
) -> Tuple[Dict[str, Dataset], List[str]]:
    """Split off subjects whose data cannot fill every fold."""
    usable, skipped = {}, []
    for subject_id, data in datasets.items():
        try:
            check_cv(data, folds, repetitions)
        except DatasetError as e:
            logger.warning("%s: skipping %s: %s", where, subject_id, e)
            skipped.append(subject_id)
            continue
        usable[subject_id] = data
    return usable, skipped


def evaluate_features(
    config: ExperimentConfig,
    features: Mapping[str, Sequence[FeatureVector]],
    out_dir: Path,
    t_c: Optional[float] = None,
) -> List[Dict[str, Any]]:
    """
    Evaluate every configured classifier and feature mask on per-subject features.

    Writes one JSON report and confusion CSV per (classifier, mask, subject) plus
    an aggregate per (classifier, mask) under ``out_dir``. A subject with a class
    too small for ``eval.folds`` is skipped with a warning and counted in the
    row's ``skipped`` column; a row with no subject left has nan accuracy.

    Returns:
        Aggregate rows (one per classifier and mask)
    """
    ev = config.evaluation
    where = "classify" if t_c is None else f"t_c={t_c:g}"
    rows = []
    for spec in config.classifiers:
        for mask in ev.masks:
            datasets = {sid: Dataset(vectors, mask) for sid, vectors in features.items()}
            usable, short = _usable(datasets, ev.folds, ev.repetitions, f"{where} {mask.value}")
            if not usable:
                rows.append(_aggregate_row(t_c, spec, mask, None, 0, len(short)))
                click.echo(f"  {spec.name:<16} {mask.value:<6}   skipped (too few instances)")
                continue
            reports, aggregate = evaluate_subjects(
                spec,
                usable,
                folds=ev.folds,
                repetitions=ev.repetitions,
                seed=config.seed,
                jobs=ev.jobs,
            )
            report_dir = out_dir / spec.name / mask.value
            for subject_id, report in reports.items():
                _write_report(report_dir, subject_id, report)
            _write_report(report_dir, "aggregate", aggregate)
            rows.append(_aggregate_row(t_c, spec, mask, aggregate, len(reports), len(short)))
            click.echo(
                f"  {spec.name:<16} {mask.value:<6} "
                f"{aggregate.accuracy_mean:6.2f}% +- {aggregate.accuracy_std:5.2f}"
            )
    return rows


def _check_evaluated(rows: Sequence[Dict[str, Any]], folds: int) -> None:
    if all(row["subjects"] == 0 for row in rows):
        raise DatasetError(
            f"no subject has enough instances per class for {folds}-fold cross-validation"
        )


def _summary(rows: Sequence[Dict[str, Any]]) -> str:
    lines = ["t_c  classifier        mask    accuracy", "=" * 50]
    for row in rows:
        t_c = "-" if row["t_c"] is None else f"{row['t_c']:g}"
        if row["subjects"]:
            result = f"{row['accuracy_mean']:6.2f}% +- {row['accuracy_std']:.2f}"
        else:
            result = "skipped"
        lines.append(f"{t_c:<4} {row['classifier']:<17} {row['feature_mask']:<7} {result}")
    return "\n".join(lines) + "\n"


def run_classify(
    config: ExperimentConfig, feature_files: Sequence[Path], out_dir: Path
) -> List[Dict]:
    """
    Cross-validate feature CSVs, one file per subject (the file stem is the subject id).

    Returns:
        Aggregate rows
    """
    if not feature_files:
        raise ConfigError("no feature files given")
    features = {Path(p).stem: read_features_csv(p) for p in feature_files}
    ev = config.evaluation
    click.echo("Classify: Subject-Dependent Cross-Validation")
    click.echo("=" * 50)
    click.echo(
        f"{len(features)} subject(s), {ev.repetitions} x {ev.folds}-fold, "
        f"masks {', '.join(m.value for m in ev.masks)}"
    )
    out_dir = Path(out_dir)
    rows = evaluate_features(config, features, out_dir / "reports")
    _check_evaluated(rows, ev.folds)
    write_table_csv(out_dir / AGGREGATE_FILE, rows)
    write_text(out_dir / "summary.txt", _summary(rows))
    write_json(
        out_dir / "manifest.json",
        {
            "command": "classify",
            "version": __version__,
            "config": config.manifest(),
            "inputs": [str(p) for p in feature_files],
        },
    )
    save_config(out_dir / CONFIG_FILE, config)
    click.echo(f"\nClassify completed successfully! Output saved to: {out_dir}")
    return rows


def _staging_dir(out_dir: Path, overwrite: bool) -> Path:
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise ConfigError(f"output directory is not empty: {out_dir} (use --overwrite)")
    staging = out_dir.with_name(out_dir.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    return staging


def run_pipeline(config: ExperimentConfig, out_dir: Path, overwrite: bool = False) -> List[Dict]:
    """
    Simulate all subjects once, then evaluate every t_c of the sweep.

    Results are written to ``<out_dir>.partial`` and moved into place only when
    every step succeeded; on failure the staging directory is removed.

    Layout:
        features/tc<t_c>/<subject>.csv
        reports/tc<t_c>/<classifier>/<mask>/<subject>.json (+ _confusion.csv, aggregate)
        aggregate.csv, separation.csv, summary.txt, manifest.json, config.yaml

    Returns:
        Aggregate rows (one per t_c, classifier and mask)
    """
    out_dir = Path(out_dir)
    staging = _staging_dir(out_dir, overwrite)
    click.echo("Pipeline: Simulation, Features and Classification Sweep")
    click.echo("=" * 50)
    try:
        subjects = config.make_subjects()
        sessions = []
        for subject in subjects:
            sessions.append(simulate_subject(config, subject))
            logger.debug("simulated %s", subject.id)
        click.echo(f"Simulated {len(sessions)} subject(s)")

        rows, separation = [], []
        for t_c in config.t_c_sweep:
            click.echo(f"\nt_c = {t_c:g} s")
            features = {}
            for session in sessions:
                vectors, _, _ = session_features(config, session, t_c)
                features[session.subject.id] = vectors
                path = staging / "features" / f"tc{t_c:g}" / f"{session.subject.id}.csv"
                write_features_csv(path, vectors)
            pooled = [v for vectors in features.values() for v in vectors]
            separation.append(
                {"t_c": t_c, "vectors": len(pooled), "separation": class_separation(pooled)}
            )
            report_dir = staging / "reports" / f"tc{t_c:g}"
            rows.extend(evaluate_features(config, features, report_dir, t_c))
        _check_evaluated(rows, config.evaluation.folds)

        write_table_csv(staging / AGGREGATE_FILE, rows)
        write_table_csv(staging / "separation.csv", separation)
        write_text(staging / "summary.txt", _summary(rows))
        write_json(
            staging / "manifest.json",
            {
                "command": "pipeline",
                "version": __version__,
                "config": config.manifest(),
                "subjects": [s.id for s in subjects],
            },
        )
        save_config(staging / CONFIG_FILE, config)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    if out_dir.exists():
        shutil.rmtree(out_dir)
    staging.rename(out_dir)
    click.echo(f"\nPipeline completed successfully! Output saved to: {out_dir}")
    return rows
