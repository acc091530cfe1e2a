"""Evaluate: repeated stratified cross-validation and subject-dependent aggregation."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from kehsim.activity import LABEL_ORDER
from kehsim.classify import N_CLASSES, ClassifierSpec, Dataset, FeatureMask, train
from kehsim.errors import ConfigError, DatasetError
from kehsim.utils.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    """
    Cross-validation result.

    ``confusion`` is the mean matrix of one pass over the data (rows = true,
    columns = predicted, in LABEL_ORDER), so its row sums are the class counts
    and trace/total is ``accuracy_mean``. ``confusion_pooled`` holds the raw
    counts over every repetition. Accuracies are percentages; ``per_class_tpr``
    is nan for classes absent from the data.
    """

    classifier: str
    feature_mask: FeatureMask
    accuracy_mean: float
    accuracy_std: float
    confusion: np.ndarray
    per_class_tpr: np.ndarray
    folds: int = 10
    repetitions: int = 10
    seed: int = 0
    n_instances: int = 0
    subject: Optional[str] = None
    accuracies: List[float] = field(default_factory=list)
    confusion_pooled: Optional[np.ndarray] = None

    @property
    def pooled_accuracy(self) -> float:
        """Instance-weighted accuracy of the raw counts."""
        counts = self.confusion if self.confusion_pooled is None else self.confusion_pooled
        total = counts.sum()
        return 100.0 * float(np.trace(counts)) / total if total else float("nan")

    def to_dict(self) -> Dict:
        pooled = self.confusion_pooled
        return {
            "classifier": self.classifier,
            "feature_mask": self.feature_mask.value,
            "subject": self.subject,
            "accuracy_mean": round(self.accuracy_mean, 4),
            "accuracy_std": round(self.accuracy_std, 4),
            "accuracies": [round(a, 4) for a in self.accuracies],
            "labels": [label.value for label in LABEL_ORDER],
            "confusion": np.round(self.confusion.astype(float), 4).tolist(),
            "confusion_pooled": None if pooled is None else pooled.astype(int).tolist(),
            "per_class_tpr": [
                None if np.isnan(v) else round(float(v), 4) for v in self.per_class_tpr
            ],
            "folds": self.folds,
            "repetitions": self.repetitions,
            "seed": self.seed,
            "n_instances": self.n_instances,
        }


def true_positive_rates(confusion: np.ndarray) -> np.ndarray:
    rows = confusion.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rows > 0, 100.0 * np.diag(confusion) / rows, np.nan)


def stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """
    Assign every instance to one of ``folds`` test folds, stratified by class.

    Each class is shuffled and dealt round-robin; the starting fold carries
    over from class to class so fold sizes differ by at most one.

    Returns:
        Fold id per instance
    """
    assignment = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        assignment[members] = (offset + np.arange(len(members))) % folds
        offset = (offset + len(members)) % folds
    return assignment


def check_cv(data: Dataset, folds: int, repetitions: int) -> None:
    """
    Raise unless ``data`` supports the requested cross-validation.

    Raises:
        ConfigError: If folds < 2 or repetitions < 1
        DatasetError: If fewer than two classes or a class has < folds instances
    """
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    counts = data.class_counts()
    present = np.flatnonzero(counts)
    if len(present) < 2:
        raise DatasetError("cross-validation needs at least two classes")
    short = [f"{LABEL_ORDER[c].value}={counts[c]}" for c in present if counts[c] < folds]
    if short:
        raise DatasetError(
            f"every class needs at least {folds} instances for {folds}-fold CV; "
            f"too few: {', '.join(short)}"
        )


def _run_fold(
    task: Tuple[ClassifierSpec, Dataset, np.ndarray, np.ndarray]
) -> np.ndarray:
    spec, data, train_idx, test_idx = task
    model = train(spec, data.subset(train_idx))
    return model.predict_indices(data.subset(test_idx).X)


def cross_validate(
    spec: ClassifierSpec,
    data: Dataset,
    folds: int = 10,
    repetitions: int = 10,
    seed: int = 0,
    jobs: int = 1,
) -> EvalReport:
    """
    Repeated stratified k-fold cross-validation.

    Every repetition reshuffles the folds with its own derived seed and each
    fold's model gets a seed derived from (seed, repetition, fold), so the
    report does not depend on ``jobs``.

    Args:
        spec: Classifier to evaluate
        data: Labeled dataset
        folds: Number of folds
        repetitions: Number of reshuffled repetitions
        seed: Root seed
        jobs: Worker processes (1 runs serially)

    Returns:
        EvalReport

    Raises:
        DatasetError: If fewer than two classes or a class has < folds instances
    """
    check_cv(data, folds, repetitions)
    y = data.y

    tasks, owners = [], []
    for r in range(repetitions):
        assignment = stratified_folds(y, folds, make_rng(seed, "cv", r))
        for f in range(folds):
            test_idx = np.flatnonzero(assignment == f)
            train_idx = np.flatnonzero(assignment != f)
            fold_spec = spec.with_seed(derive_seed(seed, "model", r, f))
            tasks.append((fold_spec, data, train_idx, test_idx))
            owners.append((r, test_idx))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            predictions = list(pool.map(_run_fold, tasks))
    else:
        predictions = [_run_fold(task) for task in tasks]

    pooled = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    correct = np.zeros(repetitions, dtype=np.int64)
    for (r, test_idx), predicted in zip(owners, predictions):
        np.add.at(pooled, (y[test_idx], predicted), 1)
        correct[r] += int(np.sum(predicted == y[test_idx]))

    accuracies = 100.0 * correct / len(y)
    confusion = pooled / repetitions
    std = float(np.std(accuracies, ddof=1)) if repetitions > 1 else 0.0
    report = EvalReport(
        classifier=spec.name,
        feature_mask=data.feature_mask,
        accuracy_mean=float(np.mean(accuracies)),
        accuracy_std=std,
        confusion=confusion,
        per_class_tpr=true_positive_rates(confusion),
        folds=folds,
        repetitions=repetitions,
        seed=seed,
        n_instances=len(y),
        accuracies=[float(a) for a in accuracies],
        confusion_pooled=pooled,
    )
    logger.debug(
        "%s/%s: %.2f%% +- %.2f over %d x %d folds",
        spec.name,
        data.feature_mask.value,
        report.accuracy_mean,
        report.accuracy_std,
        repetitions,
        folds,
    )
    return report


def aggregate(reports: Sequence[EvalReport]) -> EvalReport:
    """
    Average subject reports: mean and std of subject accuracies.

    Every subject weighs the same. Each subject's matrix is scaled to
    n_instances / len(reports) before summing, so the aggregate matrix still
    totals n_instances and its trace/total equals ``accuracy_mean``. Raw counts
    are summed into ``confusion_pooled``.
    """
    if not reports:
        raise DatasetError("no reports to aggregate")
    first = reports[0]
    means = np.array([r.accuracy_mean for r in reports])
    n_total = sum(r.n_instances for r in reports)
    share = n_total / len(reports)
    confusion = np.sum([r.confusion * (share / r.confusion.sum()) for r in reports], axis=0)
    pooled = [r.confusion_pooled for r in reports if r.confusion_pooled is not None]
    return EvalReport(
        classifier=first.classifier,
        feature_mask=first.feature_mask,
        accuracy_mean=float(means.mean()),
        accuracy_std=float(np.std(means, ddof=1)) if len(means) > 1 else 0.0,
        confusion=confusion,
        per_class_tpr=true_positive_rates(confusion),
        folds=first.folds,
        repetitions=first.repetitions,
        seed=first.seed,
        n_instances=int(n_total),
        subject=None,
        accuracies=[float(m) for m in means],
        confusion_pooled=np.sum(pooled, axis=0) if len(pooled) == len(reports) else None,
    )


def evaluate_subjects(
    spec: ClassifierSpec,
    datasets: Mapping[str, Dataset],
    folds: int = 10,
    repetitions: int = 10,
    seed: int = 0,
    jobs: int = 1,
) -> Tuple[Dict[str, EvalReport], EvalReport]:
    """
    Subject-dependent evaluation: cross-validate each subject on its own data.

    Args:
        spec: Classifier to evaluate
        datasets: Dataset per subject id
        folds, repetitions, seed, jobs: As for cross_validate

    Returns:
        Tuple of (report per subject, aggregate report)
    """
    reports = {}
    for subject_id in sorted(datasets):
        report = cross_validate(
            spec,
            datasets[subject_id],
            folds=folds,
            repetitions=repetitions,
            seed=derive_seed(seed, "subject", subject_id),
            jobs=jobs,
        )
        report.subject = subject_id
        reports[subject_id] = report
    return reports, aggregate(list(reports.values()))


def summary_text(report: EvalReport) -> str:
    """Plain-text summary: accuracy line plus confusion matrix with TPR column."""
    title = f"{report.classifier} / {report.feature_mask.value}"
    if report.subject:
        title += f" / {report.subject}"
    lines = [
        title,
        "=" * 50,
        f"Accuracy: {report.accuracy_mean:.2f}% +- {report.accuracy_std:.2f}"
        f" ({report.repetitions} x {report.folds}-fold, {report.n_instances} instances)",
        "",
        "true\\pred " + "".join(f"{label.value:>8}" for label in LABEL_ORDER) + "   TPR%",
    ]
    for label, row, tpr in zip(LABEL_ORDER, report.confusion, report.per_class_tpr):
        cells = "".join(f"{v:>8.2f}" for v in row)
        rate = "    n/a" if np.isnan(tpr) else f"{tpr:7.2f}"
        lines.append(f"{label.value:<10}{cells}{rate}")
    return "\n".join(lines) + "\n"
