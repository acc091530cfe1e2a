"""Classify: from-scratch k-NN, kernel naive Bayes, decision tree and random forest."""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from kehsim.activity import LABEL_ORDER, ActivityLabel
from kehsim.errors import ConfigError, DatasetError
from kehsim.sampler import FeatureVector
from kehsim.utils.rng import make_rng

logger = logging.getLogger(__name__)

N_CLASSES = len(LABEL_ORDER)
_LABEL_INDEX = {label: i for i, label in enumerate(LABEL_ORDER)}


class FeatureMask(str, Enum):
    """Which harvester rates a classifier sees."""

    FRONT = "front"
    REAR = "rear"
    FUSED = "fused"

    @property
    def columns(self) -> Tuple[str, ...]:
        return {
            FeatureMask.FRONT: ("r_front",),
            FeatureMask.REAR: ("r_rear",),
            FeatureMask.FUSED: ("r_rear", "r_front"),
        }[self]


def label_index(label: Union[ActivityLabel, str]) -> int:
    """Position of a label in the fixed tie-breaking order."""
    return _LABEL_INDEX[ActivityLabel(label)]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature vectors seen through a feature mask."""

    vectors: Tuple[FeatureVector, ...]
    feature_mask: FeatureMask = FeatureMask.FUSED

    def __post_init__(self) -> None:
        object.__setattr__(self, "vectors", tuple(self.vectors))
        object.__setattr__(self, "feature_mask", FeatureMask(self.feature_mask))
        if not self.vectors:
            raise DatasetError("dataset is empty")

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def X(self) -> np.ndarray:
        cols = self.feature_mask.columns
        return np.array([[getattr(v, c) for c in cols] for v in self.vectors], dtype=float)

    @property
    def y(self) -> np.ndarray:
        """Label indices into LABEL_ORDER."""
        return np.array([label_index(v.label) for v in self.vectors], dtype=np.int64)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=N_CLASSES)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.vectors[i] for i in indices), self.feature_mask)


class ClassifierKind(str, Enum):
    KNN = "knn"
    NAIVE_BAYES_KDE = "naive_bayes_kde"
    DECISION_TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"


@dataclass(frozen=True)
class ClassifierSpec:
    """
    Classifier choice and hyperparameters.

    ``min_leaf`` applies to the tree and to every tree of the forest.
    ``max_features`` of None means int(log2(d)) + 1 features per forest split.
    """

    kind: ClassifierKind = ClassifierKind.RANDOM_FOREST
    k: int = 3
    min_leaf: int = 2
    n_trees: int = 100
    bootstrap: bool = True
    max_features: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ClassifierKind(self.kind))
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_features is not None and self.max_features < 1:
            raise ConfigError(f"max_features must be >= 1, got {self.max_features}")

    @classmethod
    def knn(cls, k: int = 3, seed: int = 0) -> "ClassifierSpec":
        return cls(ClassifierKind.KNN, k=k, seed=seed)

    @classmethod
    def naive_bayes_kde(cls, seed: int = 0) -> "ClassifierSpec":
        return cls(ClassifierKind.NAIVE_BAYES_KDE, seed=seed)

    @classmethod
    def decision_tree(cls, min_leaf: int = 2, seed: int = 0) -> "ClassifierSpec":
        return cls(ClassifierKind.DECISION_TREE, min_leaf=min_leaf, seed=seed)

    @classmethod
    def random_forest(
        cls, n_trees: int = 100, min_leaf: int = 1, bootstrap: bool = True, seed: int = 0
    ) -> "ClassifierSpec":
        return cls(
            ClassifierKind.RANDOM_FOREST,
            n_trees=n_trees,
            min_leaf=min_leaf,
            bootstrap=bootstrap,
            seed=seed,
        )

    def with_seed(self, seed: int) -> "ClassifierSpec":
        return replace(self, seed=seed)

    @property
    def name(self) -> str:
        return self.kind.value


def _argmax_lowest(scores: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the earliest label in LABEL_ORDER
    return np.argmax(scores, axis=1)


class Model:
    """Trained classifier over label indices."""

    n_features: int = 0
    feature_mask: FeatureMask = FeatureMask.FUSED

    def fit(self, X: np.ndarray, y: np.ndarray) -> "Model":
        raise NotImplementedError

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class KnnModel(Model):
    """
    k-nearest neighbours, Euclidean distance, majority vote.

    Neighbours at equal distance are taken in LABEL_ORDER, and tied votes go to
    the earliest label, so predictions do not depend on training order.
    """

    def __init__(self, k: int = 3, chunk: int = 1024):
        self.k = k
        self.chunk = chunk

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KnnModel":
        self.X_train = X
        self.y_train = y
        return self

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        k = min(self.k, len(self.X_train))
        out = np.empty(len(X), dtype=np.int64)
        for start in range(0, len(X), self.chunk):
            block = X[start : start + self.chunk]
            dist = np.sum((block[:, None, :] - self.X_train[None, :, :]) ** 2, axis=2)
            # Equal distances resolve in label order.
            labels = np.broadcast_to(self.y_train, dist.shape)
            nearest = np.lexsort((labels, dist), axis=1)[:, :k]
            votes = np.zeros((len(block), N_CLASSES), dtype=np.int64)
            rows = np.repeat(np.arange(len(block)), k)
            np.add.at(votes, (rows, self.y_train[nearest].ravel()), 1)
            out[start : start + len(block)] = _argmax_lowest(votes)
        return out


class KdeNaiveBayesModel(Model):
    """
    Naive Bayes with one Gaussian kernel density per class and feature.

    Bandwidths follow Silverman's rule h = 1.06 * sigma * n^(-1/5), floored at
    1e-3 of the feature's overall spread so constant classes stay finite.
    """

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KdeNaiveBayesModel":
        counts = np.bincount(y, minlength=N_CLASSES)
        spread = X.std(axis=0)
        floor = np.maximum(1e-3 * spread, 1e-6)
        self.points = []
        self.bandwidths = []
        for c in range(N_CLASSES):
            Xc = X[y == c]
            self.points.append(Xc)
            if len(Xc) == 0:
                self.bandwidths.append(floor)
                continue
            h = 1.06 * Xc.std(axis=0) * len(Xc) ** (-0.2)
            self.bandwidths.append(np.maximum(h, floor))
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(counts / counts.sum())
        return self

    def _log_density(self, X: np.ndarray, c: int) -> np.ndarray:
        Xc, h = self.points[c], self.bandwidths[c]
        z = (X[:, None, :] - Xc[None, :, :]) / h
        log_k = -0.5 * z**2 - np.log(h * math.sqrt(2 * math.pi))
        peak = log_k.max(axis=1, keepdims=True)
        per_feature = peak[:, 0, :] + np.log(np.exp(log_k - peak).sum(axis=1)) - math.log(len(Xc))
        return per_feature.sum(axis=1)

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        scores = np.full((len(X), N_CLASSES), -np.inf)
        for c in range(N_CLASSES):
            if len(self.points[c]):
                scores[:, c] = self.log_prior[c] + self._log_density(X, c)
        return _argmax_lowest(scores)


def _entropy(counts: np.ndarray) -> np.ndarray:
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


class DecisionTreeModel(Model):
    """
    Binary entropy tree with midpoint thresholds.

    Nodes are stored in flat arrays; ``feature == -1`` marks a leaf. A sample
    goes left when its value is <= the node threshold.
    """

    def __init__(
        self,
        min_leaf: int = 2,
        max_features: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng

    def _candidate_features(self, d: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= d or self.rng is None:
            return np.arange(d)
        return np.sort(self.rng.choice(d, size=self.max_features, replace=False))

    def _best_split(self, X: np.ndarray, y: np.ndarray) -> Optional[Tuple[int, float]]:
        n = len(y)
        parent = _entropy(np.bincount(y, minlength=N_CLASSES))
        best_gain, best = 1e-12, None
        for f in self._candidate_features(X.shape[1]):
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            left = np.cumsum(np.eye(N_CLASSES, dtype=np.int64)[ys], axis=0)[:-1]
            right = left[-1] + np.eye(N_CLASSES, dtype=np.int64)[ys[-1]] - left
            n_left = np.arange(1, n)
            valid = (
                (xs[1:] > xs[:-1])
                & (n_left >= self.min_leaf)
                & (n - n_left >= self.min_leaf)
            )
            if not valid.any():
                continue
            child = (n_left * _entropy(left) + (n - n_left) * _entropy(right)) / n
            gain = np.where(valid, parent - child, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > best_gain:
                best_gain = float(gain[i])
                best = (int(f), float((xs[i] + xs[i + 1]) / 2))
        return best

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTreeModel":
        feature: List[int] = []
        threshold: List[float] = []
        left: List[int] = []
        right: List[int] = []
        label: List[int] = []

        def new_node(idx: np.ndarray) -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            label.append(int(np.argmax(np.bincount(y[idx], minlength=N_CLASSES))))
            return len(feature) - 1

        stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
        while stack:
            node, idx = stack.pop()
            if len(idx) < 2 * self.min_leaf or np.all(y[idx] == y[idx[0]]):
                continue
            split = self._best_split(X[idx], y[idx])
            if split is None:
                continue
            f, thr = split
            go_left = X[idx, f] <= thr
            feature[node], threshold[node] = f, thr
            left[node] = new_node(idx[go_left])
            right[node] = new_node(idx[~go_left])
            stack.append((right[node], idx[~go_left]))
            stack.append((left[node], idx[go_left]))

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.label = np.array(label, dtype=np.int64)
        return self

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.label[node]


class RandomForestModel(Model):
    """Bagged entropy trees with a random feature subset per split; majority vote."""

    def __init__(
        self,
        n_trees: int = 100,
        min_leaf: int = 1,
        bootstrap: bool = True,
        max_features: Optional[int] = None,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.seed = seed

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForestModel":
        d = X.shape[1]
        m = self.max_features or int(math.log2(d)) + 1
        self.trees = []
        for t in range(self.n_trees):
            rng = make_rng(self.seed, "tree", t)
            idx = rng.integers(0, len(y), size=len(y)) if self.bootstrap else np.arange(len(y))
            tree = DecisionTreeModel(min_leaf=self.min_leaf, max_features=min(m, d), rng=rng)
            self.trees.append(tree.fit(X[idx], y[idx]))
        return self

    def predict_indices(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros((len(X), N_CLASSES), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict_indices(X)), 1)
        return _argmax_lowest(votes)


def _build(spec: ClassifierSpec) -> Model:
    if spec.kind is ClassifierKind.KNN:
        return KnnModel(k=spec.k)
    if spec.kind is ClassifierKind.NAIVE_BAYES_KDE:
        return KdeNaiveBayesModel()
    if spec.kind is ClassifierKind.DECISION_TREE:
        return DecisionTreeModel(min_leaf=spec.min_leaf)
    return RandomForestModel(
        n_trees=spec.n_trees,
        min_leaf=spec.min_leaf,
        bootstrap=spec.bootstrap,
        max_features=spec.max_features,
        seed=spec.seed,
    )


def train(spec: ClassifierSpec, data: Dataset) -> Model:
    """
    Train a classifier on a dataset.

    Args:
        spec: Classifier kind and hyperparameters
        data: Training data

    Returns:
        Trained Model (deterministic for a fixed spec.seed)

    Raises:
        DatasetError: If the data holds fewer than two classes
    """
    y = data.y
    if len(np.unique(y)) < 2:
        raise DatasetError("training data must contain at least two classes")
    model = _build(spec).fit(data.X, y)
    model.n_features = len(data.feature_mask.columns)
    model.feature_mask = data.feature_mask
    logger.debug("trained %s on %d vectors (%s)", spec.name, len(y), data.feature_mask.value)
    return model


def predict_many(model: Model, X) -> List[ActivityLabel]:
    """
    Predict labels for a batch of points.

    Raises:
        DatasetError: If the point dimensionality differs from the training mask
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DatasetError(
            f"expected {model.n_features} feature(s) for mask "
            f"{model.feature_mask.value}, got {X.shape[1]}"
        )
    return [LABEL_ORDER[i] for i in model.predict_indices(X)]


def predict(model: Model, features) -> ActivityLabel:
    """
    Predict the activity of one 1-D or 2-D feature point.

    Ties resolve to the earliest label in WALK, RUN, SU, SD, ST order.
    """
    point = np.asarray(features, dtype=float).reshape(1, -1)
    return predict_many(model, point)[0]
