"""Tests for the feature datasets and the four classifiers."""

import numpy as np
import pytest

from conftest import SEPARABLE_CENTERS, blob_vectors
from kehsim.activity import ActivityLabel
from kehsim.classify import (
    ClassifierKind,
    ClassifierSpec,
    Dataset,
    DecisionTreeModel,
    FeatureMask,
    label_index,
    predict,
    predict_many,
    train,
)
from kehsim.errors import ConfigError, DatasetError
from kehsim.sampler import FeatureVector

ALL_SPECS = [
    ClassifierSpec.knn(k=3),
    ClassifierSpec.naive_bayes_kde(),
    ClassifierSpec.decision_tree(min_leaf=1),
    ClassifierSpec.random_forest(n_trees=15, seed=2),
]


def vec(rear, front, label):
    return FeatureVector(r_rear=rear, r_front=front, label=ActivityLabel(label))


class TestDataset:
    def test_masks_select_columns(self):
        data = Dataset([vec(0.01, 0.02, "WALK"), vec(0.03, 0.04, "RUN")])
        assert data.X.shape == (2, 2)
        np.testing.assert_array_equal(data.X[0], [0.01, 0.02])
        front = Dataset(data.vectors, FeatureMask.FRONT)
        np.testing.assert_array_equal(front.X[:, 0], [0.02, 0.04])
        rear = Dataset(data.vectors, "rear")
        np.testing.assert_array_equal(rear.X[:, 0], [0.01, 0.03])

    def test_labels_follow_tie_breaking_order(self):
        data = Dataset([vec(0, 0, "ST"), vec(0.01, 0.01, "WALK"), vec(0.02, 0.02, "SD")])
        assert list(data.y) == [4, 0, 3]
        assert list(data.class_counts()) == [1, 0, 0, 1, 1]
        assert label_index("RUN") == 1

    def test_empty(self):
        with pytest.raises(DatasetError):
            Dataset([])


class TestSpec:
    @pytest.mark.parametrize(
        "kwargs", [{"k": 0}, {"n_trees": 0}, {"min_leaf": 0}, {"max_features": 0}]
    )
    def test_invalid_hyperparameters(self, kwargs):
        with pytest.raises(ConfigError):
            ClassifierSpec(**kwargs)

    def test_kind_from_string(self):
        spec = ClassifierSpec("naive_bayes_kde")
        assert spec.kind is ClassifierKind.NAIVE_BAYES_KDE
        assert spec.name == "naive_bayes_kde"
        assert spec.with_seed(9).seed == 9


class TestKnn:
    def test_k1_resubstitution_is_exact(self, separable_vectors):
        data = Dataset(separable_vectors)
        model = train(ClassifierSpec.knn(k=1), data)
        predicted = predict_many(model, data.X)
        assert predicted == [v.label for v in separable_vectors]

    def test_tie_goes_to_earlier_label(self):
        data = Dataset([vec(1.0, 0.0, "RUN"), vec(0.0, 0.0, "WALK")], FeatureMask.REAR)
        model = train(ClassifierSpec.knn(k=2), data)
        assert predict(model, [0.5]) is ActivityLabel.WALK

        data = Dataset([vec(0.0, 0.0, "ST"), vec(1.0, 0.0, "SD")], FeatureMask.REAR)
        model = train(ClassifierSpec.knn(k=2), data)
        assert predict(model, [0.5]) is ActivityLabel.SD

    def test_equidistant_nearest_neighbour_goes_to_earlier_label(self):
        data = Dataset([vec(0.0, 0.0, "RUN"), vec(1.0, 0.0, "WALK")], FeatureMask.REAR)
        model = train(ClassifierSpec.knn(k=1), data)
        assert predict(model, [0.5]) is ActivityLabel.WALK

        flipped = Dataset([vec(1.0, 0.0, "WALK"), vec(0.0, 0.0, "RUN")], FeatureMask.REAR)
        assert predict(train(ClassifierSpec.knn(k=1), flipped), [0.5]) is ActivityLabel.WALK

    def test_matches_brute_force_nearest_neighbour(self):
        rng = np.random.default_rng(3)
        labels = list(ActivityLabel)
        train_vectors = [
            vec(*rng.uniform(0, 0.04, 2), labels[i % 5]) for i in range(100)
        ]
        model = train(ClassifierSpec.knn(k=1), Dataset(train_vectors))
        queries = rng.uniform(0, 0.04, size=(100, 2))
        order = {label: i for i, label in enumerate(labels)}
        for q, got in zip(queries, predict_many(model, queries)):
            nearest = min(
                train_vectors,
                key=lambda v: ((q[0] - v.r_rear) ** 2 + (q[1] - v.r_front) ** 2, order[v.label]),
            )
            assert got is nearest.label

    def test_k_larger_than_training_set(self):
        data = Dataset([vec(0.01, 0.01, "WALK"), vec(0.03, 0.03, "RUN")])
        model = train(ClassifierSpec.knn(k=10), data)
        assert predict(model, [0.0, 0.0]) is ActivityLabel.WALK


class TestNaiveBayes:
    def test_boundary_between_two_blobs(self):
        vectors = blob_vectors({"WALK": (0.01, 0.0), "RUN": (0.03, 0.0)}, 50, 0.002, seed=1)
        model = train(ClassifierSpec.naive_bayes_kde(), Dataset(vectors, FeatureMask.REAR))
        assert predict(model, [0.018]) is ActivityLabel.WALK
        assert predict(model, [0.022]) is ActivityLabel.RUN

    def test_constant_class_stays_finite(self, separable_vectors):
        vectors = separable_vectors + [vec(0.0, 0.0, "ST")] * 5
        model = train(ClassifierSpec.naive_bayes_kde(), Dataset(vectors))
        assert predict(model, [0.0, 0.0]) is ActivityLabel.ST
        assert predict(model, [0.040, 0.033]) is ActivityLabel.RUN

    def test_prior_decides_identical_features(self):
        vectors = [vec(0.02, 0.02, "RUN")] * 2 + [vec(0.02, 0.02, "SU")] * 5
        model = train(ClassifierSpec.naive_bayes_kde(), Dataset(vectors))
        assert predict(model, [0.02, 0.02]) is ActivityLabel.SU


class TestTrees:
    def test_single_leaf_when_min_leaf_forbids_splits(self, separable_vectors):
        data = Dataset(separable_vectors)
        model = train(ClassifierSpec.decision_tree(min_leaf=len(data)), data)
        assert isinstance(model, DecisionTreeModel)
        assert model.node_count == 1
        assert set(predict_many(model, data.X)) == {ActivityLabel.WALK}

    def test_threshold_goes_left_when_equal(self):
        data = Dataset([vec(0.01, 0, "WALK"), vec(0.03, 0, "RUN")], FeatureMask.REAR)
        model = train(ClassifierSpec.decision_tree(min_leaf=1), data)
        assert model.threshold[0] == pytest.approx(0.02)
        assert predict(model, [model.threshold[0]]) is ActivityLabel.WALK

    def test_single_tree_forest_without_bagging_equals_tree(self):
        vectors = blob_vectors(SEPARABLE_CENTERS, 20, spread=0.004, seed=5)
        data = Dataset(vectors)
        tree = train(ClassifierSpec.decision_tree(min_leaf=1), data)
        forest = train(ClassifierSpec.random_forest(n_trees=1, bootstrap=False), data)
        grid = np.random.default_rng(0).uniform(0, 0.045, size=(200, 2))
        assert predict_many(forest, grid) == predict_many(tree, grid)

    def test_forest_is_deterministic_for_a_seed(self):
        vectors = blob_vectors(SEPARABLE_CENTERS, 20, spread=0.004, seed=5)
        data = Dataset(vectors)
        grid = np.random.default_rng(1).uniform(0, 0.045, size=(100, 2))
        a = train(ClassifierSpec.random_forest(n_trees=10, seed=3), data)
        b = train(ClassifierSpec.random_forest(n_trees=10, seed=3), data)
        assert predict_many(a, grid) == predict_many(b, grid)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
class TestAllClassifiers:
    def test_separable_resubstitution(self, spec, separable_vectors):
        data = Dataset(separable_vectors)
        model = train(spec, data)
        assert predict_many(model, data.X) == [v.label for v in separable_vectors]

    def test_scale_invariant_on_separable_data(self, spec, separable_vectors):
        scaled = [
            FeatureVector(v.r_rear * 1000, v.r_front * 1000, v.label) for v in separable_vectors
        ]
        model = train(spec, Dataset(scaled))
        centers = np.array(list(SEPARABLE_CENTERS.values())) * 1000
        assert [p.value for p in predict_many(model, centers)] == list(SEPARABLE_CENTERS)

    def test_single_class_rejected(self, spec):
        with pytest.raises(DatasetError):
            train(spec, Dataset([vec(0.01, 0.01, "WALK")] * 4))

    def test_dimension_mismatch(self, spec, separable_vectors):
        model = train(spec, Dataset(separable_vectors, FeatureMask.FRONT))
        with pytest.raises(DatasetError):
            predict(model, [0.01, 0.02])
        assert isinstance(predict(model, [0.011]), ActivityLabel)
