import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from delearning.data import Dataset, DataError, normalize
from delearning.zoo import (ALGORITHMS, ESTIMATORS, AdaBoostClassifier, BaggingClassifier, DecisionTreeClassifier,
                            GaussianNaiveBayes, LogisticRegressionClassifier, MajorityClassifier, MLPClassifier,
                            PredictionMatrix, RandomForestClassifier, RandomSubspaceClassifier, SimulatedExpert,
                            TrainedClassifier, ZooConfig, derive_seed, expert_classifiers, predict_matrix,
                            simulate_expert_votes, train_zoo)


def _blobs(n=300, d=4, seed=0):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.4).astype(np.int8)
    X = rng.normal(size=(n, d)) + 1.5 * y[:, None]
    return X, y


class _Constant(MajorityClassifier):
    def __init__(self, p=1.0):
        self.p = p

    def _proba_ad(self, X):
        return np.full(X.shape[0], self.p)


@pytest.fixture(scope="module")
def three_spaces():
    X, y = _blobs(240, 6, seed=3)
    base = normalize(Dataset(X, tuple(f"x{j}" for j in range(6)), y))
    rng = np.random.default_rng(9)
    sae20 = base.with_values(rng.random((240, 3)) * 0.1 + base.values[:, :3])
    sae30 = base.with_values(base.values[:, 2:])
    return {"original": base, "sae20": sae20, "sae30": sae30}


FAST = dict(forest_trees=5, adaboost_rounds=5, subspace_estimators=3, mlp_epochs=3)


class TestTrainZoo:
    def test_cartesian_product(self, three_spaces):
        zoo = train_zoo(three_spaces, ZooConfig(seed=1, **FAST))
        assert len(zoo) == 24
        assert [(c.space, c.algorithm) for c in zoo[:8]] == [("original", a) for a in ALGORITHMS]
        assert [c.id for c in zoo] == list(range(24))

    def test_retrain_bit_identical(self, three_spaces):
        cfg = ZooConfig(seed=4, **FAST)
        a = predict_matrix(train_zoo(three_spaces, cfg), spaces=three_spaces)
        b = predict_matrix(train_zoo(three_spaces, cfg), spaces=three_spaces)
        np.testing.assert_array_equal(a.probs, b.probs)
        np.testing.assert_array_equal(a.votes, b.votes)

    def test_missing_space(self, three_spaces):
        with pytest.raises(DataError, match="missing feature spaces"):
            train_zoo({"original": three_spaces["original"]}, ZooConfig())

    def test_misaligned_space(self, three_spaces):
        spaces = dict(three_spaces, sae30=three_spaces["sae30"].take(np.arange(10)))
        with pytest.raises(DataError, match="row-aligned"):
            train_zoo(spaces, ZooConfig(**FAST))

    def test_failure_falls_back_to_majority(self, three_spaces, monkeypatch):
        from delearning import zoo as zoo_mod

        def boom(self, X, y):
            raise zoo_mod.TrainingError("diverged")

        monkeypatch.setattr(zoo_mod.MLPClassifier, "fit", boom)
        zoo = train_zoo(three_spaces, ZooConfig(algorithms=("mlp", "logreg"), spaces=("original",), **FAST))
        assert isinstance(zoo[0].model, MajorityClassifier)
        assert "replaced by majority rule" in zoo[0].notes[0]
        assert not zoo[1].notes

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError, match="unknown algorithms"):
            ZooConfig(algorithms=("svm",))

    def test_serialization_round_trip(self, three_spaces):
        zoo = train_zoo(three_spaces, ZooConfig(seed=2, **FAST))
        back = [TrainedClassifier.from_dict(c.to_dict()) for c in zoo]
        a = predict_matrix(zoo, spaces=three_spaces)
        b = predict_matrix(back, spaces=three_spaces)
        np.testing.assert_array_equal(a.probs, b.probs)


class TestBaseLearners:
    def test_majority_70_30(self):
        y = np.array([0] * 70 + [1] * 30)
        X = np.zeros((100, 1))
        m = MajorityClassifier().fit(X, y)
        assert np.all(m.predict(X) == 0)
        assert np.mean(m.predict(X) == y) == 0.7

    def test_logreg_separable(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(400, 2))
        y = (X[:, 0] + 2 * X[:, 1] > 0.1).astype(int)
        m = LogisticRegressionClassifier().fit(X, y)
        assert np.mean(m.predict(X) == y) > 0.99

    def test_tree_min_leaf(self):
        X, y = _blobs(200, 3, seed=5)
        t = DecisionTreeClassifier(min_leaf=2).fit(X, y)
        assert t.leaf_sizes().min() >= 2
        assert t.n_nodes > 1

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 1000), st.integers(2, 5))
    def test_tree_min_leaf_property(self, seed, min_leaf):
        rng = np.random.default_rng(seed)
        X = rng.random((60, 3))
        y = rng.integers(0, 2, 60)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        t = DecisionTreeClassifier(min_leaf=min_leaf).fit(X, y)
        assert t.leaf_sizes().min() >= min_leaf

    def test_tree_fits_axis_split(self):
        X = np.linspace(0, 1, 50)[:, None]
        y = (X[:, 0] > 0.5).astype(int)
        assert np.all(DecisionTreeClassifier().fit(X, y).predict(X) == y)

    def test_subspace_sizes_and_diversity(self):
        X, y = _blobs(150, 7, seed=1)
        m = RandomSubspaceClassifier(n_estimators=6, feature_fraction=0.5, random_state=3).fit(X, y)
        assert all(len(f) == math.ceil(0.5 * 7) for f in m.subspaces_)
        assert len({tuple(f) for f in m.subspaces_}) > 1

    def test_naive_bayes_posterior_sums(self):
        X, y = _blobs(200, 5, seed=2)
        post = GaussianNaiveBayes().fit(X, y).posterior(X)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-9)

    def test_adaboost_exponential_loss(self):
        # the product bound: exp loss is non-increasing and bounds the 0/1 training error
        X, y = _blobs(300, 3, seed=7)
        m = AdaBoostClassifier(n_estimators=30).fit(X, y)
        loss = np.array(m.exp_loss_)
        assert np.all(np.diff(loss) <= 1e-12)
        assert np.all(np.array(m.train_errors_) <= loss + 1e-12)
        assert m.train_errors_[-1] <= m.train_errors_[0]

    def test_logistic_variant_runs(self):
        X, y = _blobs(200, 3, seed=8)
        m = AdaBoostClassifier(n_estimators=10, loss="logistic").fit(X, y)
        assert np.mean(m.predict(X) == y) > 0.8

    @pytest.mark.parametrize("cls", [RandomForestClassifier, BaggingClassifier, MLPClassifier])
    def test_learns_blobs(self, cls):
        X, y = _blobs(300, 4, seed=11)
        m = cls(random_state=0).fit(X, y)
        assert np.mean(m.predict(X) == y) > 0.85

    @pytest.mark.parametrize("name", sorted(ESTIMATORS))
    def test_sklearn_protocol(self, name):
        est = ESTIMATORS[name]()
        assert clone(est).get_params() == est.get_params()

    def test_non_binary_targets(self):
        with pytest.raises(ValueError, match="AD=1"):
            LogisticRegressionClassifier().fit(np.zeros((3, 1)), [0, 1, 2])

    def test_predict_width_checked(self):
        m = GaussianNaiveBayes().fit(*_blobs(50, 3))
        with pytest.raises(ValueError, match="expects 3 features"):
            m.predict(np.zeros((2, 4)))


class TestPredictionMatrix:
    def test_constant_prob_one(self):
        ds = Dataset(np.zeros((5, 1)), ("a",))
        c = TrainedClassifier(0, "const", "original", _Constant(1.0).fit(ds.values, [0, 1, 0, 1, 0]))
        pm = predict_matrix([c], ds)
        assert np.all(pm.votes[:, 0] == 1)

    def test_half_votes_ad(self):
        pm = PredictionMatrix.from_probs(np.array([[0.5, 0.4999]]))
        assert pm.votes.tolist() == [[1, -1]]

    def test_identical_classifiers_identical_columns(self):
        X, y = _blobs(80, 2)
        ds = Dataset(X, ("a", "b"), y)
        m = LogisticRegressionClassifier().fit(X, y)
        pm = predict_matrix([TrainedClassifier(0, "logreg", "o", m), TrainedClassifier(1, "logreg", "o", m)], ds)
        np.testing.assert_array_equal(pm.votes[:, 0], pm.votes[:, 1])

    def test_dimension_mismatch_names_classifier(self):
        X, y = _blobs(40, 2)
        m = LogisticRegressionClassifier().fit(X, y)
        with pytest.raises(DataError, match="classifier 7"):
            predict_matrix([TrainedClassifier(7, "logreg", "o", m)], Dataset(np.zeros((3, 5)), tuple("abcde")))

    def test_decision_consistency_invariant(self):
        probs = np.random.default_rng(0).random((50, 4))
        pm = PredictionMatrix.from_probs(probs)
        np.testing.assert_array_equal(pm.votes == 1, probs >= 0.5)
        with pytest.raises(ValueError):
            PredictionMatrix(np.ones((2, 2)), np.ones((2, 3)), [0, 1])

    def test_experts_accuracy(self):
        y = (np.random.default_rng(1).random(10000) < 0.3).astype(np.int8)
        pm = simulate_expert_votes(y, [0.7] * 35, seed=2)
        acc = pm.correct().mean(axis=0)
        assert pm.L == 35
        assert np.all(np.abs(acc - 0.7) <= 0.02)

    def test_expert_classifiers_match_simulation(self):
        y = np.array([1, 0, 1, 1, 0, 0], dtype=np.int8)
        truth = Dataset(y[:, None].astype(float), ("truth",), y)
        a = predict_matrix(expert_classifiers([0.6, 0.8], seed=3), spaces={"truth": truth})
        b = simulate_expert_votes(y, [0.6, 0.8], seed=3)
        np.testing.assert_array_equal(a.votes, b.votes)
        assert isinstance(expert_classifiers([0.5])[0].model, SimulatedExpert)

    def test_csv_round_trip(self, tmp_path):
        pm = PredictionMatrix.from_probs(np.array([[0.9, 0.1], [0.25, 0.75]]), [3, 8], np.array([1, 0]),
                                         np.array([10, 20]))
        pm.to_csv(tmp_path / "v.csv")
        back = PredictionMatrix.from_csv(tmp_path / "v.csv")
        np.testing.assert_array_equal(back.probs, pm.probs)
        np.testing.assert_array_equal(back.votes, pm.votes)
        assert back.classifier_ids == [3, 8] and back.labels.tolist() == [1, 0] and back.row_ids.tolist() == [10, 20]
        assert (tmp_path / "v.csv").read_text().splitlines()[0] == "row_id,vote_3,prob_3,vote_8,prob_8,outcome"

    def test_take_and_unlabeled_correct(self):
        pm = PredictionMatrix.from_probs(np.array([[0.9], [0.1], [0.6]]))
        assert pm.take([2, 0]).row_ids.tolist() == [2, 0]
        with pytest.raises(DataError):
            pm.correct()

    def test_derive_seed_stable(self):
        assert derive_seed(5, 1) == derive_seed(5, 1)
        assert derive_seed(5, 1) != derive_seed(5, 2)
