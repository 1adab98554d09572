import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delearning.data import (MEASURE_COUNTS, MEASURE_SCHEMA, Dataset, DataError, MinMaxNormalizer, Outcome,
                             SchemaGroup, SynthTables, encode_labels, load_csv, normalize, split, split_indices,
                             synth_generate, validate_schema, write_csv)


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_three_rows_two_features(self, tmp_path):
        ds = load_csv(_write(tmp_path, "a,b,outcome\n1,2,AD\n3,4,NDC\n5,6,AD\n"))
        assert (ds.n, ds.d) == (3, 2)
        assert ds.labels.tolist() == [1, 0, 1]
        assert ds.feature_names == ("a", "b")

    def test_missing_label_column_gives_unlabeled(self, tmp_path):
        ds = load_csv(_write(tmp_path, "a,b\n1,2\n3,4\n"))
        assert not ds.is_labeled and ds.labels is None

    def test_nan_cell_names_row_and_column(self, tmp_path):
        with pytest.raises(DataError, match=r"row 3, column 'b'"):
            load_csv(_write(tmp_path, "a,b,outcome\n1,2,AD\n3,NaN,NDC\n"))

    def test_wrong_arity(self, tmp_path):
        with pytest.raises(DataError, match="row 2 has 2 fields"):
            load_csv(_write(tmp_path, "a,b,outcome\n1,AD\n"))

    def test_non_numeric_and_unknown_label(self, tmp_path):
        with pytest.raises(DataError, match="non-numeric"):
            load_csv(_write(tmp_path, "a,outcome\nx,AD\n"))
        with pytest.raises(DataError, match="unknown label value 'MCI'"):
            load_csv(_write(tmp_path, "a,outcome\n1,MCI\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(_write(tmp_path, ""))

    def test_round_trip_with_ids(self, tmp_path):
        ds = Dataset(np.array([[0.25, 3.0], [1.5, -2.0]]), ("x", "y"), np.array([1, 0]), np.array([7, 3]))
        p = tmp_path / "rt.csv"
        write_csv(ds, p, id_column="rid")
        back = load_csv(p, id_column="rid")
        np.testing.assert_array_equal(back.values, ds.values)
        np.testing.assert_array_equal(back.row_ids, [7, 3])
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError, match="non-finite"):
            Dataset(np.array([[1.0, np.inf]]), ("a", "b"))

    def test_read_only(self):
        ds = Dataset(np.zeros((2, 1)), ("a",))
        with pytest.raises(ValueError):
            ds.values[0, 0] = 1.0

    def test_string_labels_and_outcome_codes(self):
        assert encode_labels(["AD", "NDC", 1, 0]).tolist() == [1, 0, 1, 0]
        assert Outcome.from_code(1) is Outcome.AD and Outcome.NDC.code == 0
        with pytest.raises(DataError):
            encode_labels(["maybe"])

    def test_class_counts_and_take(self):
        ds = Dataset(np.arange(8.0).reshape(4, 2), ("a", "b"), np.array([1, 0, 0, 1]))
        assert ds.class_counts() == {Outcome.AD: 2, Outcome.NDC: 2}
        sub = ds.take([3, 0])
        assert sub.row_ids.tolist() == [3, 0] and sub.labels.tolist() == [1, 1]


class TestNormalize:
    def test_min_max_arithmetic(self):
        ds = Dataset(np.array([[2.0, 5.0, 0.0], [4.0, 5.0, 0.5], [6.0, 5.0, 1.0]]), ("a", "b", "c"))
        out = normalize(ds).values
        np.testing.assert_allclose(out[:, 0], [0, 0.5, 1])
        np.testing.assert_array_equal(out[:, 1], [0, 0, 0])
        np.testing.assert_array_equal(out[:, 2], ds.values[:, 2])

    def test_empty_raises(self):
        with pytest.raises(DataError):
            normalize(Dataset(np.zeros((0, 2)), ("a", "b")))

    def test_clips_unseen_rows(self):
        m = MinMaxNormalizer().fit([[0.0], [10.0]])
        np.testing.assert_array_equal(m.transform([[-5.0], [5.0], [20.0]]).ravel(), [0.0, 0.5, 1.0])

    def test_serialization(self):
        m = MinMaxNormalizer().fit([[0.0, 3.0], [10.0, 3.0]])
        back = MinMaxNormalizer.from_dict(m.to_dict())
        X = np.array([[2.5, 3.0]])
        np.testing.assert_array_equal(back.transform(X), m.transform(X))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=1, max_size=20))
    def test_idempotent(self, rows):
        ds = Dataset(np.array(rows), ("a", "b", "c"))
        once = normalize(ds)
        np.testing.assert_array_equal(normalize(once).values, once.values)
        assert once.values.min() >= 0.0 and once.values.max() <= 1.0


class TestSplit:
    def test_balanced_halves(self):
        ds = Dataset(np.arange(100.0)[:, None], ("a",), np.array([1] * 50 + [0] * 50))
        tr, te = split(ds, 0.5, seed=3)
        assert tr.n == te.n == 50
        assert int(tr.labels.sum()) == int(te.labels.sum()) == 25

    def test_full_size_split(self):
        labels = np.array([1] * 6950 + [0] * 16215)
        _, test = split_indices(labels, 11500 / 23165, seed=0)
        assert len(test) == 11500

    def test_deterministic_and_seed_sensitive(self):
        labels = np.random.default_rng(0).integers(0, 2, 300)
        a = split_indices(labels, 0.3, 5)
        b = split_indices(labels, 0.3, 5)
        c = split_indices(labels, 0.3, 6)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not np.array_equal(a[1], c[1])

    def test_tiny_class_rejected(self):
        with pytest.raises(DataError, match="at least 2"):
            split_indices(np.array([1, 0, 0, 0]), 0.5, 0)

    def test_unlabeled_rejected(self):
        with pytest.raises(DataError):
            split(Dataset(np.zeros((4, 1)), ("a",)), 0.5, 0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 200), st.integers(2, 200), st.floats(0.05, 0.95), st.integers(0, 10_000))
    def test_partition_and_stratification(self, n_ad, n_ndc, frac, seed):
        labels = np.array([1] * n_ad + [0] * n_ndc)
        tr, te = split_indices(labels, frac, seed)
        assert len(np.intersect1d(tr, te)) == 0
        assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(len(labels)))
        for c, n_c in ((1, n_ad), (0, n_ndc)):
            assert abs(np.sum(labels[te] == c) - frac * n_c) <= 1.0


class TestSchema:
    def test_measure_group_sizes(self):
        validate_schema(MEASURE_SCHEMA)
        assert sum(len(g.measures) for g in MEASURE_SCHEMA) == 100
        assert {g.name: len(g.measures) for g in MEASURE_SCHEMA} == MEASURE_COUNTS

    def test_bad_schema(self):
        with pytest.raises(DataError):
            validate_schema([SchemaGroup("A", ("m1", "m1"), 2)])


class TestSynth:
    def test_shape_and_determinism(self):
        a, ta = synth_generate(n=500, seed=7)
        b, tb = synth_generate(n=500, seed=7)
        assert (a.n, a.d) == (500, 100)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert ta.to_dict() == tb.to_dict()

    def test_noiseless_is_deterministic_function(self):
        ds, tables = synth_generate(n=3000, noise=0.0, seed=2)
        assert tables.bayes_optimal_accuracy() == 1.0
        assert np.mean(tables.bayes_predict(ds.values) == ds.labels) == 1.0

    def test_noise_half_carries_no_information(self):
        ds, tables = synth_generate(n=4000, noise=0.5, class_balance=0.3, seed=2)
        assert tables.bayes_optimal_accuracy() == pytest.approx(0.7)
        assert tables.to_dict()["label_information"] == "none"

    def test_empirical_bayes_matches_analytic(self):
        ds, tables = synth_generate(n=20000, noise=0.2, seed=5)
        emp = float(np.mean(tables.bayes_predict(ds.values) == ds.labels))
        assert abs(emp - tables.bayes_optimal_accuracy()) <= 0.01

    def test_label_frequency_within_3_sigma(self):
        n, p = 20000, 0.3
        ds, _ = synth_generate(n=n, class_balance=p, seed=9)
        assert abs(ds.labels.mean() - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_levels_within_cardinality(self, small_synth):
        ds, tables = small_synth
        for j in range(ds.d):
            card = tables.groups[tables.group_of[j]]["cardinality"]
            assert ds.values[:, j].min() >= 0 and ds.values[:, j].max() <= card - 1

    def test_tables_round_trip(self, small_synth, tmp_path):
        _, tables = small_synth
        tables.save(tmp_path / "t.json")
        import json
        back = SynthTables.from_dict(json.loads((tmp_path / "t.json").read_text()))
        assert back.bayes_optimal_accuracy() == tables.bayes_optimal_accuracy()

    @pytest.mark.parametrize("kw", [{"n": 1}, {"class_balance": 1.0}, {"noise": 0.7}])
    def test_invalid_args(self, kw):
        with pytest.raises(DataError):
            synth_generate(**kw)
