import numpy as np
import pytest

from corrdp.dataset import (
    Dataset,
    DatasetError,
    PreprocessConfig,
    denormalize,
    drop_missing_and_constant,
    load_csv,
    normalize,
    train_test_split,
)

from conftest import toy_dataset


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_missing_cell_recorded(self, tmp_path):
        path = write_csv(tmp_path, "a,b,label\n1,2,0\n3,,1\n5,6,0\n")
        ds = load_csv(path, "label")
        assert ds.missing_mask.sum() == 1
        assert ds.missing_mask[1, 1]
        assert np.isnan(ds.values[1, 1])

    def test_absent_label_column_named_in_error(self, tmp_path):
        path = write_csv(tmp_path, "a,b\n1,2\n3,4\n")
        with pytest.raises(DatasetError, match="outcome"):
            load_csv(path, "outcome")

    def test_census_style_encoding(self, tmp_path):
        # categorical columns become deterministic integer codes by sorted label
        text = (
            "age,workclass,hours,education,label\n"
            "39,Private,40,Bachelors,<=50K\n"
            "50,Self-emp,13,Bachelors,>50K\n"
            "38,Private,40,HS-grad,<=50K\n"
            "53,Federal,40,Masters,>50K\n"
        )
        ds = load_csv(write_csv(tmp_path, text), "label")
        assert ds.feature_names == ("age", "workclass", "hours", "education")
        # sorted categories: Federal=0, Private=1, Self-emp=2
        assert list(ds.column("workclass")) == [1.0, 2.0, 1.0, 0.0]
        # Bachelors=0, HS-grad=1, Masters=2
        assert list(ds.column("education")) == [0.0, 0.0, 1.0, 2.0]
        assert set(ds.label) == {-1.0, 1.0}

    def test_declared_numeric_reports_bad_cell(self, tmp_path):
        path = write_csv(tmp_path, "a,b,label\n1,2,0\n3,oops,1\n")
        with pytest.raises(DatasetError, match=r"row 3.*'b'"):
            load_csv(path, "label", categorical=())

    def test_duplicate_feature_names_rejected(self, tmp_path):
        path = write_csv(tmp_path, "a,a,label\n1,2,0\n3,4,1\n")
        with pytest.raises(DatasetError, match="duplicate"):
            load_csv(path, "label")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="no such file"):
            load_csv(tmp_path / "nope.csv", "label")


class TestDropMissingAndConstant:
    def make(self, values, mask):
        values = np.asarray(values, dtype=float)
        return Dataset(
            values=values,
            feature_names=tuple(f"f{j}" for j in range(values.shape[1])),
            label=np.array([(-1.0) ** i for i in range(values.shape[0])]),
            missing_mask=np.asarray(mask, dtype=bool),
        )

    def test_over_threshold_feature_removed(self):
        # 3 of 10 cells missing = 30% > 0.2
        values = np.zeros((10, 2))
        values[:, 1] = np.arange(10)
        values[:3, 0] = np.nan
        values[3:, 0] = np.arange(7)
        mask = np.zeros((10, 2), dtype=bool)
        mask[:3, 0] = True
        out = drop_missing_and_constant(self.make(values, mask), PreprocessConfig(missing_threshold=0.2))
        assert out.feature_names == ("f1",)
        assert out.audit[0][0] == "f0"

    def test_clean_dataset_unchanged(self):
        ds = toy_dataset([[1, 2], [3, 4], [5, 6]])
        out = drop_missing_and_constant(ds, PreprocessConfig())
        assert out.feature_names == ds.feature_names
        assert np.array_equal(out.values, ds.values)

    def test_constant_column_removed_regardless_of_threshold(self):
        ds = toy_dataset([[1.0, 1], [1.0, 2], [1.0, 3]])
        out = drop_missing_and_constant(ds, PreprocessConfig(missing_threshold=1.0))
        assert out.feature_names == ("f1",)

    def test_median_imputation(self):
        values = np.array([[1.0, 0], [np.nan, 1], [3.0, 2], [10.0, 3]])
        mask = np.zeros((4, 2), dtype=bool)
        mask[1, 0] = True
        out = drop_missing_and_constant(self.make(values, mask), PreprocessConfig(missing_threshold=0.5))
        assert out.values[1, 0] == 3.0  # median of 1, 3, 10
        assert out.missing_mask[1, 0]  # provenance retained

    def test_idempotent(self):
        values = np.array([[1.0, 0], [np.nan, 1], [3.0, 2], [10.0, 3]])
        mask = np.zeros((4, 2), dtype=bool)
        mask[1, 0] = True
        cfg = PreprocessConfig(missing_threshold=0.5)
        once = drop_missing_and_constant(self.make(values, mask), cfg)
        twice = drop_missing_and_constant(once, cfg)
        assert np.array_equal(once.values, twice.values)
        assert once.feature_names == twice.feature_names
        assert once.audit == twice.audit

    def test_all_features_removed_is_an_error(self):
        ds = toy_dataset([[1.0], [1.0], [1.0]])
        with pytest.raises(DatasetError, match="degenerate"):
            drop_missing_and_constant(ds, PreprocessConfig())

    def test_audit_length_tracks_removals(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(size=(8, 5))
        values[:, 2] = 7.0
        values[:, 4] = -1.0
        ds = toy_dataset(values)
        out = drop_missing_and_constant(ds, PreprocessConfig())
        assert len(out.audit) == ds.n_features - out.n_features == 2


class TestNormalize:
    def test_midpoint_symmetry(self):
        ds = toy_dataset([[0.0], [5.0], [10.0]], label=[-1, 1, -1])
        out = normalize(ds)
        assert np.allclose(out.values[:, 0], [-1.0, 0.0, 1.0])

    def test_two_value_case(self):
        ds = toy_dataset([[2.0], [2.0], [4.0]], label=[-1, 1, -1])
        out = normalize(ds)
        assert np.allclose(out.values[:, 0], [-1.0, -1.0, 1.0])

    def test_range_brute_force(self):
        rng = np.random.default_rng(42)
        ds = toy_dataset(rng.normal(size=(20, 3)) * 17 + 3)
        out = normalize(ds)
        for i in range(out.n_records):
            for j in range(out.n_features):
                assert -1.0 <= out.values[i, j] <= 1.0

    def test_inverse_recovers_values(self):
        rng = np.random.default_rng(7)
        ds = toy_dataset(rng.uniform(-50, 90, size=(12, 4)))
        back = denormalize(normalize(ds))
        assert np.abs(back.values - ds.values).max() < 1e-9

    def test_constant_feature_rejected(self):
        ds = toy_dataset([[1.0], [1.0], [1.0]])
        with pytest.raises(DatasetError, match="constant"):
            normalize(ds)


class TestTrainTestSplit:
    def test_deterministic_80_20(self):
        rng = np.random.default_rng(0)
        ds = toy_dataset(rng.uniform(size=(100, 3)), label=[(-1.0) ** i for i in range(100)])
        cfg = PreprocessConfig(split_ratio=0.8, seed=7)
        tr1, te1 = train_test_split(ds, cfg)
        tr2, te2 = train_test_split(ds, cfg)
        assert tr1.n_records == 80 and te1.n_records == 20
        assert np.array_equal(tr1.values, tr2.values)
        assert np.array_equal(te1.values, te2.values)

    def test_stratification_small(self):
        ds = toy_dataset(np.arange(20).reshape(10, 2), label=[1, -1] * 5)
        tr, te = train_test_split(ds, PreprocessConfig(split_ratio=0.5, seed=1))
        for part in (tr, te):
            assert (part.label == 1).sum() >= 2
            assert (part.label == -1).sum() >= 2

    def test_exact_partition(self):
        rng = np.random.default_rng(3)
        ds = toy_dataset(rng.uniform(size=(37, 2)))
        tr, te = train_test_split(ds, PreprocessConfig(split_ratio=0.7, seed=5))
        rows = {tuple(r) for r in ds.values}
        split_rows = [tuple(r) for r in tr.values] + [tuple(r) for r in te.values]
        assert len(split_rows) == ds.n_records
        assert set(split_rows) == rows

    def test_tiny_class_rejected(self):
        ds = toy_dataset([[0.0], [1.0], [2.0]], label=[1, 1, -1])
        with pytest.raises(DatasetError, match="fewer than 2"):
            train_test_split(ds, PreprocessConfig())


class TestDatasetInvariants:
    def test_needs_two_records(self):
        with pytest.raises(DatasetError):
            toy_dataset([[1.0, 2.0]], label=[1])

    def test_labels_must_be_pm1(self):
        with pytest.raises(DatasetError):
            toy_dataset([[1.0], [2.0]], label=[0, 2])

    def test_values_frozen(self):
        ds = toy_dataset([[1.0], [2.0]])
        with pytest.raises(ValueError):
            ds.values[0, 0] = 5.0

    def test_audit_json_roundtrip(self):
        import json

        ds = toy_dataset([[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]])
        out = drop_missing_and_constant(ds, PreprocessConfig())
        parsed = json.loads(out.audit_json())
        assert parsed == [{"feature": "f1", "reason": "single observed value"}]
