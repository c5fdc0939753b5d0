import numpy as np
import pytest

from adeqvaet.data_ingest import (
    DatasetSchema,
    DatasetTable,
    class_counts,
    default_schema,
    load_csv,
    stratified_split,
)
from adeqvaet.errors import (
    MissingColumn,
    SingleClassDataset,
    UnknownLabelToken,
    UnparseableCell,
)


def schema(names=("loc", "cc"), **kw):
    return DatasetSchema(feature_names=tuple(names), label_name="defects", **kw)


def make_table(features, labels, sch=None):
    features = np.asarray(features, dtype=float)
    sch = sch or DatasetSchema(
        feature_names=tuple(f"f{i}" for i in range(features.shape[1]))
    )
    return DatasetTable(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        missing_mask=np.zeros(features.shape, dtype=bool),
        schema=sch,
    )


class TestSchema:
    def test_default_schema_has_21_features(self):
        sch = default_schema()
        assert len(sch.feature_names) == 21
        assert sch.label_name == "defects"

    def test_invalid_schemas_rejected(self):
        with pytest.raises(ValueError):
            DatasetSchema(feature_names=())
        with pytest.raises(ValueError):
            DatasetSchema(feature_names=("a",), label_name="a")
        with pytest.raises(ValueError):
            DatasetSchema(feature_names=("a",), positive_token="x", negative_token="x")


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("loc,cc,defects\n10,2,true\n5,1,false\n")
        table = load_csv(path, schema())
        assert np.array_equal(table.features, [[10.0, 2.0], [5.0, 1.0]])
        assert np.array_equal(table.labels, [1, 0])
        assert not table.missing_mask.any()

    def test_missing_token_masks_cell(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("loc,cc,defects\n?,2,true\n")
        table = load_csv(path, schema())
        assert table.features[0, 0] == 0.0
        assert table.missing_mask[0, 0]
        assert not table.missing_mask[0, 1]

    def test_unknown_label_token(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("loc,cc,defects\n10,2,maybe\n")
        with pytest.raises(UnknownLabelToken) as exc:
            load_csv(path, schema())
        assert exc.value.row == 0

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("loc,defects\n10,true\n")
        with pytest.raises(MissingColumn) as exc:
            load_csv(path, schema())
        assert exc.value.name == "cc"

    def test_unparseable_cell(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("loc,cc,defects\nabc,2,true\n")
        with pytest.raises(UnparseableCell) as exc:
            load_csv(path, schema())
        assert (exc.value.row, exc.value.col) == (0, "loc")

    def test_column_order_follows_schema_not_file(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("loc,cc,defects\n10,2,true\n5,1,false\n")
        b.write_text("cc,defects,loc\n2,true,10\n1,false,5\n")
        ta = load_csv(a, schema())
        tb = load_csv(b, schema())
        assert np.array_equal(ta.features, tb.features)
        assert np.array_equal(ta.labels, tb.labels)
        assert np.array_equal(ta.missing_mask, tb.missing_mask)

    def test_alternate_label_tokens(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("loc,cc,defects\n1,2,yes\n3,4,no\n")
        table = load_csv(path, schema(positive_token="yes", negative_token="no"))
        assert np.array_equal(table.labels, [1, 0])


class TestClassCounts:
    def test_counts(self):
        assert class_counts(make_table(np.zeros((5, 1)), [1, 0, 0, 1, 1])) == (3, 2)

    def test_empty(self):
        table = make_table(np.zeros((0, 1)), [])
        assert class_counts(table) == (0, 0)

    def test_all_ones(self):
        assert class_counts(make_table(np.zeros((7, 1)), [1] * 7)) == (7, 0)


class TestStratifiedSplit:
    def test_exact_proportions(self):
        labels = [1] * 20 + [0] * 80
        table = make_table(np.arange(100).reshape(-1, 1), labels)
        pair = stratified_split(table, 90, seed=3)
        assert pair.train.rows == 90
        assert pair.test.rows == 10
        assert class_counts(pair.train) == (18, 72)
        assert class_counts(pair.test) == (2, 8)

    def test_exact_halves(self):
        table = make_table(np.arange(4).reshape(-1, 1), [1, 1, 0, 0])
        pair = stratified_split(table, 50, seed=0)
        assert pair.train.rows == 2
        assert class_counts(pair.train) == (1, 1)

    def test_deterministic(self):
        table = make_table(np.arange(30).reshape(-1, 1), [1] * 10 + [0] * 20)
        a = stratified_split(table, 70, seed=11)
        b = stratified_split(table, 70, seed=11)
        assert np.array_equal(a.train_indices, b.train_indices)
        assert np.array_equal(a.test_indices, b.test_indices)

    def test_single_class_rejected(self):
        table = make_table(np.arange(5).reshape(-1, 1), [1] * 5)
        with pytest.raises(SingleClassDataset):
            stratified_split(table, 50, seed=0)

    def test_roundtrip_counts_property(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            rows = int(rng.integers(10, 120))
            n_pos = int(rng.integers(1, rows))
            labels = np.zeros(rows, dtype=np.int64)
            labels[rng.permutation(rows)[:n_pos]] = 1
            if n_pos in (0, rows):
                continue
            table = make_table(rng.normal(size=(rows, 3)), labels)
            tp = int(rng.integers(1, 100))
            pair = stratified_split(table, tp, seed=trial)
            tr, te = class_counts(pair.train), class_counts(pair.test)
            assert (tr[0] + te[0], tr[1] + te[1]) == class_counts(table)
            assert set(pair.train_indices) & set(pair.test_indices) == set()
            assert len(pair.train_indices) + len(pair.test_indices) == rows

    def test_stratification_bound_property(self):
        rng = np.random.default_rng(1)
        for trial in range(25):
            rows = int(rng.integers(20, 200))
            n_pos = int(rng.integers(2, rows - 1))
            labels = np.zeros(rows, dtype=np.int64)
            labels[rng.permutation(rows)[:n_pos]] = 1
            table = make_table(rng.normal(size=(rows, 2)), labels)
            tp = int(rng.integers(10, 95))
            pair = stratified_split(table, tp, seed=trial)
            if pair.train.rows == 0:
                continue
            train_frac = class_counts(pair.train)[0] / pair.train.rows
            source_frac = n_pos / rows
            assert abs(train_frac - source_frac) <= 1.0 / pair.train.rows + 1e-12
