"""Loading, validating, and splitting software-metric defect datasets.

Input files are plain UTF-8 CSVs in the Kaggle/PROMISE style: a header row,
numeric metric columns, and a binary defect label column. A
:class:`DatasetSchema` names the columns and the label/missing tokens; the
shipped :func:`default_schema` covers the common 21-metric JM1-style layout
but any column set can be configured.

Tables are immutable once built. Missing cells are tracked in a boolean mask
(stored as 0.0 in the feature matrix) and left for the preprocessing stage to
impute; ingestion itself never invents values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MissingColumn,
    SingleClassDataset,
    UnknownLabelToken,
    UnparseableCell,
)

# Metric columns of the JM1/KC1-style NASA files the Kaggle dataset mirrors.
JM1_FEATURES = (
    "loc", "v(g)", "ev(g)", "iv(g)", "n", "v", "l", "d", "i", "e", "b", "t",
    "lOCode", "lOComment", "lOBlank", "locCodeAndComment",
    "uniq_Op", "uniq_Opnd", "total_Op", "total_Opnd", "branchCount",
)


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout and token conventions of one CSV file."""

    feature_names: tuple[str, ...]
    label_name: str = "defects"
    positive_token: str = "true"
    negative_token: str = "false"
    missing_token: str = "?"

    def __post_init__(self):
        if not self.feature_names:
            raise ValueError("feature_names must be non-empty")
        if self.label_name in self.feature_names:
            raise ValueError("label column cannot also be a feature column")
        if self.positive_token == self.negative_token:
            raise ValueError("positive and negative label tokens must differ")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def default_schema() -> DatasetSchema:
    """The shipped 21-metric JM1-style schema with a 'defects' label."""
    return DatasetSchema(feature_names=JM1_FEATURES)


@dataclass(frozen=True, eq=False)
class DatasetTable:
    """Dense numeric metrics plus binary labels and a missing-cell mask."""

    features: np.ndarray
    labels: np.ndarray
    missing_mask: np.ndarray
    schema: DatasetSchema

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        mask = np.ascontiguousarray(self.missing_mask, dtype=bool)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if features.shape != mask.shape:
            raise ValueError("missing_mask shape must match features")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels length must match feature rows")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if features.shape[1] != self.schema.n_features:
            raise ValueError("feature column count must match schema")
        for arr, name in ((features, "features"), (labels, "labels"), (mask, "missing_mask")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, indices: np.ndarray) -> "DatasetTable":
        """New table holding the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return DatasetTable(
            features=self.features[idx],
            labels=self.labels[idx],
            missing_mask=self.missing_mask[idx],
            schema=self.schema,
        )

    def with_features(self, features: np.ndarray, missing_mask: np.ndarray | None = None) -> "DatasetTable":
        """Same rows/labels with a replaced feature matrix."""
        mask = self.missing_mask if missing_mask is None else missing_mask
        return DatasetTable(features=features, labels=self.labels, missing_mask=mask, schema=self.schema)


@dataclass(frozen=True, eq=False)
class SplitPair:
    """A train/test partition at a given training percentage."""

    train: DatasetTable
    test: DatasetTable
    tp: int
    seed: int
    train_indices: np.ndarray = field(repr=False, default=None)
    test_indices: np.ndarray = field(repr=False, default=None)


def load_csv(path: str, schema: DatasetSchema) -> DatasetTable:
    """Parse a CSV file into a table, column-ordered by the schema.

    Cells equal to the schema's missing token are stored as 0.0 with the
    mask bit set. Label cells must match the positive or negative token
    exactly (after whitespace stripping).
    """
    import csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(schema.label_name) from None
        col_idx = {name: i for i, name in enumerate(header)}
        for name in (*schema.feature_names, schema.label_name):
            if name not in col_idx:
                raise MissingColumn(name)
        feat_pos = [col_idx[name] for name in schema.feature_names]
        label_pos = col_idx[schema.label_name]

        feats, labels, mask = [], [], []
        for row_idx, row in enumerate(reader):
            cells = [c.strip() for c in row]
            if len(cells) < len(header):
                raise UnparseableCell(row_idx, header[len(cells)], "<missing cell>")
            token = cells[label_pos]
            if token == schema.positive_token:
                labels.append(1)
            elif token == schema.negative_token:
                labels.append(0)
            else:
                raise UnknownLabelToken(row_idx, token)
            frow = np.zeros(len(feat_pos))
            mrow = np.zeros(len(feat_pos), dtype=bool)
            for j, pos in enumerate(feat_pos):
                cell = cells[pos]
                if cell == schema.missing_token:
                    mrow[j] = True
                else:
                    try:
                        frow[j] = float(cell)
                    except ValueError:
                        raise UnparseableCell(row_idx, schema.feature_names[j], cell) from None
            feats.append(frow)
            mask.append(mrow)

    n = len(feats)
    features = np.array(feats) if n else np.zeros((0, schema.n_features))
    missing = np.array(mask) if n else np.zeros((0, schema.n_features), dtype=bool)
    return DatasetTable(
        features=features,
        labels=np.array(labels, dtype=np.int64),
        missing_mask=missing,
        schema=schema,
    )


def class_counts(table: DatasetTable) -> tuple[int, int]:
    """(positive rows, negative rows)."""
    n_pos = int(np.count_nonzero(table.labels == 1))
    return n_pos, table.rows - n_pos


def stratified_split(table: DatasetTable, tp: int, seed: int) -> SplitPair:
    """Seeded per-class split placing ~tp% of each class in train.

    Per-class train counts come from the largest-remainder rule: the overall
    train size is floor(rows * tp / 100), each class contributes at least
    floor(class_count * tp / 100) rows, and leftover slots go to classes by
    descending fractional part (ties broken by ascending class label). Row
    membership within a class is a seeded shuffle; output tables keep the
    source row order.
    """
    if not 1 <= tp <= 99:
        raise ValueError(f"tp must be in 1..99, got {tp}")
    n_pos, n_neg = class_counts(table)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("both classes must be present to stratify")

    total_train = int(np.floor(table.rows * tp / 100.0))
    exact = {label: count * tp / 100.0 for label, count in ((0, n_neg), (1, n_pos))}
    base = {label: int(np.floor(v)) for label, v in exact.items()}
    leftover = total_train - sum(base.values())
    by_frac = sorted(exact, key=lambda lbl: (-(exact[lbl] - base[lbl]), lbl))
    for lbl in by_frac[:leftover]:
        base[lbl] += 1

    rng = np.random.default_rng(seed)
    train_idx = []
    for label in (0, 1):
        class_rows = np.flatnonzero(table.labels == label)
        order = rng.permutation(class_rows.size)
        train_idx.append(class_rows[order[: base[label]]])
    train_indices = np.sort(np.concatenate(train_idx))
    test_indices = np.setdiff1d(np.arange(table.rows), train_indices)
    return SplitPair(
        train=table.take(train_indices),
        test=table.take(test_indices),
        tp=tp,
        seed=seed,
        train_indices=train_indices,
        test_indices=test_indices,
    )
