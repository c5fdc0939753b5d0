"""Adaptive noise reduction and augmentation for the training split.

The cleaning pipeline is deterministic and runs in a fixed order:
deduplicate -> impute (column median) -> winsorize (quartile fences) ->
standardize (z-score) -> oversample the minority class to parity. Test
splits only ever get :func:`apply_scaler` with the training statistics;
augmentation never touches them.

Oversampling is SMOTE-style: each synthetic row is a uniform point on the
segment between a random minority row and one of its k nearest minority
neighbors, drawn from a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_ingest import DatasetTable, class_counts
from .errors import AllMissingColumn, DimensionMismatch, MinorityTooSmall, TooFewRows


@dataclass(frozen=True)
class PreprocessConfig:
    winsor_k: float = 3.0
    smote_k: int = 5
    impute_policy: str = "median"
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.winsor_k < 0:
            raise ValueError("winsor_k must be >= 0")
        if self.smote_k < 1:
            raise ValueError("smote_k must be >= 1")
        if self.target_ratio <= 0:
            raise ValueError("target_ratio must be > 0")
        if self.impute_policy != "median":
            raise ValueError(f"unsupported impute policy {self.impute_policy!r}")


@dataclass(frozen=True, eq=False)
class ScalerStats:
    """Per-column mean and population stddev, with a zero-variance guard."""

    mean: np.ndarray
    std: np.ndarray
    zero_guard: np.ndarray  # bool per column: stddev was 0, outputs forced to 0

    def __post_init__(self):
        for name in ("mean", "std", "zero_guard"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_columns(self) -> int:
        return self.mean.shape[0]


@dataclass
class PreprocessReport:
    rows_in: int = 0
    duplicates_removed: int = 0
    cells_imputed: int = 0
    cells_winsorized: int = 0
    synthetic_rows_added: int = 0
    rows_out: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def deduplicate(table: DatasetTable) -> DatasetTable:
    """Drop exact repeats of (features, mask, label), keeping first occurrences."""
    seen = set()
    keep = []
    for i in range(table.rows):
        key = (table.features[i].tobytes(), table.missing_mask[i].tobytes(), int(table.labels[i]))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    if len(keep) == table.rows:
        return table
    return table.take(np.array(keep, dtype=np.int64))


def impute_missing(table: DatasetTable, policy: str = "median") -> DatasetTable:
    """Replace masked cells with the column median of observed values."""
    if policy != "median":
        raise ValueError(f"unsupported impute policy {policy!r}")
    if not table.missing_mask.any():
        return table
    features = np.array(table.features)
    for col in range(table.n_features):
        miss = table.missing_mask[:, col]
        if not miss.any():
            continue
        observed = features[~miss, col]
        if observed.size == 0:
            raise AllMissingColumn(table.schema.feature_names[col])
        features[miss, col] = np.median(observed)
    cleared = np.zeros_like(table.missing_mask)
    return table.with_features(features, missing_mask=cleared)


def winsorize(table: DatasetTable, k: float) -> tuple[DatasetTable, int]:
    """Clip each column to [Q1 - k*IQR, Q3 + k*IQR], quartiles interpolated."""
    if table.rows < 4:
        raise TooFewRows(f"winsorize needs >= 4 rows, got {table.rows}")
    q1, q3 = np.percentile(table.features, [25.0, 75.0], axis=0)
    iqr = q3 - q1
    lo = q1 - k * iqr
    hi = q3 + k * iqr
    clipped = np.clip(table.features, lo, hi)
    cells = int(np.count_nonzero(clipped != table.features))
    if cells == 0:
        return table, 0
    return table.with_features(clipped), cells


def standardize(table: DatasetTable) -> tuple[DatasetTable, ScalerStats]:
    """Z-score each column; zero-variance columns map to 0 and set the guard."""
    mean = table.features.mean(axis=0) if table.rows else np.zeros(table.n_features)
    std = table.features.std(axis=0) if table.rows else np.zeros(table.n_features)
    stats = ScalerStats(mean=mean, std=std, zero_guard=(std == 0.0))
    return apply_scaler(table, stats), stats


def apply_scaler(table: DatasetTable, stats: ScalerStats) -> DatasetTable:
    """Apply a previously fitted affine transform (train stats on test data)."""
    if stats.n_columns != table.n_features:
        raise DimensionMismatch(
            f"scaler has {stats.n_columns} columns, table has {table.n_features}"
        )
    safe_std = np.where(stats.zero_guard, 1.0, stats.std)
    out = (table.features - stats.mean) / safe_std
    out[:, stats.zero_guard] = 0.0
    return table.with_features(out)


def _minority_label(n_pos: int, n_neg: int) -> int:
    # Tie goes to the defective class: it is the one augmented in practice.
    return 1 if n_pos <= n_neg else 0


def smote_balance(
    table: DatasetTable, cfg: PreprocessConfig
) -> tuple[DatasetTable, int]:
    """Append interpolated minority rows until minority = round(ratio * majority)."""
    balanced, count, _ = smote_balance_traced(table, cfg)
    return balanced, count


def smote_balance_traced(
    table: DatasetTable, cfg: PreprocessConfig
) -> tuple[DatasetTable, int, list[tuple[int, int, float]]]:
    """smote_balance plus a provenance trace.

    The trace holds one (parent_row, neighbor_row, u) triple per synthetic
    row, with indices into the input table, so callers can verify each
    synthetic point is the stated convex combination.
    """
    n_pos, n_neg = class_counts(table)
    minority = _minority_label(n_pos, n_neg)
    min_count = n_pos if minority == 1 else n_neg
    maj_count = table.rows - min_count
    if min_count < 2:
        raise MinorityTooSmall(f"minority class has {min_count} rows, need >= 2")

    target = int(np.floor(cfg.target_ratio * maj_count + 0.5))
    needed = max(0, target - min_count)
    if needed == 0:
        return table, 0, []

    min_rows = np.flatnonzero(table.labels == minority)
    points = table.features[min_rows]
    k = min(cfg.smote_k, min_count - 1)

    # Pairwise distances are fine at minority-class sizes; argsort is stable,
    # so neighbor ranking is deterministic even under distance ties.
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    neighbor_lists = np.argsort(dist, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(cfg.seed)
    synth = np.empty((needed, table.n_features))
    trace = []
    for i in range(needed):
        s = int(rng.integers(min_count))
        nn = int(neighbor_lists[s, int(rng.integers(k))])
        u = float(rng.random())
        synth[i] = points[s] + u * (points[nn] - points[s])
        trace.append((int(min_rows[s]), int(min_rows[nn]), u))

    features = np.vstack([table.features, synth])
    labels = np.concatenate([table.labels, np.full(needed, minority, dtype=np.int64)])
    mask = np.vstack([table.missing_mask, np.zeros((needed, table.n_features), dtype=bool)])
    out = DatasetTable(features=features, labels=labels, missing_mask=mask, schema=table.schema)
    return out, needed, trace


def preprocess(
    table: DatasetTable, cfg: PreprocessConfig
) -> tuple[DatasetTable, ScalerStats, PreprocessReport]:
    """Full training-split pipeline; test splits take apply_scaler instead."""
    report = PreprocessReport(rows_in=table.rows)
    deduped = deduplicate(table)
    report.duplicates_removed = table.rows - deduped.rows
    report.cells_imputed = int(deduped.missing_mask.sum())
    imputed = impute_missing(deduped, cfg.impute_policy)
    winsorized, report.cells_winsorized = winsorize(imputed, cfg.winsor_k)
    scaled, stats = standardize(winsorized)
    balanced, report.synthetic_rows_added = smote_balance(scaled, cfg)
    report.rows_out = balanced.rows
    return balanced, stats, report
