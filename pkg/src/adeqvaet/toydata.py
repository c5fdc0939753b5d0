"""Bundled synthetic defect dataset for tests and demos.

Seeded Gaussian blobs with label-correlated means: non-defective rows center
at the origin, defective rows at a random direction scaled so the class
means sit `separation` apart in Mahalanobis distance (unit within-class
variance). Class counts are exact, row order is a seeded shuffle, and the
CSV bytes are deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np

from .data_ingest import DatasetSchema, DatasetTable


def toy_schema(n_features: int = 8) -> DatasetSchema:
    return DatasetSchema(
        feature_names=tuple(f"m{i + 1}" for i in range(n_features)),
        label_name="defects",
        positive_token="true",
        negative_token="false",
        missing_token="?",
    )


def toy_table(
    n_rows: int = 500,
    n_features: int = 8,
    positive_fraction: float = 0.2,
    separation: float = 6.0,
    seed: int = 7,
) -> DatasetTable:
    rng = np.random.default_rng(seed)
    n_pos = int(round(positive_fraction * n_rows))
    labels = np.zeros(n_rows, dtype=np.int64)
    labels[:n_pos] = 1
    labels = labels[rng.permutation(n_rows)]

    direction = rng.normal(size=n_features)
    direction *= separation / np.sqrt((direction * direction).sum())
    features = rng.standard_normal((n_rows, n_features))
    features[labels == 1] += direction
    return DatasetTable(
        features=features,
        labels=labels,
        missing_mask=np.zeros((n_rows, n_features), dtype=bool),
        schema=toy_schema(n_features),
    )


def write_toy_csv(
    path: str,
    n_rows: int = 500,
    n_features: int = 8,
    positive_fraction: float = 0.2,
    separation: float = 6.0,
    seed: int = 7,
) -> DatasetTable:
    """Generate the toy table and write it as a loadable CSV."""
    table = toy_table(n_rows, n_features, positive_fraction, separation, seed)
    schema = table.schema
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([*schema.feature_names, schema.label_name]) + "\n")
        for i in range(table.rows):
            cells = [f"{v:.10g}" for v in table.features[i]]
            cells.append(schema.positive_token if table.labels[i] == 1 else schema.negative_token)
            fh.write(",".join(cells) + "\n")
    return table
