"""Classification metrics, the TP-sweep experiment runner, and report output.

A sweep trains the full pipeline once per training percentage: stratified
split, training-split preprocessing (test rows only get the fitted scaler),
encoder training, latent extraction, classifier training with checkpoint
evaluations, and test metrics per checkpoint plus a final row. Reports
render as canonical JSON, flat CSV, or per-TP markdown tables; externally
supplied baseline numbers (given as percentages) merge into the human
formats as extra labeled rows above the Proposed rows.

Degenerate metric denominators yield 0, never NaN, so imbalance failures
stay visible. Rendered percentages use two decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import anra, qvae, transformer
from .data_ingest import DatasetTable, stratified_split
from .errors import EmptyMatrix, EmptyReport, LengthMismatch, UnknownFormat
from .seeding import derive_seed

# Row order of the comparison tables; unknown labels sort after, Proposed last.
BASELINE_ORDER = ("SVM", "DT", "RF", "LR", "QVA", "DE")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsRow:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp_percent: int | None = None
    epoch: int | None = None  # None marks the final (post-training) row


@dataclass
class SweepReport:
    rows: list[MetricsRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "rows": [
                {
                    "tp_percent": r.tp_percent,
                    "epoch": r.epoch,
                    "accuracy": r.accuracy,
                    "precision": r.precision,
                    "recall": r.recall,
                    "f1": r.f1,
                }
                for r in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepReport":
        rows = [
            MetricsRow(
                accuracy=r["accuracy"],
                precision=r["precision"],
                recall=r["recall"],
                f1=r["f1"],
                tp_percent=r["tp_percent"],
                epoch=r["epoch"],
            )
            for r in data["rows"]
        ]
        return cls(rows=rows, meta=data["meta"])


def confusion_matrix(predictions, labels) -> ConfusionMatrix:
    """Standard binary counts with defective (1) as the positive class."""
    preds = np.asarray(predictions, dtype=np.int64).reshape(-1)
    labs = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labs.shape:
        raise LengthMismatch(f"{preds.shape[0]} predictions vs {labs.shape[0]} labels")
    if preds.size == 0:
        raise EmptyMatrix("need at least one prediction")
    return ConfusionMatrix(
        tp=int(np.count_nonzero((preds == 1) & (labs == 1))),
        fp=int(np.count_nonzero((preds == 1) & (labs == 0))),
        fn=int(np.count_nonzero((preds == 0) & (labs == 1))),
        tn=int(np.count_nonzero((preds == 0) & (labs == 0))),
    )


def metrics(cm: ConfusionMatrix) -> MetricsRow:
    """Accuracy, precision, recall, F1 with 0/0 denominators mapping to 0."""
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no entries")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if (cm.tp + cm.fp) else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if (cm.tp + cm.fn) else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return MetricsRow(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


# --- sweep runner -------------------------------------------------------------


@dataclass(frozen=True)
class EncoderSettings:
    n_qubits: int = 8
    n_layers: int = 2
    encoding_scale: float = 0.5
    beta: float = 0.005
    hidden: int = 32
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.05
    weight_decay: float = 0.0


@dataclass(frozen=True)
class ClassifierSettings:
    lr: float = 0.01
    weight_decay: float = 1e-5
    epochs: int = 500
    batch_size: int = 64


def run_single_tp(
    dataset: DatasetTable,
    tp: int,
    preprocess_cfg: anra.PreprocessConfig,
    encoder: EncoderSettings,
    transformer_cfg: transformer.TransformerConfig,
    classifier: ClassifierSettings,
    checkpoints: tuple[int, ...],
    seed: int,
) -> list[MetricsRow]:
    """Split, preprocess, train, and evaluate at one training percentage."""
    split = stratified_split(dataset, tp, derive_seed(seed, f"split:tp{tp}"))
    pre_cfg = replace(preprocess_cfg, seed=derive_seed(seed, f"preprocess:tp{tp}"))
    train_table, stats, _ = anra.preprocess(split.train, pre_cfg)
    test_table = anra.apply_scaler(split.test, stats)

    model = qvae.QvaeModel.create(
        n_features=train_table.n_features,
        n_qubits=encoder.n_qubits,
        n_layers=encoder.n_layers,
        encoding_scale=encoder.encoding_scale,
        beta=encoder.beta,
        hidden=encoder.hidden,
        seed=derive_seed(seed, f"qvae:tp{tp}"),
    )
    qvae.train_qvae(
        train_table,
        model,
        epochs=encoder.epochs,
        batch_size=encoder.batch_size,
        lr=encoder.lr,
        weight_decay=encoder.weight_decay,
        seed=derive_seed(seed, f"qvae-train:tp{tp}"),
    )
    z_train = qvae.encode_table(model, train_table)
    z_test = qvae.encode_table(model, test_table)

    rows: list[MetricsRow] = []

    def test_row(clf) -> MetricsRow:
        preds = (transformer.predict_proba(clf, z_test) >= 0.5).astype(np.int64)
        return metrics(confusion_matrix(preds, test_table.labels))

    def on_checkpoint(epoch, clf):
        rows.append(replace(test_row(clf), tp_percent=tp, epoch=epoch))

    clf, _ = transformer.train_classifier(
        z_train,
        train_table.labels,
        transformer_cfg,
        lr=classifier.lr,
        weight_decay=classifier.weight_decay,
        epochs=classifier.epochs,
        batch_size=classifier.batch_size,
        seed=derive_seed(seed, f"classifier:tp{tp}"),
        checkpoints=tuple(c for c in checkpoints if c <= classifier.epochs),
        on_checkpoint=on_checkpoint,
    )
    rows.append(replace(test_row(clf), tp_percent=tp, epoch=None))
    return rows


def tp_sweep(
    dataset: DatasetTable,
    tps,
    preprocess_cfg: anra.PreprocessConfig,
    encoder: EncoderSettings,
    transformer_cfg: transformer.TransformerConfig,
    classifier: ClassifierSettings,
    checkpoints,
    seed: int,
    config_hash: str = "",
) -> SweepReport:
    """One pipeline run per training percentage, rows ordered by (tp, epoch)."""
    if not tps:
        raise ValueError("tps must be non-empty")
    rows: list[MetricsRow] = []
    for tp in tps:
        rows.extend(
            run_single_tp(
                dataset, tp, preprocess_cfg, encoder, transformer_cfg, classifier,
                tuple(checkpoints), seed,
            )
        )
    meta = {
        "master_seed": seed,
        "tps": list(tps),
        "checkpoints": list(checkpoints),
        "config_hash": config_hash,
    }
    return SweepReport(rows=rows, meta=meta)


# --- rendering ----------------------------------------------------------------


@dataclass(frozen=True)
class BaselineRow:
    """Externally supplied comparison numbers, already in percent."""

    model: str
    tp: int
    accuracy: float
    precision: float
    recall: float
    f1: float


def read_baselines(path: str) -> list[BaselineRow]:
    import csv

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                BaselineRow(
                    model=rec["model"].strip(),
                    tp=int(rec["tp"]),
                    accuracy=float(rec["accuracy"]),
                    precision=float(rec["precision"]),
                    recall=float(rec["recall"]),
                    f1=float(rec["f1"]),
                )
            )
    return rows


def _baseline_sort_key(row: BaselineRow):
    try:
        return (0, BASELINE_ORDER.index(row.model))
    except ValueError:
        return (1, row.model)


def _pct(fraction: float) -> str:
    return f"{fraction * 100.0:.2f}"


def _proposed_label(epoch: int | None) -> str:
    return "Proposed" if epoch is None else f"Proposed (epoch {epoch})"


def render_report(
    report: SweepReport, format: str, baselines: list[BaselineRow] | None = None
) -> str:
    """Render to 'json' (canonical, baselines excluded), 'csv', or 'markdown'."""
    if not report.rows:
        raise EmptyReport("report has no rows")
    if format == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if format == "csv":
        lines = ["model,tp,epoch,accuracy,precision,recall,f1"]
        tps = sorted({r.tp_percent for r in report.rows})
        for tp in tps:
            for b in sorted((b for b in (baselines or []) if b.tp == tp), key=_baseline_sort_key):
                lines.append(
                    f"{b.model},{tp},,{b.accuracy:.2f},{b.precision:.2f},{b.recall:.2f},{b.f1:.2f}"
                )
            for r in [r for r in report.rows if r.tp_percent == tp]:
                epoch = "final" if r.epoch is None else str(r.epoch)
                lines.append(
                    f"Proposed,{tp},{epoch},{_pct(r.accuracy)},{_pct(r.precision)},"
                    f"{_pct(r.recall)},{_pct(r.f1)}"
                )
        return "\n".join(lines) + "\n"
    if format == "markdown":
        out = []
        tps = sorted({r.tp_percent for r in report.rows})
        for tp in tps:
            out.append(f"## TP {tp}")
            out.append("")
            out.append("| Model | Accuracy | Precision | Recall | F1-score |")
            out.append("| --- | --- | --- | --- | --- |")
            for b in sorted((b for b in (baselines or []) if b.tp == tp), key=_baseline_sort_key):
                out.append(
                    f"| {b.model} | {b.accuracy:.2f} | {b.precision:.2f} "
                    f"| {b.recall:.2f} | {b.f1:.2f} |"
                )
            tp_rows = [r for r in report.rows if r.tp_percent == tp]
            for r in sorted(tp_rows, key=lambda r: (r.epoch is None, r.epoch or 0)):
                out.append(
                    f"| {_proposed_label(r.epoch)} | {_pct(r.accuracy)} | {_pct(r.precision)} "
                    f"| {_pct(r.recall)} | {_pct(r.f1)} |"
                )
            out.append("")
        return "\n".join(out)
    raise UnknownFormat(format)


def parse_report(text: str) -> SweepReport:
    return SweepReport.from_dict(json.loads(text))
