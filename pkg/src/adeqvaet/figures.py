"""Figure rendering for sweep reports.

The evaluate path writes these PNGs next to the delimited report output:
one epoch-curve panel per training percentage, a final-metrics-vs-TP chart,
and (when baseline numbers are supplied) per-TP comparison bars. Metric
computation stays in the evaluation module; this module only draws.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import BaselineRow, SweepReport, _baseline_sort_key

_METRICS = ("accuracy", "precision", "recall", "f1")
_LABELS = ("Accuracy", "Precision", "Recall", "F1-score")


def render_figures(
    report: SweepReport, out_dir: str, baselines: list[BaselineRow] | None = None
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    tps = sorted({r.tp_percent for r in report.rows})

    for tp in tps:
        rows = [r for r in report.rows if r.tp_percent == tp]
        checkpoints = sorted(r.epoch for r in rows if r.epoch is not None)
        final = next((r for r in rows if r.epoch is None), None)
        fig, axes = plt.subplots(2, 2, figsize=(9, 7), sharex=True)
        for ax, metric, label in zip(axes.ravel(), _METRICS, _LABELS):
            if checkpoints:
                values = [
                    getattr(next(r for r in rows if r.epoch == e), metric) * 100.0
                    for e in checkpoints
                ]
                ax.plot(checkpoints, values, marker="o")
            if final is not None:
                ax.axhline(getattr(final, metric) * 100.0, ls="--", color="gray", lw=1,
                           label=f"final {getattr(final, metric) * 100.0:.2f}")
                ax.legend(fontsize=8)
            ax.set_title(label)
            ax.set_ylabel("%")
            ax.grid(alpha=0.3)
        for ax in axes[1]:
            ax.set_xlabel("epoch")
        fig.suptitle(f"Test metrics by epoch, TP {tp}")
        fig.tight_layout()
        path = out / f"epoch_metrics_tp{tp}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    finals = [r for r in report.rows if r.epoch is None]
    if len(finals) >= 1:
        fig, ax = plt.subplots(figsize=(7, 5))
        xs = [r.tp_percent for r in sorted(finals, key=lambda r: r.tp_percent)]
        for metric, label in zip(_METRICS, _LABELS):
            ys = [getattr(r, metric) * 100.0 for r in sorted(finals, key=lambda r: r.tp_percent)]
            ax.plot(xs, ys, marker="o", label=label)
        ax.set_xlabel("training percentage")
        ax.set_ylabel("%")
        ax.set_title("Final test metrics by training percentage")
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out / "final_metrics_by_tp.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    for tp in tps:
        merged = sorted((b for b in (baselines or []) if b.tp == tp), key=_baseline_sort_key)
        if not merged:
            continue
        final = next((r for r in report.rows if r.tp_percent == tp and r.epoch is None), None)
        names = [b.model for b in merged]
        data = [[b.accuracy, b.precision, b.recall, b.f1] for b in merged]
        if final is not None:
            names.append("Proposed")
            data.append([getattr(final, m) * 100.0 for m in _METRICS])
        data = np.asarray(data)
        fig, ax = plt.subplots(figsize=(8, 5))
        x = np.arange(len(names))
        width = 0.2
        for k, label in enumerate(_LABELS):
            ax.bar(x + (k - 1.5) * width, data[:, k], width, label=label)
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("%")
        ax.set_title(f"Model comparison, TP {tp}")
        ax.legend()
        fig.tight_layout()
        path = out / f"comparison_tp{tp}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
