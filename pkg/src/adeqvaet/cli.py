"""Batch CLI for the defect-prediction pipeline.

Subcommands mirror the pipeline stages: preprocess, train, tune, evaluate,
plus gen-toy-data for the bundled synthetic dataset and benchmark for the
optimizer's standard test functions. One JSON config file drives a run;
--data/--out/--seed/--threads override config fields. Exit codes: 0 success,
1 runtime failure, 2 usage error. ADEQVAET_LOG={error,info,debug} sets log
verbosity (stderr only; artifacts never contain timing or host details).
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__, ade, anra, evaluation, qvae, toydata, transformer
from . import config as config_mod
from .data_ingest import DatasetSchema, DatasetTable, load_csv, stratified_split
from .diffcore import ParamStore
from .errors import AdeQvaetError, ConfigError
from .seeding import derive_seed

log = logging.getLogger("adeqvaet.cli")

_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("ADEQVAET_LOG", "info").lower()
    logging.basicConfig(
        level=_LEVELS.get(name, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@click.group()
@click.version_option(__version__)
def main():
    """Defect-prediction pipeline: preprocess, train, tune, evaluate."""
    _setup_logging()


def _fail_on_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except (AdeQvaetError, OSError) as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _pipeline_options(fn):
    for option in reversed(
        [
            click.option("--config", "config_path", type=click.Path(), required=True,
                         help="JSON run configuration."),
            click.option("--data", type=click.Path(), default=None, help="Dataset CSV override."),
            click.option("--out", type=click.Path(), default=None, help="Output directory override."),
            click.option("--seed", type=int, default=None, help="Master seed override."),
            click.option("--threads", type=int, default=None, help="Worker cap override."),
        ]
    ):
        fn = option(fn)
    return fn


def _load_config(config_path, data, out, seed, threads) -> config_mod.RunConfig:
    return config_mod.load_run_config(
        config_path, overrides={"data": data, "out": out, "seed": seed, "threads": threads}
    )


def _load_dataset(cfg: config_mod.RunConfig) -> DatasetTable:
    if cfg.data is None:
        raise ConfigError("no dataset given: set 'data' in the config or pass --data")
    schema = config_mod.dataset_schema(cfg, cfg.data)
    return load_csv(cfg.data, schema)


def _out_dir(cfg: config_mod.RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- preprocess ---------------------------------------------------------------


@main.command()
@_pipeline_options
@_fail_on_error
def preprocess(config_path, data, out, seed, threads):
    """Split at the configured train percentage and clean the training split."""
    cfg = _load_config(config_path, data, out, seed, threads)
    table = _load_dataset(cfg)
    tp = cfg.train_tp
    split = stratified_split(table, tp, derive_seed(cfg.seed, f"split:tp{tp}"))
    pre_cfg = replace(cfg.preprocess, seed=derive_seed(cfg.seed, f"preprocess:tp{tp}"))
    train_table, stats, report = anra.preprocess(split.train, pre_cfg)
    test_table = anra.apply_scaler(split.test, stats)

    out_dir = _out_dir(cfg)
    container = ParamStore()
    container.add("meta.tp", [[float(tp)]])  # keeps the artifact self-describing
    container.add("train.features", train_table.features)
    container.add("train.labels", train_table.labels.astype(np.float64).reshape(-1, 1))
    container.add("test.features", test_table.features)
    container.add("test.labels", test_table.labels.astype(np.float64).reshape(-1, 1))
    container.add("scaler.mean", stats.mean.reshape(1, -1))
    container.add("scaler.std", stats.std.reshape(1, -1))
    container.add("scaler.guard", stats.zero_guard.astype(np.float64).reshape(1, -1))
    container.save(out_dir / "preprocessed.bin")

    _write_json(
        out_dir / "report.json",
        {
            "tp": tp,
            "report": report.to_dict(),
            "schema": {
                "feature_names": list(table.schema.feature_names),
                "label_name": table.schema.label_name,
            },
            "config_hash": cfg.config_hash(),
        },
    )
    log.info("preprocess: %d train rows, %d test rows", train_table.rows, test_table.rows)
    click.echo(f"wrote {out_dir / 'preprocessed.bin'} and {out_dir / 'report.json'}")


def _load_preprocessed(cfg: config_mod.RunConfig) -> tuple[DatasetTable, DatasetTable, dict]:
    """Rebuild tables from preprocessed.bin alone (report.json is informational
    and may have been overwritten by a later evaluate run in the same dir)."""
    out_dir = Path(cfg.out)
    bin_path = out_dir / "preprocessed.bin"
    if not bin_path.exists():
        raise ConfigError(f"missing preprocessed artifacts in {out_dir}; run preprocess first")
    store = ParamStore.load(bin_path)
    n_features = store.get("train.features").shape[1]
    schema = DatasetSchema(feature_names=tuple(f"f{i}" for i in range(n_features)))

    def table(prefix: str) -> DatasetTable:
        feats = store.get(f"{prefix}.features")
        labels = store.get(f"{prefix}.labels").reshape(-1).astype(np.int64)
        return DatasetTable(
            features=feats,
            labels=labels,
            missing_mask=np.zeros(feats.shape, dtype=bool),
            schema=schema,
        )

    meta = {"tp": int(store.get("meta.tp")[0, 0])}
    return table("train"), table("test"), meta


def _build_encoder(cfg: config_mod.RunConfig, n_features: int, tp: int) -> qvae.QvaeModel:
    enc = cfg.encoder
    return qvae.QvaeModel.create(
        n_features=n_features,
        n_qubits=enc.n_qubits,
        n_layers=enc.n_layers,
        encoding_scale=enc.encoding_scale,
        beta=enc.beta,
        hidden=enc.hidden,
        seed=derive_seed(cfg.seed, f"qvae:tp{tp}"),
    )


def _train_encoder(cfg: config_mod.RunConfig, model, train_table, tp: int) -> list[float]:
    enc = cfg.encoder
    _, curve = qvae.train_qvae(
        train_table,
        model,
        epochs=enc.epochs,
        batch_size=enc.batch_size,
        lr=enc.lr,
        weight_decay=enc.weight_decay,
        seed=derive_seed(cfg.seed, f"qvae-train:tp{tp}"),
    )
    return curve


# --- train ----------------------------------------------------------------------


@main.command()
@_pipeline_options
@_fail_on_error
def train(config_path, data, out, seed, threads):
    """Train the encoder and classifier on preprocessed artifacts."""
    cfg = _load_config(config_path, data, out, seed, threads)
    train_table, test_table, meta = _load_preprocessed(cfg)
    tp = int(meta["tp"])
    out_dir = _out_dir(cfg)

    model = _build_encoder(cfg, train_table.n_features, tp)
    qvae_curve = _train_encoder(cfg, model, train_table, tp)
    z_train = qvae.encode_table(model, train_table)
    z_test = qvae.encode_table(model, test_table)

    checkpoint_rows = []

    def on_checkpoint(epoch, clf):
        preds = (transformer.predict_proba(clf, z_test) >= 0.5).astype(np.int64)
        row = evaluation.metrics(evaluation.confusion_matrix(preds, test_table.labels))
        checkpoint_rows.append(
            {
                "epoch": epoch,
                "accuracy": row.accuracy,
                "precision": row.precision,
                "recall": row.recall,
                "f1": row.f1,
            }
        )

    clf, clf_curve = transformer.train_classifier(
        z_train,
        train_table.labels,
        cfg.transformer,
        lr=cfg.classifier.lr,
        weight_decay=cfg.classifier.weight_decay,
        epochs=cfg.classifier.epochs,
        batch_size=cfg.classifier.batch_size,
        seed=derive_seed(cfg.seed, f"classifier:tp{tp}"),
        checkpoints=tuple(c for c in cfg.checkpoints if c <= cfg.classifier.epochs),
        on_checkpoint=on_checkpoint,
    )

    qvae.save_qvae(model, out_dir / "qvae_model.bin", out_dir / "qvae_model.json")
    transformer.save_classifier(clf, out_dir / "classifier.bin", out_dir / "classifier.json")
    preds = (transformer.predict_proba(clf, z_test) >= 0.5).astype(np.int64)
    final = evaluation.metrics(evaluation.confusion_matrix(preds, test_table.labels))
    _write_json(
        out_dir / "training_log.json",
        {
            "tp": tp,
            "qvae_loss": qvae_curve,
            "classifier_loss": clf_curve,
            "checkpoint_metrics": checkpoint_rows,
            "final_metrics": {
                "accuracy": final.accuracy,
                "precision": final.precision,
                "recall": final.recall,
                "f1": final.f1,
            },
            "config_hash": cfg.config_hash(),
        },
    )
    log.info("train: final test accuracy %.4f, f1 %.4f", final.accuracy, final.f1)
    click.echo(f"wrote model artifacts and {out_dir / 'training_log.json'}")


# --- tune -----------------------------------------------------------------------


@main.command()
@_pipeline_options
@_fail_on_error
def tune(config_path, data, out, seed, threads):
    """Search classifier hyperparameters with adaptive differential evolution."""
    cfg = _load_config(config_path, data, out, seed, threads)
    train_table, _, meta = _load_preprocessed(cfg)
    tp = int(meta["tp"])
    out_dir = _out_dir(cfg)

    model = _build_encoder(cfg, train_table.n_features, tp)
    _train_encoder(cfg, model, train_table, tp)
    latents = qvae.encode_table(model, train_table)

    inner = stratified_split(train_table, cfg.ade.inner_tp, derive_seed(cfg.seed, "ade-inner-split"))
    z_fit, y_fit = latents[inner.train_indices], inner.train.labels
    z_val, y_val = latents[inner.test_indices], inner.test.labels
    objective_seed = derive_seed(cfg.seed, "ade-objective")

    def objective(theta: dict) -> float:
        tcfg = replace(cfg.transformer, n_layers=int(theta.get("n_layers", cfg.transformer.n_layers)))
        clf, _ = transformer.train_classifier(
            z_fit,
            y_fit,
            tcfg,
            lr=float(theta.get("lr", cfg.classifier.lr)),
            weight_decay=float(theta.get("weight_decay", cfg.classifier.weight_decay)),
            epochs=cfg.ade.objective_epochs,
            batch_size=cfg.ade.objective_batch_size,
            seed=objective_seed,
        )
        preds = (transformer.predict_proba(clf, z_val) >= 0.5).astype(np.int64)
        return evaluation.metrics(evaluation.confusion_matrix(preds, y_val)).f1

    ade_cfg = ade.AdeConfig(
        pop_size=cfg.ade.pop_size,
        max_generations=cfg.ade.max_generations,
        patience=cfg.ade.patience,
        seed=derive_seed(cfg.seed, "ade"),
        crossover_mode=cfg.ade.crossover_mode,
        adapt_c=cfg.ade.adapt_c,
    )
    history_path = out_dir / "ade_history.jsonl"
    with open(history_path, "w", encoding="utf-8") as fh:
        result = ade.optimize(
            objective,
            cfg.ade.search_space(),
            ade_cfg,
            workers=cfg.threads,
            on_generation=lambda rec: fh.write(json.dumps(rec, sort_keys=True) + "\n"),
        )

    _write_json(
        out_dir / "best_theta.json",
        {
            "theta": result.best_theta,
            "best_f1": result.best_score,
            "evaluations": result.evaluations,
            "generations": result.generations,
            "config_hash": cfg.config_hash(),
        },
    )
    log.info("tune: best inner-validation F1 %.4f after %d evaluations",
             result.best_score, result.evaluations)
    click.echo(f"wrote {out_dir / 'best_theta.json'} and {history_path}")


# --- evaluate -------------------------------------------------------------------


@main.command()
@_pipeline_options
@click.option("--baselines", type=click.Path(), default=None,
              help="CSV of external baseline numbers (percent) to merge into csv/md output.")
@click.option("--figures/--no-figures", "figures_flag", default=None,
              help="Render PNG figures next to the reports (default from config).")
@_fail_on_error
def evaluate(config_path, data, out, seed, threads, baselines, figures_flag):
    """Run the full TP sweep and write report.{json,csv,md} plus figures."""
    cfg = _load_config(config_path, data, out, seed, threads)
    table = _load_dataset(cfg)
    out_dir = _out_dir(cfg)

    started = time.perf_counter()
    report = evaluation.tp_sweep(
        table,
        cfg.tps,
        cfg.preprocess,
        cfg.encoder,
        cfg.transformer,
        cfg.classifier,
        cfg.checkpoints,
        cfg.seed,
        config_hash=cfg.config_hash(),
    )
    log.info("evaluate: sweep over tps=%s took %.1f s", list(cfg.tps), time.perf_counter() - started)

    baseline_rows = evaluation.read_baselines(baselines) if baselines else None
    for fmt, name in (("json", "report.json"), ("csv", "report.csv"), ("markdown", "report.md")):
        merge = baseline_rows if fmt != "json" else None
        with open(out_dir / name, "w", encoding="utf-8") as fh:
            fh.write(evaluation.render_report(report, fmt, baselines=merge))

    want_figures = cfg.figures if figures_flag is None else figures_flag
    if want_figures:
        from . import figures as figures_mod

        written = figures_mod.render_figures(report, out_dir / "figures", baseline_rows)
        log.info("evaluate: rendered %d figures", len(written))
    click.echo(f"wrote {out_dir / 'report.json'}, report.csv, report.md")


# --- utilities ------------------------------------------------------------------


@main.command("gen-toy-data")
@click.option("--out", type=click.Path(), required=True, help="Destination CSV path.")
@click.option("--rows", type=int, default=500, show_default=True)
@click.option("--features", type=int, default=8, show_default=True)
@click.option("--positive-fraction", type=float, default=0.2, show_default=True)
@click.option("--separation", type=float, default=6.0, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@_fail_on_error
def gen_toy_data(out, rows, features, positive_fraction, separation, seed):
    """Write the bundled synthetic Gaussian-blob defect dataset."""
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = toydata.write_toy_csv(
        str(path),
        n_rows=rows,
        n_features=features,
        positive_fraction=positive_fraction,
        separation=separation,
        seed=seed,
    )
    click.echo(f"wrote {path} ({table.rows} rows, {table.n_features} features)")


@main.command()
@click.option("--function", "function_name", type=click.Choice(sorted(ade.BENCHMARKS)), default="sphere",
              show_default=True)
@click.option("--dim", type=int, default=5, show_default=True)
@click.option("--pop", type=int, default=30, show_default=True)
@click.option("--gens", type=int, default=300, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lower", type=float, default=-5.12, show_default=True)
@click.option("--upper", type=float, default=5.12, show_default=True)
@click.option("--fixed-f", type=float, default=None, help="Disable F sampling (classical DE).")
@click.option("--fixed-cr", type=float, default=None, help="Disable CR sampling (classical DE).")
@click.option("--adapt-c", type=float, default=0.1, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write per-generation JSONL here.")
@_fail_on_error
def benchmark(function_name, dim, pop, gens, seed, lower, upper, fixed_f, fixed_cr, adapt_c, out):
    """Minimize a standard test function and emit the per-generation history."""
    cfg = ade.AdeConfig(
        pop_size=pop,
        max_generations=gens,
        patience=gens,
        seed=seed,
        adapt_c=adapt_c,
        fixed_f=fixed_f,
        fixed_cr=fixed_cr,
    )
    started = time.perf_counter()
    best_vec, best_val, history = ade.minimize_function(
        ade.BENCHMARKS[function_name], lower, upper, dim, cfg
    )
    elapsed = time.perf_counter() - started
    lines = [json.dumps(rec, sort_keys=True) for rec in history]
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        for line in lines:
            click.echo(line)
    log.info("benchmark: %s d=%d took %.2f s", function_name, dim, elapsed)
    click.echo(f"best {function_name} value {best_val:.6g} at {np.round(best_vec, 6).tolist()}")


if __name__ == "__main__":
    main()
