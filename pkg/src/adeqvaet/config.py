"""Run configuration: one JSON file per experiment, flags may override.

The resolved configuration (file values plus CLI overrides) is what gets
hashed into reports, so identical artifact bytes imply identical effective
settings. The master seed fans out into labeled sub-seeds per component; no
timestamps or host details ever enter an artifact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .ade import Dimension, SearchSpace
from .anra import PreprocessConfig
from .data_ingest import DatasetSchema
from .errors import ConfigError
from .evaluation import ClassifierSettings, EncoderSettings
from .transformer import TransformerConfig

CONFIG_VERSION = 1

DEFAULT_SEARCH_SPACE = (
    {"name": "lr", "lower": 1e-4, "upper": 1e-1, "kind": "log"},
    {"name": "weight_decay", "lower": 1e-6, "upper": 1e-1, "kind": "log"},
    {"name": "n_layers", "lower": 1, "upper": 4, "kind": "integer"},
)

TUNABLE_NAMES = {"lr", "weight_decay", "n_layers"}


@dataclass(frozen=True)
class SchemaConfig:
    label: str = "defects"
    positive: str = "true"
    negative: str = "false"
    missing: str = "?"
    features: tuple[str, ...] | None = None  # None: every non-label header column


@dataclass(frozen=True)
class AdeSettings:
    pop_size: int = 12
    max_generations: int = 10
    patience: int = 30
    crossover_mode: str = "binomial"
    adapt_c: float = 0.1
    inner_tp: int = 80
    objective_epochs: int = 100
    objective_batch_size: int = 64
    space: tuple[dict, ...] = DEFAULT_SEARCH_SPACE

    def search_space(self) -> SearchSpace:
        dims = []
        for entry in self.space:
            if entry["name"] not in TUNABLE_NAMES:
                raise ConfigError(
                    f"unknown tunable {entry['name']!r}; supported: {sorted(TUNABLE_NAMES)}"
                )
            dims.append(
                Dimension(
                    name=entry["name"],
                    lower=float(entry["lower"]),
                    upper=float(entry["upper"]),
                    kind=entry.get("kind", "continuous"),
                )
            )
        return SearchSpace(tuple(dims))


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    out: str = "runs/out"
    seed: int = 7
    threads: int = 1
    train_tp: int = 90
    schema: SchemaConfig = field(default_factory=SchemaConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    ade: AdeSettings = field(default_factory=AdeSettings)
    tps: tuple[int, ...] = (40, 50, 60, 70, 80, 90)
    checkpoints: tuple[int, ...] = (100, 200, 300, 400, 500)
    figures: bool = True

    def resolved_dict(self) -> dict:
        data = asdict(self)
        data["version"] = CONFIG_VERSION
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.resolved_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build_section(cls, data: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    coerced = dict(data)
    for key in ("features", "space"):
        if isinstance(coerced.get(key), list):
            coerced[key] = tuple(coerced[key])
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


def load_run_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file, applying CLI overrides on top."""
    raw = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    version = raw.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}, expected {CONFIG_VERSION}")

    sections = {
        "schema": SchemaConfig,
        "preprocess": PreprocessConfig,
        "encoder": EncoderSettings,
        "transformer": TransformerConfig,
        "classifier": ClassifierSettings,
        "ade": AdeSettings,
    }
    top_allowed = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    kwargs = {}
    for key, value in raw.items():
        if key in sections:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            kwargs[key] = _build_section(sections[key], value, key)
        elif key in ("tps", "checkpoints"):
            kwargs[key] = tuple(int(v) for v in value)
        else:
            kwargs[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    try:
        cfg = RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig):
    if cfg.encoder.epochs < 1:
        raise ConfigError("encoder.epochs must be >= 1")
    if cfg.classifier.epochs < 1:
        raise ConfigError("classifier.epochs must be >= 1")
    if not cfg.tps:
        raise ConfigError("tps must be non-empty")
    for tp in (*cfg.tps, cfg.train_tp, cfg.ade.inner_tp):
        if not 1 <= int(tp) <= 99:
            raise ConfigError(f"training percentage {tp} outside 1..99")
    if any(int(c) < 1 for c in cfg.checkpoints):
        raise ConfigError("checkpoints must be positive epoch numbers")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    cfg.ade.search_space()  # raises ConfigError on bad dimensions


def dataset_schema(cfg: RunConfig, csv_path: str) -> DatasetSchema:
    """Schema from config; feature names default to the non-label header columns."""
    sc = cfg.schema
    features = sc.features
    if features is None:
        import csv as _csv

        try:
            with open(csv_path, "r", encoding="utf-8", newline="") as fh:
                header = [h.strip() for h in next(_csv.reader(fh))]
        except (OSError, StopIteration) as exc:
            raise ConfigError(f"cannot read CSV header from {csv_path}: {exc}") from exc
        features = tuple(name for name in header if name != sc.label)
        if not features:
            raise ConfigError(f"no feature columns found in {csv_path}")
    return DatasetSchema(
        feature_names=tuple(features),
        label_name=sc.label,
        positive_token=sc.positive,
        negative_token=sc.negative,
        missing_token=sc.missing,
    )
