"""Declarative run configuration (YAML) with strict validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .aggregation import ABLATION_VARIANTS
from .experiments import SENTIMENT_SOURCES
from .models import ARCHS, TASKS


class ConfigError(Exception):
    pass


_SECTION_KEYS = {
    None: {"tickers", "start", "end", "out_dir", "seed", "workers",
           "data", "sentiment", "aggregation", "experiment", "models"},
    "data": {"source", "n_days", "price_endpoint", "news_endpoint"},
    "sentiment": {"backends", "labeled_corpus", "backend_order"},
    "aggregation": {"close_cutoff", "wo_sum_drops_minmax"},
    "experiment": {"sources", "archs", "tasks", "variant", "seeds",
                   "ablation_source", "ablation_archs"},
}

_DEFAULTS = {
    "tickers": list,
    "seed": 0,
    "workers": 1,
}


@dataclass
class RunConfig:
    raw: dict
    path: str = ""

    # convenience accessors -------------------------------------------------
    @property
    def tickers(self):
        return self.raw["tickers"]

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["out_dir"])

    @property
    def seed(self) -> int:
        return self.raw.get("seed", 0)

    @property
    def workers(self) -> int:
        return self.raw.get("workers", 1)

    @property
    def data(self) -> dict:
        return self.raw.get("data", {"source": "synthetic"})

    @property
    def backends(self) -> list:
        return self.raw.get("sentiment", {}).get("backends", [])

    @property
    def backend_order(self) -> list:
        sent = self.raw.get("sentiment", {})
        return sent.get("backend_order") or [b["id"] for b in self.backends]

    @property
    def aggregation(self) -> dict:
        return self.raw.get("aggregation", {})

    @property
    def experiment(self) -> dict:
        return self.raw.get("experiment", {})

    @property
    def models(self) -> dict:
        return self.raw.get("models", {})

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()[:16]


def validate(raw: dict) -> list:
    """Collect every validation problem at once; empty list means valid."""
    errors = []
    if not isinstance(raw, dict):
        return ["config root must be a mapping"]
    unknown = set(raw) - _SECTION_KEYS[None]
    errors += [f"unknown top-level key: {k}" for k in sorted(unknown)]
    for section in ("data", "sentiment", "aggregation", "experiment"):
        sub = raw.get(section)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            errors.append(f"section {section!r} must be a mapping")
            continue
        unknown = set(sub) - _SECTION_KEYS[section]
        errors += [f"unknown key in {section}: {k}" for k in sorted(unknown)]
    if not raw.get("tickers"):
        errors.append("tickers: at least one ticker required")
    if not raw.get("out_dir"):
        errors.append("out_dir: required")
    data = raw.get("data", {})
    if isinstance(data, dict) and data.get("source") not in (None, "synthetic", "http"):
        errors.append(f"data.source must be 'synthetic' or 'http', got {data.get('source')!r}")
    exp = raw.get("experiment", {})
    if isinstance(exp, dict):
        for s in exp.get("sources", []):
            if s not in SENTIMENT_SOURCES:
                errors.append(f"experiment.sources: unknown source {s!r}")
        for a in exp.get("archs", []):
            if a not in ARCHS:
                errors.append(f"experiment.archs: unknown architecture {a!r}")
        for t in exp.get("tasks", []):
            if t not in TASKS:
                errors.append(f"experiment.tasks: unknown task {t!r}")
        variant = exp.get("variant", "full")
        if variant not in ABLATION_VARIANTS:
            errors.append(f"experiment.variant: unknown variant {variant!r}")
        seeds = exp.get("seeds", [])
        if seeds and not all(isinstance(s, int) for s in seeds):
            errors.append("experiment.seeds: must be integers")
    models = raw.get("models", {})
    if isinstance(models, dict):
        for arch in models:
            if arch not in ARCHS:
                errors.append(f"models: unknown architecture {arch!r}")
    return errors


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    raw = yaml.safe_load(path.read_text())
    errors = validate(raw)
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return RunConfig(raw=copy.deepcopy(raw), path=str(path))
