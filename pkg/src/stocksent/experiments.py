"""Experiment matrix runner, ablation suite, and avg ± sd report tables."""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import ABLATION_VARIANTS
from .metrics import classification_metrics, regression_metrics
from .models import ModelConfig
from .training import predict, train_from_config

logger = logging.getLogger(__name__)

SENTIMENT_SOURCES = ("NS", "finbert", "roberta", "deberta", "lr", "rf", "svm")
DEFAULT_SEEDS = tuple(range(10))


class ExperimentError(Exception):
    pass


@dataclass
class ExperimentSpec:
    tickers: list
    sources: list          # subset of SENTIMENT_SOURCES; NS = market features only
    archs: list
    task: str              # "classification" or "regression"
    variant: str = "full"
    seeds: tuple = DEFAULT_SEEDS

    def __post_init__(self):
        for s in self.sources:
            if s not in SENTIMENT_SOURCES:
                raise ExperimentError(f"unknown sentiment source {s!r}")
        if self.variant not in ABLATION_VARIANTS:
            raise ExperimentError(f"unknown ablation variant {self.variant!r}")

    def combos(self):
        return itertools.product(self.tickers, self.sources, self.archs, self.seeds)


@dataclass
class RunRecord:
    ticker: str
    source: str
    arch: str
    task: str
    variant: str
    seed: int
    metrics: dict
    config_hash: str = ""

    @property
    def key(self) -> str:
        return f"{self.ticker}|{self.source}|{self.arch}|{self.task}|{self.variant}|{self.seed}"


def record_key(ticker, source, arch, task, variant, seed) -> str:
    return f"{ticker}|{source}|{arch}|{task}|{variant}|{seed}"


def append_record(record: RunRecord, path: Path, lock=None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(dataclasses.asdict(record)) + "\n"
    if lock is None:
        lock = threading.Lock()
    with lock, open(path, "a") as f:
        f.write(line)


def load_records(path: Path) -> list:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            records.append(RunRecord(**rec))
    return records


def _run_one(ticker, source, arch, seed, spec, splits, model_overrides, config_hash):
    overrides = dict(model_overrides.get(arch, {})) if model_overrides else {}
    cfg = ModelConfig(arch=arch, task=spec.task, seed=seed,
                      seq_len=splits["train"].inputs.shape[1], **overrides)
    target = "binary" if spec.task == "classification" else "factor"
    trained = train_from_config(
        cfg,
        (splits["train"].inputs, getattr(splits["train"], target)),
        (splits["val"].inputs, getattr(splits["val"], target)),
        input_dim=splits["train"].inputs.shape[2])
    test = splits["test"]
    scores = predict(trained, test.inputs)
    if spec.task == "classification":
        metrics = classification_metrics(scores, test.binary)
    else:
        metrics = regression_metrics(scores, test.factor)
    return RunRecord(ticker=ticker, source=source, arch=arch, task=spec.task,
                     variant=spec.variant, seed=seed, metrics=metrics,
                     config_hash=config_hash)


def run_experiment(spec: ExperimentSpec, dataset_loader, records_path: Path,
                   model_overrides=None, workers: int = 1,
                   config_hash: str = "") -> list:
    """Train/evaluate every (ticker, source, arch, seed) combination.

    ``dataset_loader(ticker, source, variant)`` returns the windowed splits.
    Records append to ``records_path`` incrementally; rerunning with the same
    spec resumes, skipping keys already on disk.
    """
    done = {r.key for r in load_records(records_path)}
    lock = threading.Lock()
    # validate datasets up front so a missing one fails before any training
    datasets = {}
    for ticker, source in {(t, s) for t, s, _, _ in spec.combos()}:
        try:
            datasets[(ticker, source)] = dataset_loader(ticker, source, spec.variant)
        except FileNotFoundError as exc:
            raise ExperimentError(
                f"missing dataset for ({ticker}, {source}, {spec.variant}): {exc}") from exc

    pending = [(t, s, a, sd) for t, s, a, sd in spec.combos()
               if record_key(t, s, a, spec.task, spec.variant, sd) not in done]
    logger.info("run_experiment: %d pending, %d already complete", len(pending), len(done))

    build_lock = threading.Lock()

    def job(combo):
        ticker, source, arch, seed = combo
        splits = datasets[(ticker, source)]
        if workers > 1:
            with build_lock:  # global torch seeding is not thread-safe
                rec = _run_one(ticker, source, arch, seed, spec, splits,
                               model_overrides, config_hash)
        else:
            rec = _run_one(ticker, source, arch, seed, spec, splits,
                           model_overrides, config_hash)
        append_record(rec, records_path, lock)
        return rec

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            new_records = list(pool.map(job, pending))
    else:
        new_records = [job(c) for c in pending]
    return load_records(records_path) if done else new_records


def ablation_suite(spec: ExperimentSpec, dataset_loader, records_path: Path,
                   model_overrides=None, workers: int = 1,
                   config_hash: str = "") -> list:
    """Run all five ablation variants with identical seeds and splits."""
    if "lstm" not in spec.archs:
        raise ExperimentError("ablation suite requires lstm in the architecture list")
    records = []
    for variant in ABLATION_VARIANTS:
        vspec = dataclasses.replace(spec, variant=variant)
        records.extend(run_experiment(vspec, dataset_loader, records_path,
                                      model_overrides=model_overrides,
                                      workers=workers, config_hash=config_hash))
    return load_records(records_path)


# ---------------------------------------------------------------------------
# Reporting

TASK_METRICS = {"classification": ("f1", "auc"), "regression": ("mae", "rse")}


@dataclass
class ReportTable:
    task: str
    sources: list
    archs: list
    metric_names: tuple
    cells: dict = field(default_factory=dict)  # (source, arch, metric) -> (mean, sd, n)

    def cell_text(self, source, arch, metric) -> str:
        if (source, arch, metric) not in self.cells:
            return ""
        mean, sd, _ = self.cells[(source, arch, metric)]
        return f"{mean:.3f} ± {sd:.3f}"

    def to_text(self) -> str:
        headers = ["Model"] + [f"{a} {m}" for a in self.archs for m in self.metric_names]
        rows = [[s] + [self.cell_text(s, a, m) for a in self.archs
                       for m in self.metric_names] for s in self.sources]
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*headers), fmt.format(*["-" * w for w in widths])]
        lines += [fmt.format(*r) for r in rows]
        return "\n".join(lines)

    def to_csv(self, path: Path) -> None:
        import csv

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["model"] + [f"{a}_{m}" for a in self.archs for m in self.metric_names])
            for s in self.sources:
                w.writerow([s] + [self.cell_text(s, a, m) for a in self.archs
                                  for m in self.metric_names])


def aggregate_report(records, task: str, sources=None, archs=None,
                     group_by_variant: bool = False) -> ReportTable:
    """Pool records into avg ± sd cells (sd over seeds and tickers, n-1
    denominator), one row per sentiment source, one column group per arch."""
    records = [r for r in records if r.task == task]
    if not records:
        raise ExperimentError(f"no records for task {task!r}")
    row_of = (lambda r: r.variant) if group_by_variant else (lambda r: r.source)
    sources = list(sources) if sources else sorted({row_of(r) for r in records},
                                                   key=_source_order)
    archs = list(archs) if archs else sorted({r.arch for r in records})
    metric_names = TASK_METRICS[task]
    table = ReportTable(task=task, sources=sources, archs=archs, metric_names=metric_names)
    for s in sources:
        for a in archs:
            vals = [r.metrics for r in records if row_of(r) == s and r.arch == a]
            if not vals:
                logger.warning("report cell (%s, %s) has no records; left blank", s, a)
                continue
            if len(vals) < 2:
                raise ExperimentError(
                    f"cell ({s}, {a}) has a single run; need >= 2 seeds for avg ± sd")
            for m in metric_names:
                # sorted reduction keeps cells exactly invariant to record order
                xs = np.sort(np.array([v[m] for v in vals], dtype=float))
                table.cells[(s, a, m)] = (float(xs.mean()), float(xs.std(ddof=1)), len(xs))
    return table


def _source_order(s):
    try:
        return (0, SENTIMENT_SOURCES.index(s))
    except ValueError:
        return (1, s)


# ---------------------------------------------------------------------------
# Plots

def emit_venn(class_regions: dict, backend_ids, out_base: Path, title: str = "") -> list:
    """Three-circle Venn diagram with a count per region (2^3 - 1 areas).

    ``class_regions`` maps frozenset-of-backend-ids to counts for one class.
    More than 3 backends cannot be drawn; raises so the caller can fall back
    to a pairwise matrix.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Circle

    ids = sorted(backend_ids)
    if len(ids) > 3:
        raise ExperimentError(f"Venn diagram supports at most 3 backends, got {len(ids)}")
    if len(ids) == 3:
        centers = {ids[0]: (-0.5, 0.3), ids[1]: (0.5, 0.3), ids[2]: (0.0, -0.5)}
    elif len(ids) == 2:
        centers = {ids[0]: (-0.4, 0.0), ids[1]: (0.4, 0.0)}
    else:
        centers = {ids[0]: (0.0, 0.0)}
    fig, ax = plt.subplots(figsize=(5, 5))
    colors = ["tab:blue", "tab:orange", "tab:green"]
    for (bid, c), col in zip(centers.items(), colors):
        ax.add_patch(Circle(c, 0.85, alpha=0.3, color=col))
        ax.annotate(bid, c, xytext=(c[0] * 2.0, c[1] * 2.0), ha="center")
    for subset, count in class_regions.items():
        if not subset:
            continue
        pts = np.array([centers[b] for b in subset])
        pos = pts.mean(axis=0)
        # pull intersection labels toward the overlap core
        if len(subset) < len(ids):
            others = np.array([centers[b] for b in ids if b not in subset])
            pos = pos + 0.45 * (pos - others.mean(axis=0))
        ax.text(pos[0], pos[1], str(count), ha="center", va="center")
    outside = class_regions.get(frozenset(), 0)
    ax.text(0, -1.6, f"none correct: {outside}", ha="center")
    ax.set_xlim(-2, 2)
    ax.set_ylim(-2, 2)
    ax.set_aspect("equal")
    ax.axis("off")
    if title:
        ax.set_title(title)
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext in ("png", "svg"):
        p = out_base.with_suffix(f".{ext}")
        fig.savefig(p)
        paths.append(p)
    plt.close(fig)
    return paths


def emit_pairwise_matrix(regions_by_class: dict, backend_ids, out_base: Path) -> list:
    """Fallback for >3 backends: heatmap of pairwise joint-correct counts."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ids = sorted(backend_ids)
    n = len(ids)
    joint = np.zeros((n, n))
    for regions in regions_by_class.values():
        for subset, count in regions.items():
            for i, a in enumerate(ids):
                for j, b in enumerate(ids):
                    if a in subset and b in subset:
                        joint[i, j] += count
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(joint)
    ax.set_xticks(range(n), ids, rotation=45)
    ax.set_yticks(range(n), ids)
    for i in range(n):
        for j in range(n):
            ax.text(j, i, int(joint[i, j]), ha="center", va="center", color="w")
    fig.colorbar(im)
    fig.tight_layout()
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext in ("png", "svg"):
        p = out_base.with_suffix(f".{ext}")
        fig.savefig(p)
        paths.append(p)
    plt.close(fig)
    return paths


def emit_metric_bars(table: ReportTable, metric: str, out_base: Path) -> list:
    """Bar chart of per-arch metric means, one bar group per sentiment source."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    x = np.arange(len(table.sources))
    width = 0.8 / max(len(table.archs), 1)
    for i, arch in enumerate(table.archs):
        means = [table.cells.get((s, arch, metric), (np.nan,))[0] for s in table.sources]
        sds = [table.cells.get((s, arch, metric), (0, 0))[1] for s in table.sources]
        ax.bar(x + i * width, means, width, yerr=sds, label=arch, capsize=2)
    ax.set_xticks(x + width * (len(table.archs) - 1) / 2, table.sources)
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext in ("png", "svg"):
        p = out_base.with_suffix(f".{ext}")
        fig.savefig(p)
        paths.append(p)
    plt.close(fig)
    return paths
