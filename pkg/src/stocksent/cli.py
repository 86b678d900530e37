"""Command-line entry point tying the pipeline stages together.

Stages (each idempotent under an unchanged config, resumable where it
matters): ingest -> sentiment -> stack -> build -> run / ablate -> report.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import aggregation, dataset, ensemble, sentiment
from .config import ConfigError, RunConfig, load_config
from .experiments import (ExperimentSpec, ablation_suite, aggregate_report,
                          emit_metric_bars, emit_pairwise_matrix, emit_venn,
                          load_records, run_experiment)
from .ingestion import (AlphaVantageNewsClient, TradingCalendar, YahooPriceClient,
                        align_to_trading_day, fetch_news, fetch_prices,
                        load_news_jsonl, load_prices_csv)
from .synthetic import generate_fixture

logger = logging.getLogger(__name__)

STACKER_BY_SOURCE = {"lr": "logistic_regression", "rf": "random_forest", "svm": "svm"}
CLOSE_CUTOFF_UTC = dt.time(21, 0)  # approximate US market close


class StageError(Exception):
    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


# ---------------------------------------------------------------------------
# Stamps / idempotence

def _stamp_path(cfg: RunConfig, stage: str) -> Path:
    return cfg.out_dir / "stamps" / f"{stage}.json"


def _is_complete(cfg: RunConfig, stage: str) -> bool:
    p = _stamp_path(cfg, stage)
    if not p.exists():
        return False
    return json.loads(p.read_text()).get("config_hash") == cfg.config_hash()


def _write_stamp(cfg: RunConfig, stage: str) -> None:
    p = _stamp_path(cfg, stage)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps({"config_hash": cfg.config_hash(),
                             "completed": dt.datetime.now(dt.timezone.utc).isoformat()}))


def _require(path: Path, stage: str, produced_by: str) -> Path:
    if not Path(path).exists():
        raise StageError(stage, f"missing artifact {path}; run `stocksent {produced_by}` first")
    return Path(path)


# ---------------------------------------------------------------------------
# Stages

def cmd_ingest(cfg: RunConfig, force: bool = False) -> None:
    if _is_complete(cfg, "ingest") and not force:
        logger.info("ingest: up to date, skipping")
        return
    raw_dir = cfg.out_dir / "raw"
    data = cfg.data
    if data.get("source", "synthetic") == "synthetic":
        start = cfg.raw.get("start", "2022-03-10")
        if isinstance(start, str):
            start = dt.date.fromisoformat(start)
        generate_fixture(raw_dir, tickers=cfg.tickers,
                         n_days=int(data.get("n_days", 400)),
                         start=start, seed=cfg.seed)
    else:
        start = dt.date.fromisoformat(str(cfg.raw["start"]))
        end = dt.date.fromisoformat(str(cfg.raw["end"]))
        price_client = YahooPriceClient(**({"endpoint": data["price_endpoint"]}
                                           if data.get("price_endpoint") else {}))
        news_client = AlphaVantageNewsClient(**({"endpoint": data["news_endpoint"]}
                                                if data.get("news_endpoint") else {}))
        for ticker in cfg.tickers:
            fetch_prices(ticker, start, end, price_client,
                         store_path=raw_dir / f"prices_{ticker}.csv")
            result = fetch_news(ticker, start, end, news_client,
                                store_path=raw_dir / f"news_{ticker}.jsonl")
            if result.skipped:
                logger.warning("%s: skipped %d malformed news records", ticker, result.skipped)
    _write_stamp(cfg, "ingest")


def cmd_sentiment(cfg: RunConfig, force: bool = False) -> None:
    if _is_complete(cfg, "sentiment") and not force:
        logger.info("sentiment: up to date, skipping")
        return
    raw_dir = cfg.out_dir / "raw"
    sent_dir = cfg.out_dir / "sentiment"
    backends = [sentiment.make_backend(spec) for spec in cfg.backends]
    if not backends:
        raise StageError("sentiment", "no backends configured under sentiment.backends")
    for ticker in cfg.tickers:
        news_path = _require(raw_dir / f"news_{ticker}.jsonl", "sentiment", "ingest")
        items = load_news_jsonl(news_path)
        for backend in backends:
            result = sentiment.classify_corpus([it.headline for it in items], backend)
            if result.failures:
                logger.warning("%s/%s: %d classification failures",
                               ticker, backend.backend_id, len(result.failures))
            sentiment.save_predictions_jsonl(
                [it.id for it in items], result.predictions,
                sent_dir / f"preds_{backend.backend_id}_{ticker}.jsonl")
    _write_stamp(cfg, "sentiment")


def cmd_stack(cfg: RunConfig, force: bool = False) -> None:
    if _is_complete(cfg, "stack") and not force:
        logger.info("stack: up to date, skipping")
        return
    stack_dir = cfg.out_dir / "stack"
    corpus_path = cfg.raw.get("sentiment", {}).get("labeled_corpus") \
        or cfg.out_dir / "raw" / "labeled_corpus.csv"
    corpus_path = _require(corpus_path, "stack", "ingest")
    corpus = sentiment.load_labeled_csv(corpus_path)
    backends = [sentiment.make_backend(spec) for spec in cfg.backends]
    order = cfg.backend_order

    preds_by_backend = {}
    for backend in backends:
        result = sentiment.classify_corpus([h.text for h in corpus], backend)
        if result.failures:
            raise StageError("stack", f"backend {backend.backend_id} failed on "
                                      f"{len(result.failures)} corpus items")
        preds_by_backend[backend.backend_id] = result.ok

    gold = [h.gold for h in corpus]
    base_metrics = {bid: sentiment.evaluate_backend(preds, gold)
                    for bid, preds in preds_by_backend.items()}
    regions = sentiment.agreement_regions(gold, preds_by_backend)
    stack_dir.mkdir(parents=True, exist_ok=True)
    (stack_dir / "agreement.json").write_text(json.dumps(
        {cls: {"+".join(sorted(s)): c for s, c in reg.items()}
         for cls, reg in regions.items()}, indent=2))

    X = np.stack([ensemble.encode_stack([preds_by_backend[b][i] for b in order], order)
                  for i in range(len(corpus))])
    stackers = {}
    for source, kind in STACKER_BY_SOURCE.items():
        stacker = ensemble.train_stacker(X, gold, kind, order, split=0.8, seed=cfg.seed)
        ensemble.save_stacker(stacker, stack_dir / f"{source}.joblib")
        stackers[source] = stacker

    # summary table: base backends + stacker held-out metrics
    rows = [(bid, base_metrics[bid]) for bid in order]
    rows += [(source, stackers[source].metrics) for source in STACKER_BY_SOURCE]
    lines = [f"{'model':<22}{'accuracy':>10}{'precision':>11}{'recall':>9}{'f1':>8}"]
    import csv as _csv

    with open(stack_dir / "backend_metrics.csv", "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(["model", "accuracy", "precision", "recall", "f1", "config_hash"])
        for name, m in rows:
            w.writerow([name, f"{m['accuracy']:.3f}", f"{m['precision']:.3f}",
                        f"{m['recall']:.3f}", f"{m['f1']:.3f}", cfg.config_hash()])
            lines.append(f"{name:<22}{m['accuracy']:>10.3f}{m['precision']:>11.3f}"
                         f"{m['recall']:>9.3f}{m['f1']:>8.3f}")
    (stack_dir / "backend_metrics.txt").write_text("\n".join(lines) + "\n")

    # apply stackers to the ingested news so lr/rf/svm act as sentiment sources
    sent_dir = cfg.out_dir / "sentiment"
    for ticker in cfg.tickers:
        per_backend = {}
        for bid in order:
            path = _require(sent_dir / f"preds_{bid}_{ticker}.jsonl", "stack", "sentiment")
            per_backend[bid] = sentiment.load_predictions_jsonl(path)
        ids = [i for i in per_backend[order[0]]
               if all(i in per_backend[b] for b in order)]
        for source, stacker in stackers.items():
            preds = []
            for i in ids:
                x = ensemble.encode_stack([per_backend[b][i] for b in order], order)
                preds.append(ensemble.predict_stacker(stacker, x))
            sentiment.save_predictions_jsonl(ids, preds,
                                             sent_dir / f"preds_{source}_{ticker}.jsonl")
    _write_stamp(cfg, "stack")


def _assign_trading_day(item, cal, close_cutoff: bool):
    day = align_to_trading_day(item.published_at, cal)
    if close_cutoff and item.published_at.date() == day \
            and item.published_at.timetz().replace(tzinfo=None) >= CLOSE_CUTOFF_UTC:
        later = [d for d in cal.dates if d > day]
        day = later[0] if later else day
    return day


def _needed_builds(cfg: RunConfig):
    exp = cfg.experiment
    sources = exp.get("sources", ["NS"])
    variant = exp.get("variant", "full")
    builds = {(s, variant) for s in sources}
    abl_source = exp.get("ablation_source")
    if abl_source is None:
        non_ns = [s for s in sources if s != "NS"]
        abl_source = non_ns[0] if non_ns else None
    if abl_source:
        builds |= {(abl_source, v) for v in aggregation.ABLATION_VARIANTS}
    return sorted(builds)


def cmd_build(cfg: RunConfig, force: bool = False) -> None:
    if _is_complete(cfg, "build") and not force:
        logger.info("build: up to date, skipping")
        return
    raw_dir = cfg.out_dir / "raw"
    sent_dir = cfg.out_dir / "sentiment"
    ds_root = cfg.out_dir / "datasets"
    close_cutoff = bool(cfg.aggregation.get("close_cutoff", False))
    wo_minmax = bool(cfg.aggregation.get("wo_sum_drops_minmax", False))
    builds = _needed_builds(cfg)
    for ticker in cfg.tickers:
        bars = load_prices_csv(_require(raw_dir / f"prices_{ticker}.csv", "build", "ingest"))
        cal = TradingCalendar.from_price_bars(bars)
        market = pd.DataFrame({"date": [b.date for b in bars],
                               "close": [b.close for b in bars],
                               "volume": [b.volume for b in bars]})
        news = load_news_jsonl(_require(raw_dir / f"news_{ticker}.jsonl", "build", "ingest"))
        frames = {}
        for source, variant in builds:
            if source == "NS":
                frame = market
                feature_names = list(aggregation.MARKET_FEATURES)
            else:
                if source not in frames:
                    stage = "stack" if source in STACKER_BY_SOURCE else "sentiment"
                    preds = sentiment.load_predictions_jsonl(
                        _require(sent_dir / f"preds_{source}_{ticker}.jsonl", "build", stage))
                    by_day = defaultdict(list)
                    for item in news:
                        if item.id in preds:
                            by_day[_assign_trading_day(item, cal, close_cutoff)].append(
                                preds[item.id])
                    daily = [(ticker, d, aggregation.aggregate_day(by_day.get(d, [])))
                             for d in cal.dates]
                    aggregation.save_daily_features_csv(
                        daily, cfg.out_dir / "daily" / f"daily_{source}_{ticker}.csv")
                    rows = [{"date": d, **feats.as_row()} for _, d, feats in daily]
                    frames[source] = market.merge(pd.DataFrame(rows), on="date")
                frame = frames[source]
                feature_names = aggregation.select_features(variant, wo_minmax)
            splits = dataset.build_splits(frame, feature_names)
            dataset.save_dataset(splits, ds_root / f"{ticker}__{source}__{variant}",
                                 config_hash=cfg.config_hash())
    _write_stamp(cfg, "build")


def _dataset_loader(cfg: RunConfig):
    root = cfg.out_dir / "datasets"

    def load(ticker, source, variant):
        path = root / f"{ticker}__{source}__{variant}"
        if not path.exists():
            raise FileNotFoundError(f"{path} (run `stocksent build` first)")
        return dataset.load_dataset(path)

    return load


def _specs(cfg: RunConfig):
    exp = cfg.experiment
    for task in exp.get("tasks", ["classification"]):
        yield ExperimentSpec(
            tickers=list(cfg.tickers), sources=list(exp.get("sources", ["NS"])),
            archs=list(exp.get("archs", ["lstm"])), task=task,
            variant=exp.get("variant", "full"),
            seeds=tuple(exp.get("seeds", range(10))))


def cmd_run(cfg: RunConfig, force: bool = False, workers: int = None) -> None:
    if _is_complete(cfg, "run") and not force:
        logger.info("run: up to date, skipping")
        return
    records_path = cfg.out_dir / "records.jsonl"
    loader = _dataset_loader(cfg)
    for spec in _specs(cfg):
        run_experiment(spec, loader, records_path, model_overrides=cfg.models,
                       workers=workers or cfg.workers, config_hash=cfg.config_hash())
    _write_stamp(cfg, "run")


def cmd_ablate(cfg: RunConfig, force: bool = False, workers: int = None) -> None:
    if _is_complete(cfg, "ablate") and not force:
        logger.info("ablate: up to date, skipping")
        return
    exp = cfg.experiment
    abl_source = exp.get("ablation_source")
    if abl_source is None:
        non_ns = [s for s in exp.get("sources", []) if s != "NS"]
        if not non_ns:
            raise StageError("ablate", "no sentiment source available for ablations")
        abl_source = non_ns[0]
    archs = exp.get("ablation_archs", ["lstm"])
    records_path = cfg.out_dir / "records.jsonl"
    loader = _dataset_loader(cfg)
    for task in exp.get("tasks", ["classification"]):
        spec = ExperimentSpec(tickers=list(cfg.tickers), sources=[abl_source],
                              archs=archs, task=task,
                              seeds=tuple(exp.get("seeds", range(10))))
        ablation_suite(spec, loader, records_path, model_overrides=cfg.models,
                       workers=workers or cfg.workers, config_hash=cfg.config_hash())
    _write_stamp(cfg, "ablate")


def cmd_report(cfg: RunConfig, force: bool = False) -> None:
    records_path = _require(cfg.out_dir / "records.jsonl", "report", "run")
    records = load_records(records_path)
    current = cfg.config_hash()
    foreign = {r.config_hash for r in records if r.config_hash != current}
    if foreign and not force:
        raise StageError("report", f"records carry other config hashes {sorted(foreign)}; "
                                   "rerun or pass --force to mix")
    reports_dir = cfg.out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    exp = cfg.experiment
    variant = exp.get("variant", "full")
    for task in exp.get("tasks", ["classification"]):
        main = [r for r in records if r.variant == variant and r.task == task
                and r.source in exp.get("sources", [])]
        if main:
            table = aggregate_report(main, task, sources=exp.get("sources"),
                                     archs=exp.get("archs"))
            table.to_csv(reports_dir / f"{task}_table.csv")
            (reports_dir / f"{task}_table.txt").write_text(table.to_text() + "\n")
            for metric in table.metric_names:
                emit_metric_bars(table, metric, reports_dir / f"bars_{task}_{metric}")
        ablation = [r for r in records if r.task == task and r.arch == "lstm"
                    and r.source not in ("NS",) and r.variant]
        variants_present = {r.variant for r in ablation}
        if len(variants_present) > 1:
            table = aggregate_report(ablation, task, group_by_variant=True,
                                     sources=sorted(variants_present))
            table.to_csv(reports_dir / f"ablation_{task}_table.csv")
            (reports_dir / f"ablation_{task}_table.txt").write_text(table.to_text() + "\n")
    agreement_path = cfg.out_dir / "stack" / "agreement.json"
    if agreement_path.exists():
        payload = json.loads(agreement_path.read_text())
        regions_by_class = {
            cls: {frozenset(k.split("+")) if k else frozenset(): v
                  for k, v in reg.items()}
            for cls, reg in payload.items()}
        backend_ids = set().union(*(s for reg in regions_by_class.values() for s in reg))
        for cls, reg in regions_by_class.items():
            try:
                emit_venn(reg, backend_ids, reports_dir / f"venn_{cls}",
                          title=f"agreement: {cls}")
            except Exception:
                emit_pairwise_matrix(regions_by_class, backend_ids,
                                     reports_dir / "agreement_pairwise")
                break
    (reports_dir / "meta.json").write_text(json.dumps({"config_hash": current}))
    _write_stamp(cfg, "report")


# ---------------------------------------------------------------------------

COMMANDS = {
    "ingest": cmd_ingest, "sentiment": cmd_sentiment, "stack": cmd_stack,
    "build": cmd_build, "run": cmd_run, "ablate": cmd_ablate, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stocksent",
                                     description="news-sentiment stock prediction harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to YAML run config")
        p.add_argument("--out", help="override out_dir")
        p.add_argument("--seed", type=int, help="override global seed")
        p.add_argument("--workers", type=int, help="worker pool size for training runs")
        p.add_argument("--force", action="store_true", help="rerun even if up to date")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.raw["out_dir"] = args.out
        if args.seed is not None:
            cfg.raw["seed"] = args.seed
        if args.workers is not None:
            cfg.raw["workers"] = args.workers
        fn = COMMANDS[args.command]
        if args.command in ("run", "ablate"):
            fn(cfg, force=args.force, workers=args.workers)
        else:
            fn(cfg, force=args.force)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except StageError as exc:
        print(exc, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
