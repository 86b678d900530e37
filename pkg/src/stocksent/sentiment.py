"""Sentiment backends, corpus classification, evaluation, and agreement analysis.

Every backend maps headline text to a (label, confidence) pair over the
three-class set negative/neutral/positive. The lexicon backend is a
deterministic, dependency-free reference so the whole pipeline runs without
model weights; remote transformer models plug in through ``HttpBackend``.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

LABELS = ("negative", "neutral", "positive")
LABEL_INDEX = {l: i for i, l in enumerate(LABELS)}


class SentimentError(Exception):
    pass


@dataclass(frozen=True)
class SentimentPrediction:
    label: str
    confidence: float
    backend_id: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class LabeledHeadline:
    text: str
    gold: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("text must be non-empty")
        if self.gold not in LABELS:
            raise ValueError(f"unknown gold label {self.gold!r}")


# ---------------------------------------------------------------------------
# Backends

POSITIVE_WORDS = frozenset("""
    beat beats surge surges soar soars rally rallies gain gains jump jumps
    upgrade upgraded profit profits growth record strong bullish rise rises
    boom boost boosts win wins outperform exceed exceeds
""".split())

NEGATIVE_WORDS = frozenset("""
    miss misses plunge plunges drop drops fall falls loss losses lawsuit
    downgrade downgraded weak cut cuts slump slumps crash crashes bearish
    decline declines recall fraud probe bankruptcy layoff layoffs underperform
""".split())


def _tokens(text: str):
    return [w.strip(".,;:!?'\"()").lower() for w in text.split()]


class LexiconBackend:
    """Keyword scorer: label = sign of (positive hits - negative hits).

    Confidence is |net| / total matched terms; a lexicon-free headline is
    neutral with confidence 1.0.
    """

    def __init__(self, backend_id="lexicon"):
        self.backend_id = backend_id

    def classify(self, text: str) -> SentimentPrediction:
        words = _tokens(text)
        pos = sum(w in POSITIVE_WORDS for w in words)
        neg = sum(w in NEGATIVE_WORDS for w in words)
        net, total = pos - neg, pos + neg
        if total == 0 or net == 0:
            label, conf = "neutral", 1.0 if total == 0 else 0.0
        elif net > 0:
            label, conf = "positive", net / total
        else:
            label, conf = "negative", -net / total
        return SentimentPrediction(label=label, confidence=conf, backend_id=self.backend_id)


class NoisyLexiconBackend:
    """Lexicon backend with deterministic hash-driven label corruption.

    Stands in for an imperfect transformer model at desk scale: a fixed
    fraction of inputs (chosen by hashing backend_id + text, so pure and
    reproducible) get their label flipped to another class.
    """

    def __init__(self, backend_id: str, flip_rate: float):
        if not 0.0 <= flip_rate < 1.0:
            raise ValueError("flip_rate must be in [0, 1)")
        self.backend_id = backend_id
        self.flip_rate = flip_rate
        self._base = LexiconBackend(backend_id=backend_id)

    def classify(self, text: str) -> SentimentPrediction:
        base = self._base.classify(text)
        digest = hashlib.blake2b(f"{self.backend_id}|{text}".encode(), digest_size=16).digest()
        u = int.from_bytes(digest[:8], "big") / 2**64
        if u >= self.flip_rate:
            return base
        others = [l for l in LABELS if l != base.label]
        label = others[digest[8] % 2]
        conf = 0.4 + 0.5 * (digest[9] / 255)
        return SentimentPrediction(label=label, confidence=conf, backend_id=self.backend_id)


class HttpBackend:
    """Adapter for a remote model server: POST {"text": ...} -> {"label", "score"}."""

    def __init__(self, backend_id: str, url: str, timeout: float = 30.0):
        self.backend_id = backend_id
        self.url = url
        self.timeout = timeout

    def classify(self, text: str) -> SentimentPrediction:
        import requests

        try:
            resp = requests.post(self.url, json={"text": text}, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise SentimentError(f"backend {self.backend_id} unreachable: {exc}") from exc
        label = str(payload["label"]).lower()
        if label not in LABELS:
            raise SentimentError(f"backend {self.backend_id} returned unknown label {label!r}")
        return SentimentPrediction(label=label, confidence=float(payload["score"]),
                                   backend_id=self.backend_id)


def make_backend(spec) -> object:
    """Build a backend from a config entry.

    Accepts ``{"id": ..., "kind": "lexicon"|"noisy"|"http", ...}``.
    """
    kind = spec.get("kind", "lexicon")
    if kind == "lexicon":
        return LexiconBackend(backend_id=spec.get("id", "lexicon"))
    if kind == "noisy":
        return NoisyLexiconBackend(backend_id=spec["id"], flip_rate=float(spec["flip_rate"]))
    if kind == "http":
        return HttpBackend(backend_id=spec["id"], url=spec["url"])
    raise ValueError(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# Classification

def classify(text: str, backend) -> SentimentPrediction:
    if not text:
        raise SentimentError("empty text")
    return backend.classify(text)


@dataclass
class CorpusResult:
    predictions: list  # Optional[SentimentPrediction] per input position
    failures: list     # (index, message) pairs

    @property
    def ok(self):
        return [p for p in self.predictions if p is not None]


def classify_corpus(texts, backend) -> CorpusResult:
    """Order-preserving batch classify; per-item failures never abort the batch."""
    preds, failures = [], []
    for i, text in enumerate(texts):
        try:
            preds.append(classify(text, backend))
        except SentimentError as exc:
            preds.append(None)
            failures.append((i, str(exc)))
    return CorpusResult(predictions=preds, failures=failures)


# ---------------------------------------------------------------------------
# Evaluation

def confusion_matrix(gold, pred_labels) -> np.ndarray:
    """3x3 counts, rows = gold class, cols = predicted class."""
    m = np.zeros((3, 3), dtype=int)
    for g, p in zip(gold, pred_labels):
        m[LABEL_INDEX[g], LABEL_INDEX[p]] += 1
    return m


def evaluate_backend(preds, gold) -> dict:
    """Classification metrics against gold labels.

    Precision/recall/F1 are support-weighted (macro variants included for
    transparency); accuracy is the confusion-matrix trace over its sum.
    """
    if len(preds) != len(gold):
        raise SentimentError(f"length mismatch: {len(preds)} preds vs {len(gold)} gold")
    if not gold:
        raise SentimentError("empty evaluation set")
    pred_labels = [p.label if isinstance(p, SentimentPrediction) else p for p in preds]
    m = confusion_matrix(gold, pred_labels)
    support = m.sum(axis=1)
    tp = np.diag(m).astype(float)
    pred_count = m.sum(axis=0)
    prec = np.divide(tp, pred_count, out=np.zeros(3), where=pred_count > 0)
    rec = np.divide(tp, support, out=np.zeros(3), where=support > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros(3), where=denom > 0)
    w = support / support.sum()
    present = support > 0
    return {
        "accuracy": float(tp.sum() / m.sum()),
        "precision": float((prec * w).sum()),
        "recall": float((rec * w).sum()),
        "f1": float((f1 * w).sum()),
        "precision_macro": float(prec[present].mean()),
        "recall_macro": float(rec[present].mean()),
        "f1_macro": float(f1[present].mean()),
        "confusion": m.tolist(),
    }


def agreement_regions(gold, preds_by_backend: dict) -> dict:
    """Partition each gold class by which subset of backends classified it right.

    Returns {class: {frozenset(backend_ids): count}} over all 2^k subsets;
    region counts per class sum to that class's gold count.
    """
    ids = sorted(preds_by_backend)
    n = len(gold)
    for bid in ids:
        if len(preds_by_backend[bid]) != n:
            raise SentimentError(f"predictions for {bid} misaligned with gold")
    from itertools import combinations

    subsets = [frozenset(c) for r in range(len(ids) + 1) for c in combinations(ids, r)]
    regions = {c: {s: 0 for s in subsets} for c in LABELS}
    for i, g in enumerate(gold):
        correct = frozenset(
            bid for bid in ids
            if (preds_by_backend[bid][i].label
                if isinstance(preds_by_backend[bid][i], SentimentPrediction)
                else preds_by_backend[bid][i]) == g)
        regions[g][correct] += 1
    return regions


# ---------------------------------------------------------------------------
# Corpus IO

def load_labeled_csv(path: Path) -> list[LabeledHeadline]:
    """Load a ``text,label`` CSV.

    A label cell holding an entity->label mapping (SEntFiN style) is reduced
    to one label by majority over entities, ties going to neutral.
    """
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(LabeledHeadline(text=row["text"], gold=_reduce_label(row["label"])))
    return out


def _reduce_label(raw: str) -> str:
    raw = raw.strip()
    if raw.startswith("{"):
        try:
            mapping = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            mapping = json.loads(raw)
        counts = {l: 0 for l in LABELS}
        for v in mapping.values():
            counts[str(v).lower()] += 1
        best = max(counts.values())
        winners = [l for l, c in counts.items() if c == best]
        return winners[0] if len(winners) == 1 else "neutral"
    return raw.lower()


def save_predictions_jsonl(ids, preds, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for id_, p in zip(ids, preds):
            if p is None:
                continue
            f.write(json.dumps({"id": id_, "backend_id": p.backend_id,
                                "label": p.label, "confidence": p.confidence}) + "\n")


def load_predictions_jsonl(path: Path) -> dict:
    """Returns {news id: SentimentPrediction}."""
    out = {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            out[rec["id"]] = SentimentPrediction(label=rec["label"],
                                                 confidence=rec["confidence"],
                                                 backend_id=rec["backend_id"])
    return out
