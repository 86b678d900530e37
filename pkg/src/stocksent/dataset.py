"""Fusing features, targets, min-max scaling, temporal split and windowing.

The split is chronological (70/10/20) and happens at the row level first;
each split is then windowed independently so no window straddles a split
boundary, and scaler parameters come from training rows only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WINDOW_LEN = 30
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
SPLIT_NAMES = ("train", "val", "test")


class DatasetError(Exception):
    pass


@dataclass
class Targets:
    factor: np.ndarray  # close_{t+1} / close_t, length T-1
    binary: np.ndarray  # 1 iff close_{t+1} > close_t, ties -> 0


def compute_targets(closes) -> Targets:
    closes = np.asarray(closes, dtype=float)
    if closes.size < 2:
        raise DatasetError("need at least 2 prices to form a target")
    if np.any(closes <= 0):
        raise DatasetError("non-positive price in series")
    factor = closes[1:] / closes[:-1]
    binary = (closes[1:] > closes[:-1]).astype(np.int64)
    return Targets(factor=factor, binary=binary)


def temporal_split(T: int, fractions=SPLIT_FRACTIONS):
    """Chronological 70/10/20 index ranges: contiguous, disjoint, exhaustive."""
    if T < 10:
        raise DatasetError(f"need at least 10 rows to split, got {T}")
    # epsilon guards against 0.7 * 10 == 6.999... under binary floats
    a = int(np.floor(fractions[0] * T + 1e-9))
    b = int(np.floor((fractions[0] + fractions[1]) * T + 1e-9))
    ranges = ((0, a), (a, b), (b, T))
    if any(hi <= lo for lo, hi in ranges):
        raise DatasetError(f"T={T} too small for non-empty splits")
    return ranges


@dataclass
class ScalerParams:
    feature_names: list
    mins: np.ndarray
    maxs: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.maxs == self.mins


def fit_minmax(rows: np.ndarray, feature_names) -> ScalerParams:
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        raise DatasetError("cannot fit scaler on empty rows")
    return ScalerParams(feature_names=list(feature_names),
                        mins=rows.min(axis=0), maxs=rows.max(axis=0))


def apply_minmax(rows: np.ndarray, params: ScalerParams, feature_names) -> np.ndarray:
    if list(feature_names) != params.feature_names:
        raise DatasetError(f"feature schema mismatch: {list(feature_names)} vs {params.feature_names}")
    rows = np.asarray(rows, dtype=float)
    span = params.maxs - params.mins
    safe = np.where(span == 0, 1.0, span)
    scaled = (rows - params.mins) / safe
    scaled[:, params.degenerate] = 0.0
    return scaled


def invert_minmax(scaled: np.ndarray, params: ScalerParams) -> np.ndarray:
    span = params.maxs - params.mins
    return np.asarray(scaled, dtype=float) * span + params.mins


@dataclass
class WindowedDataset:
    inputs: np.ndarray        # [N, L, F]
    factor: np.ndarray        # [N]
    binary: np.ndarray        # [N]
    anchor_dates: list        # predicted date per sample (ISO strings)
    input_end_dates: list     # last input date per sample (ISO strings)
    split: str
    feature_names: list = field(default_factory=list)

    def __len__(self):
        return len(self.inputs)


def make_windows(features: np.ndarray, targets: Targets, dates, L: int = WINDOW_LEN,
                 split: str = "", feature_names=None) -> WindowedDataset:
    """Rolling windows of L consecutive rows; window k spans rows [k, k+L)
    and its target is the movement into row k+L."""
    features = np.asarray(features, dtype=float)
    T = features.shape[0]
    if T < L + 1:
        raise DatasetError(f"need at least {L + 1} rows for one window, got {T}")
    if targets.factor.shape[0] != T - 1:
        raise DatasetError("targets misaligned with feature rows")
    N = T - L
    inputs = np.stack([features[k:k + L] for k in range(N)])
    factor = targets.factor[L - 1:L - 1 + N]
    binary = targets.binary[L - 1:L - 1 + N]
    dates = [d if isinstance(d, str) else d.isoformat() for d in dates]
    return WindowedDataset(inputs=inputs, factor=factor, binary=binary,
                           anchor_dates=[dates[k + L] for k in range(N)],
                           input_end_dates=[dates[k + L - 1] for k in range(N)],
                           split=split, feature_names=list(feature_names or []))


def build_splits(frame, feature_names, closes_col="close", L: int = WINDOW_LEN) -> dict:
    """Split rows chronologically, then scale and window each split.

    ``frame`` is a pandas DataFrame with a ``date`` column plus all feature
    columns (raw, unscaled). Targets are computed from raw closes inside each
    split; the scaler is fit on training rows only.
    """
    T = len(frame)
    ranges = temporal_split(T)
    feats = frame[list(feature_names)].to_numpy(dtype=float)
    closes = frame[closes_col].to_numpy(dtype=float)
    dates = list(frame["date"])
    lo_tr, hi_tr = ranges[0]
    scaler = fit_minmax(feats[lo_tr:hi_tr], feature_names)
    out = {}
    for name, (lo, hi) in zip(SPLIT_NAMES, ranges):
        targets = compute_targets(closes[lo:hi])
        scaled = apply_minmax(feats[lo:hi], scaler, feature_names)
        out[name] = make_windows(scaled, targets, dates[lo:hi], L=L, split=name,
                                 feature_names=feature_names)
    out["scaler"] = scaler
    return out


# ---------------------------------------------------------------------------
# Persistence: one directory per dataset, schema JSON + .npy tensors

def save_dataset(splits: dict, out_dir: Path, config_hash: str = "") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scaler = splits["scaler"]
    schema = {
        "feature_names": scaler.feature_names,
        "window_len": int(splits["train"].inputs.shape[1]),
        "scaler_min": scaler.mins.tolist(),
        "scaler_max": scaler.maxs.tolist(),
        "config_hash": config_hash,
        "splits": {},
    }
    for name in SPLIT_NAMES:
        ds = splits[name]
        np.save(out_dir / f"{name}_inputs.npy", ds.inputs)
        np.save(out_dir / f"{name}_factor.npy", ds.factor)
        np.save(out_dir / f"{name}_binary.npy", ds.binary)
        schema["splits"][name] = {
            "n_samples": len(ds),
            "anchor_dates": ds.anchor_dates,
            "input_end_dates": ds.input_end_dates,
        }
    (out_dir / "schema.json").write_text(json.dumps(schema, indent=2))


def load_dataset(out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    schema = json.loads((out_dir / "schema.json").read_text())
    out = {"scaler": ScalerParams(feature_names=schema["feature_names"],
                                  mins=np.array(schema["scaler_min"]),
                                  maxs=np.array(schema["scaler_max"])),
           "config_hash": schema.get("config_hash", "")}
    for name in SPLIT_NAMES:
        meta = schema["splits"][name]
        out[name] = WindowedDataset(
            inputs=np.load(out_dir / f"{name}_inputs.npy"),
            factor=np.load(out_dir / f"{name}_factor.npy"),
            binary=np.load(out_dir / f"{name}_binary.npy"),
            anchor_dates=meta["anchor_dates"],
            input_end_dates=meta["input_end_dates"],
            split=name, feature_names=schema["feature_names"])
    return out
