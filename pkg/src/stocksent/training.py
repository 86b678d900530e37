"""Deterministic training loop with best-validation-epoch checkpointing."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .models import ModelConfig, build_model


class TrainingError(Exception):
    pass


@dataclass
class TrainedModel:
    config: ModelConfig
    module: nn.Module
    history: list = field(default_factory=list)  # per-epoch {"train_loss", "val_loss"}
    best_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_epoch]["val_loss"]


def _loss_fn(task: str):
    return nn.BCEWithLogitsLoss() if task == "classification" else nn.MSELoss()


def _as_tensors(X, y):
    return (torch.as_tensor(np.asarray(X), dtype=torch.float32),
            torch.as_tensor(np.asarray(y), dtype=torch.float32))


def train(model: nn.Module, train_set, val_set, config: ModelConfig) -> TrainedModel:
    """Fixed-epoch loop; parameters are restored from the lowest-val-loss epoch.

    ``train_set`` / ``val_set`` are (X [N, L, F], y [N]) pairs: binary
    targets for classification, price factors for regression. Runs
    single-threaded so same-seed reruns are bit-identical.
    """
    torch.set_num_threads(1)
    X_tr, y_tr = _as_tensors(*train_set)
    X_val, y_val = _as_tensors(*val_set)
    if len(X_tr) == 0 or len(X_val) == 0:
        raise TrainingError("empty train or validation set")
    rng = np.random.default_rng(config.seed)
    loss_fn = _loss_fn(config.task)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history = []
    best_state, best_epoch, best_val = None, 0, float("inf")
    for epoch in range(config.epochs):
        model.train()
        perm = rng.permutation(len(X_tr))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            opt.zero_grad()
            out = model(X_tr[idx])
            loss = loss_fn(out, y_tr[idx])
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}")
            loss.backward()
            opt.step()
            epoch_loss += loss.item()
            n_batches += 1
        model.eval()
        with torch.no_grad():
            val_loss = loss_fn(model(X_val), y_val).item()
        history.append({"train_loss": epoch_loss / n_batches, "val_loss": val_loss})
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    return TrainedModel(config=config, module=model, history=history, best_epoch=best_epoch)


def train_from_config(config: ModelConfig, train_set, val_set, input_dim: int) -> TrainedModel:
    """Seeded build + train in one step (the runner's entry point)."""
    model = build_model(config, input_dim)
    return train(model, train_set, val_set, config)


def predict(trained: TrainedModel, X) -> np.ndarray:
    """Batch prediction: probabilities in [0,1] for classification, raw values
    for regression. Empty input yields an empty array."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 3:
        raise TrainingError(f"expected [N, L, F] input, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0)
    trained.module.eval()
    with torch.no_grad():
        out = trained.module(torch.as_tensor(X))
        if trained.config.task == "classification":
            out = torch.sigmoid(out)
    return out.numpy()


def save_checkpoint(trained: TrainedModel, path, feature_names=None) -> None:
    from dataclasses import asdict
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"config": asdict(trained.config), "state_dict": trained.module.state_dict(),
                "history": trained.history, "best_epoch": trained.best_epoch,
                "feature_names": feature_names or []}, path)


def save_history_csv(trained: TrainedModel, path) -> None:
    import csv
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, rec in enumerate(trained.history):
            w.writerow([i, rec["train_loss"], rec["val_loss"]])
