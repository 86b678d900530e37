"""Four forecasting architectures behind one build/forward interface.

Every model maps a window batch [B, L, F] to a scalar per sample: a raw value
for regression, a logit for classification (probabilities come from a sigmoid
at prediction time). Sizes default to desk scale so everything trains in
minutes on CPU.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

ARCHS = ("lstm", "patchtst", "timesnet", "tpatchgnn")
TASKS = ("classification", "regression")


class ModelError(Exception):
    pass


@dataclass
class ModelConfig:
    arch: str
    task: str
    seq_len: int = 30
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    patch_len: int = 8
    patch_stride: int = 4
    top_k_periods: int = 2
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ModelError(f"unknown architecture {self.arch!r}")
        if self.task not in TASKS:
            raise ModelError(f"unknown task {self.task!r}")
        positive = ["seq_len", "hidden_dim", "num_layers", "num_heads", "epochs",
                    "learning_rate", "batch_size"]
        if self.arch in ("patchtst", "tpatchgnn"):
            positive += ["patch_len", "patch_stride"]
            if self.patch_len > self.seq_len:
                raise ModelError(f"patch_len {self.patch_len} exceeds seq_len {self.seq_len}")
        if self.arch == "timesnet":
            positive.append("top_k_periods")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")


def num_patches(seq_len: int, patch_len: int, stride: int) -> int:
    return (seq_len - patch_len) // stride + 1


class LSTMForecaster(nn.Module):
    """Stacked LSTM over the window; last hidden state feeds a dense head."""

    def __init__(self, input_dim, cfg: ModelConfig):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, cfg.hidden_dim, num_layers=cfg.num_layers,
                            batch_first=True)
        self.head = nn.Linear(cfg.hidden_dim, 1)

    def forward(self, x):
        _, (h, _) = self.lstm(x)
        return self.head(h[-1]).squeeze(-1)


class PatchTSTForecaster(nn.Module):
    """Channel-independent patch transformer.

    Each feature series is cut into overlapping patches, linearly embedded
    (embedding, positions and encoder shared across channels), encoded by
    multi-head self-attention, mean-pooled over patches, and the per-channel
    encodings are concatenated into the head.
    """

    def __init__(self, input_dim, cfg: ModelConfig):
        super().__init__()
        self.patch_len = cfg.patch_len
        self.stride = cfg.patch_stride
        self.n_patches = num_patches(cfg.seq_len, cfg.patch_len, cfg.patch_stride)
        d = cfg.hidden_dim
        self.embed = nn.Linear(cfg.patch_len, d)
        self.pos = nn.Parameter(torch.zeros(1, self.n_patches, d))
        layer = nn.TransformerEncoderLayer(d_model=d, nhead=cfg.num_heads,
                                           dim_feedforward=2 * d, dropout=0.0,
                                           batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.num_layers)
        self.head = nn.Linear(input_dim * d, 1)

    def forward(self, x):
        B, L, F = x.shape
        patches = x.permute(0, 2, 1).unfold(-1, self.patch_len, self.stride)  # B,F,P,patch
        z = self.embed(patches) + self.pos
        z = self.encoder(z.reshape(B * F, self.n_patches, -1)).mean(dim=1)
        return self.head(z.reshape(B, -1)).squeeze(-1)


def dominant_periods(x: torch.Tensor, k: int):
    """Top-k periods of a [B, L, C] batch from the amplitude spectrum.

    Returns (periods list, per-sample amplitude weights [B, k]). The DC
    component is excluded; frequencies average over batch and channels.
    """
    L = x.shape[1]
    spec = torch.fft.rfft(x, dim=1)
    amp = spec.abs().mean(0).mean(-1)
    amp[0] = 0
    k = min(k, amp.shape[0] - 1)
    _, top = torch.topk(amp, k)
    freqs = top.detach().tolist()
    periods = [L // f for f in freqs]
    weights = spec.abs().mean(-1)[:, top]
    return periods, weights


class TimesBlock(nn.Module):
    """Fold the sequence into [cycles x period] grids per top-k period,
    convolve in 2-D, and fuse the results with softmax amplitude weights."""

    def __init__(self, d_model, k):
        super().__init__()
        self.k = k
        self.conv = nn.Sequential(
            nn.Conv2d(d_model, d_model * 2, kernel_size=3, padding=1),
            nn.GELU(),
            nn.Conv2d(d_model * 2, d_model, kernel_size=3, padding=1),
        )

    def forward(self, x):
        B, L, D = x.shape
        periods, weights = dominant_periods(x, self.k)
        results = []
        for p in periods:
            cycles = -(-L // p)  # ceil
            padded = x
            if cycles * p > L:
                pad = x.new_zeros(B, cycles * p - L, D)
                padded = torch.cat([x, pad], dim=1)
            grid = padded.reshape(B, cycles, p, D).permute(0, 3, 1, 2)
            out = self.conv(grid).permute(0, 2, 3, 1).reshape(B, cycles * p, D)
            results.append(out[:, :L])
        stacked = torch.stack(results, dim=-1)
        w = torch.softmax(weights, dim=1).unsqueeze(1).unsqueeze(1)
        return (stacked * w).sum(-1) + x


class TimesNetForecaster(nn.Module):
    def __init__(self, input_dim, cfg: ModelConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.embed = nn.Linear(input_dim, d)
        self.blocks = nn.ModuleList(TimesBlock(d, cfg.top_k_periods)
                                    for _ in range(cfg.num_layers))
        self.norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, 1)

    def forward(self, x):
        z = self.embed(x)
        for block in self.blocks:
            z = self.norm(block(z))
        return self.head(z.mean(dim=1)).squeeze(-1)


class TPatchGNNForecaster(nn.Module):
    """Temporal patching + message passing over the feature-variable graph.

    Per-variable patch embeddings are node features on a complete graph with
    a learned (softmax-normalized) adjacency; message-passing rounds mix
    variables at each patch position, then temporal pooling feeds the head.
    Assumes regularly sampled windows; sized for fast CPU training.
    """

    def __init__(self, input_dim, cfg: ModelConfig):
        super().__init__()
        self.patch_len = cfg.patch_len
        self.stride = cfg.patch_stride
        d = cfg.hidden_dim
        self.embed = nn.Linear(cfg.patch_len, d)
        self.adj_logits = nn.Parameter(torch.zeros(input_dim, input_dim))
        self.rounds = nn.ModuleList(nn.Linear(d, d) for _ in range(cfg.num_layers))
        self.head = nn.Linear(d, 1)

    def forward(self, x):
        patches = x.permute(0, 2, 1).unfold(-1, self.patch_len, self.stride)  # B,F,P,patch
        z = self.embed(patches)
        adj = torch.softmax(self.adj_logits, dim=-1)
        for lin in self.rounds:
            msg = torch.einsum("uv,bvpd->bupd", adj, z)
            z = torch.relu(lin(msg)) + z
        return self.head(z.mean(dim=(1, 2))).squeeze(-1)


_BUILDERS = {
    "lstm": LSTMForecaster,
    "patchtst": PatchTSTForecaster,
    "timesnet": TimesNetForecaster,
    "tpatchgnn": TPatchGNNForecaster,
}


def build_model(config: ModelConfig, input_feature_dim: int) -> nn.Module:
    """Construct an untrained model; parameters are initialized under the
    config seed so same-seed builds are bit-identical."""
    if input_feature_dim <= 0:
        raise ModelError("input_feature_dim must be positive")
    torch.manual_seed(config.seed)
    return _BUILDERS[config.arch](input_feature_dim, config)
