"""Adam training loop with negative sampling, early stopping, and variants.

Variants wire the perturbation mode and contrastive term:

==========  =================  ==========================================
variant     perturbation mode  contrastive loss
==========  =================  ==========================================
wgcl        final              on
all-pert    all                on
no-pert     none               on (two identical views)
lightgcn    none               off (lambda_c forced to 0, gate untouched)
==========  =================  ==========================================

A run is fully deterministic in (dataset, config): init and the sampling /
noise stream are spawned from the config seed, batches update in a fixed
order, and the epoch history is bit-identical across reruns (its wall-clock
``seconds`` field excepted).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .data import Dataset, interactions_by_user
from .errors import ConfigError, NumericError
from .evaluation import evaluate
from .graph import build_adjacency, graph_from_dataset
from .model import (GranularitySchedule, ModelParams, aggregate_mean,
                    compute_layer_views, forward, granularity_dims, init_params)
from .objective import Batch, LossConfig, batch_pools, full_pools, total_loss_and_grads

VARIANTS = ("wgcl", "all-pert", "no-pert", "lightgcn")

_VARIANT_MODE = {"wgcl": "final", "all-pert": "all", "no-pert": "none", "lightgcn": "none"}


@dataclass(frozen=True)
class TrainConfig:
    embedding_dim: int = 64
    batch_size: int = 4096
    learning_rate: float = 1e-4
    lambda_c: float = 0.1
    tau: float = 0.2
    n_layers: int = 2
    reg_weight: float = 1e-4
    granularity: int = 2
    patience: int = 30
    max_epochs: int = 500
    seed: int = 0
    variant: str = "wgcl"
    cl_pool: str = "batch"      # "batch" or "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.cl_pool not in ("batch", "full"):
            raise ConfigError(f"cl_pool must be 'batch' or 'full', got {self.cl_pool!r}")
        for name in ("embedding_dim", "batch_size", "n_layers", "granularity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("learning_rate", "tau"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("lambda_c", "reg_weight", "patience", "max_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.variant == "lightgcn" and self.lambda_c != 0.0:
            object.__setattr__(self, "lambda_c", 0.0)

    @property
    def perturb_mode(self) -> str:
        return _VARIANT_MODE[self.variant]

    def loss_config(self) -> LossConfig:
        return LossConfig(reg_weight=self.reg_weight, lambda_c=self.lambda_c, tau=self.tau)


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameters."""

    m_embeddings: np.ndarray
    v_embeddings: np.ndarray
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(
            m_embeddings=np.zeros_like(params.embeddings),
            v_embeddings=np.zeros_like(params.embeddings),
            m_weights=[np.zeros_like(w) for w in params.weights],
            v_weights=[np.zeros_like(w) for w in params.weights],
            m_biases=[np.zeros_like(b) for b in params.biases],
            v_biases=[np.zeros_like(b) for b in params.biases],
        )


def _adam_update(theta, grad, m, v, state: AdamState, lr: float, group: str):
    if not np.all(np.isfinite(grad)):
        idx = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericError(f"non-finite gradient in {group} at flat index {idx}")
    m *= state.beta1
    m += (1.0 - state.beta1) * grad
    v *= state.beta2
    v += (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** state.step)
    v_hat = v / (1.0 - state.beta2 ** state.step)
    theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def adam_step(params: ModelParams, grads, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    state.step += 1
    _adam_update(params.embeddings, grads.embeddings,
                 state.m_embeddings, state.v_embeddings, state, lr, "embeddings")
    for k in range(len(params.weights)):
        _adam_update(params.weights[k], grads.weights[k],
                     state.m_weights[k], state.v_weights[k], state, lr, f"weights[{k}]")
        _adam_update(params.biases[k], grads.biases[k],
                     state.m_biases[k], state.v_biases[k], state, lr, f"biases[{k}]")


def sample_negatives(ds: Dataset, rng: np.random.Generator,
                     batch_size: int = 4096) -> Iterator[Batch]:
    """One epoch of BPR triplets in shuffled order, batched.

    For every train interaction a negative item is rejection-sampled
    uniformly from the items the user never interacted with (train set
    membership).  A user interacting with every item is skipped with a
    warning.  The final partial batch is kept.
    """
    pos = interactions_by_user(ds.train)
    pairs = ds.train
    order = rng.permutation(len(pairs))
    triplets: list[tuple[int, int, int]] = []
    for j in order:
        u, p = pairs[j]
        owned = pos[u]
        if len(owned) >= ds.num_items:
            warnings.warn(f"user {u} interacts with every item; skipping its triplets")
            continue
        while True:
            n = int(rng.integers(ds.num_items))
            if n not in owned:
                break
        triplets.append((u, p, n))
        if len(triplets) == batch_size:
            yield Batch.from_triplets(triplets)
            triplets = []
    if triplets:
        yield Batch.from_triplets(triplets)


@dataclass
class TrainResult:
    params: ModelParams          # best checkpoint by validation Recall@20
    history: list[dict]
    best_epoch: int              # -1 when no epoch ran
    best_val_recall: float
    n_layers: int = field(default=2)


def train_loop(ds: Dataset, config: TrainConfig) -> TrainResult:
    """Train with per-epoch validation and early stopping.

    Each epoch shuffles the train set, walks batches (forward with fresh
    noise per batch, loss, gradients, Adam update in batch order), then
    evaluates Recall@20 on the validation split.  The best-so-far
    parameters are kept; training stops after ``patience`` epochs without
    improvement or at ``max_epochs``.
    """
    adj = build_adjacency(graph_from_dataset(ds))
    schedule = GranularitySchedule(config.embedding_dim, config.granularity,
                                   granularity_dims(config.embedding_dim, config.granularity))
    root = np.random.SeedSequence(config.seed)
    init_seq, stream_seq = root.spawn(2)
    params = init_params(adj.num_nodes, config.embedding_dim, schedule, init_seq)
    rng = np.random.default_rng(stream_seq)

    adam = AdamState.zeros_like(params)
    loss_cfg = config.loss_config()
    fixed_pools = full_pools(ds.num_users, ds.num_items) if config.cl_pool == "full" else None

    best = params.copy()
    best_epoch, best_recall = -1, -math.inf
    history: list[dict] = []

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        sums = {"rec": 0.0, "cl": 0.0, "reg": 0.0, "total": 0.0}
        for batch in sample_negatives(ds, rng, config.batch_size):
            state = forward(adj, params, config.n_layers, config.perturb_mode, rng)
            pools = fixed_pools if fixed_pools is not None else batch_pools(batch)
            breakdown, grads = total_loss_and_grads(
                state, adj, params, batch, pools, loss_cfg, ds.num_users)
            if not math.isfinite(breakdown.total):
                raise NumericError(f"non-finite total loss at epoch {epoch}: {breakdown}")
            sums["rec"] += breakdown.rec
            sums["cl"] += breakdown.cl
            sums["reg"] += breakdown.reg
            sums["total"] += breakdown.total
            adam_step(params, grads, adam, config.learning_rate)

        report = evaluate(clean_aggregate(adj, params, config.n_layers), ds, "val")
        val_recall, val_ndcg = report.metrics.get(20, (0.0, 0.0))
        history.append({
            "epoch": epoch,
            "rec": sums["rec"],
            "cl": sums["cl"],
            "reg": sums["reg"],
            "total": sums["total"],
            "val_recall20": val_recall,
            "val_ndcg20": val_ndcg,
            "seconds": time.perf_counter() - t0,
        })
        if val_recall > best_recall:
            best_recall, best_epoch = val_recall, epoch
            best = params.copy()
        elif epoch - best_epoch >= config.patience:
            break

    if best_epoch == -1:
        best_recall = 0.0
    return TrainResult(params=best, history=history, best_epoch=best_epoch,
                       best_val_recall=best_recall, n_layers=config.n_layers)


def clean_aggregate(adj, params: ModelParams, n_layers: int) -> np.ndarray:
    """Noise-free aggregated representation used for ranking."""
    return aggregate_mean(compute_layer_views(adj, params, n_layers))
