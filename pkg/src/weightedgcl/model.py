"""Forward pass: layer views, mean aggregation, final-layer perturbation,
and the squeeze/excitation gate that recalibrates the two contrastive views.

All matrices are float64 with one column per node (d x |N|).  The exciter
is a small shared feed-forward ladder applied node-wise: it maps the
per-node scalar summary back up to d gating weights through dims
1 -> ... -> d that ascend by an equal scale (the K-th root of d), ReLU on
interior layers and a final sigmoid.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .graph import NormalizedAdjacency, propagate

PERTURB_MODES = ("final", "all", "none")


def granularity_dims(d: int, levels: int) -> list[int]:
    """Dimension ladder [1, ..., d] for an exciter with ``levels`` layers.

    Interior dims follow round(d**(k/levels)) (half away from zero),
    clamped to strictly increase.  Raises ConfigError when d is too small
    to fit ``levels`` strictly increasing layers.
    """
    if d < 1:
        raise ConfigError(f"embedding dim must be >= 1, got {d}")
    if not 1 <= levels <= 4:
        raise ConfigError(f"granularity must be in 1..4, got {levels}")
    dims = [1]
    for k in range(1, levels):
        raw = math.floor(d ** (k / levels) + 0.5)
        dims.append(max(raw, dims[-1] + 1))
    dims.append(d)
    if any(hi <= lo for lo, hi in zip(dims, dims[1:])):
        raise ConfigError(f"embedding dim {d} too small for {levels} exciter layers (ladder {dims})")
    return dims


@dataclass(frozen=True)
class GranularitySchedule:
    """Exciter depth and its dimension ladder for a given embedding dim."""

    d: int
    levels: int
    dims: list[int] = field(default_factory=list)

    def __post_init__(self):
        expected = granularity_dims(self.d, self.levels)
        if not self.dims:
            object.__setattr__(self, "dims", expected)
        elif list(self.dims) != expected:
            raise ConfigError(f"dims {self.dims} inconsistent with d={self.d}, levels={self.levels}")


@dataclass
class ModelParams:
    """Base embedding table plus the exciter weight/bias ladder."""

    embeddings: np.ndarray          # d x |N|
    weights: list[np.ndarray]       # W_k of shape dims[k] x dims[k-1]
    biases: list[np.ndarray]        # b_k of length dims[k]

    @property
    def d(self) -> int:
        return self.embeddings.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.embeddings.shape[1]

    @property
    def levels(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "ModelParams":
        return ModelParams(
            embeddings=self.embeddings.copy(),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_params(num_nodes: int, d: int, schedule: GranularitySchedule, seed) -> ModelParams:
    """Xavier-uniform init: embeddings ~ U(-a, a) with a = sqrt(6/(|N|+d)),
    exciter layer k ~ U(-a_k, a_k) with a_k = sqrt(6/(dims[k-1]+dims[k])),
    biases zero.  Draw order (embeddings, then W_1..W_K) is fixed, so the
    result is deterministic per seed.
    """
    if schedule.d != d:
        raise ConfigError(f"schedule built for d={schedule.d}, requested d={d}")
    rng = np.random.default_rng(seed)
    a = math.sqrt(6.0 / (num_nodes + d))
    embeddings = rng.uniform(-a, a, size=(d, num_nodes))
    weights, biases = [], []
    for k in range(1, len(schedule.dims)):
        fan_in, fan_out = schedule.dims[k - 1], schedule.dims[k]
        ak = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-ak, ak, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(embeddings=embeddings, weights=weights, biases=biases)


def compute_layer_views(adj: NormalizedAdjacency, params: ModelParams, n_layers: int) -> list[np.ndarray]:
    """Views E(0..L): E(0) is the base table, E(l) propagates E(l-1)."""
    if n_layers < 1:
        raise ConfigError(f"layer count must be >= 1, got {n_layers}")
    views = [params.embeddings]
    for _ in range(n_layers):
        views.append(propagate(adj, views[-1]))
    return views


def aggregate_mean(layer_views: list[np.ndarray]) -> np.ndarray:
    """Elementwise mean of the L+1 layer views."""
    shape = layer_views[0].shape
    for v in layer_views[1:]:
        if v.shape != shape:
            raise ValueError(f"layer view shapes differ: {shape} vs {v.shape}")
    return np.mean(np.stack(layer_views, axis=0), axis=0)


@dataclass(frozen=True)
class PerturbRecord:
    """Noise drawn for each branch, retained for exact gradient replay.

    For mode "final" each branch holds one d x |N| matrix; for "all" one
    per layer view; for "none" the lists are empty.
    """

    mode: str
    bar: list[np.ndarray]
    tilde: list[np.ndarray]


def perturb(layer_views: list[np.ndarray], mode: str, rng: np.random.Generator,
            noise: PerturbRecord | None = None) -> tuple[np.ndarray, np.ndarray, PerturbRecord]:
    """Build the two perturbed aggregates F-bar / F-tilde.

    mode "final" adds independent U[0,1) noise to the final layer view of
    each branch (so only that term of the mean differs from the clean
    aggregate); "all" noises every layer view independently; "none" returns
    the clean aggregate twice.  Pass ``noise`` to replay recorded draws
    instead of sampling; branch draw order is bar then tilde, layers in
    ascending order.
    """
    if mode not in PERTURB_MODES:
        raise ConfigError(f"perturbation mode must be one of {PERTURB_MODES}, got {mode!r}")
    f = aggregate_mean(layer_views)
    scale = 1.0 / len(layer_views)
    if mode == "none":
        record = noise if noise is not None else PerturbRecord(mode, [], [])
        return f, f, record

    n_draws = 1 if mode == "final" else len(layer_views)
    if noise is None:
        shape = layer_views[0].shape
        bar = [rng.uniform(0.0, 1.0, size=shape) for _ in range(n_draws)]
        tilde = [rng.uniform(0.0, 1.0, size=shape) for _ in range(n_draws)]
        noise = PerturbRecord(mode, bar, tilde)
    elif noise.mode != mode or len(noise.bar) != n_draws or len(noise.tilde) != n_draws:
        raise ConfigError("replayed noise record does not match the requested mode")

    f_bar = f + scale * sum(noise.bar)
    f_tilde = f + scale * sum(noise.tilde)
    return f_bar, f_tilde, noise


def squeeze(view: np.ndarray) -> np.ndarray:
    """Average-pool each node column down to a scalar summary (1 x |N|)."""
    return view.mean(axis=0, keepdims=True)


def excite(summary: np.ndarray, params: ModelParams, with_cache: bool = False):
    """Expand per-node summaries back to d gating weights in (0, 1).

    The ladder is shared across nodes and branches: h_k = relu(W_k h_{k-1}
    + b_k) for interior layers and sigmoid on the last.  With
    ``with_cache`` also returns the activations needed for backprop.
    """
    h = summary
    hs = [h]          # inputs to each layer
    zs = []           # pre-activations
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = w @ h + b[:, None]
        zs.append(z)
        h = expit(z) if k == last else np.maximum(z, 0.0)
        hs.append(h)
    if with_cache:
        return h, {"inputs": hs[:-1], "preacts": zs}
    return h


def recalibrate(gate: np.ndarray, view: np.ndarray) -> np.ndarray:
    """Scale a perturbed view elementwise by its gating weights."""
    if gate.shape != view.shape:
        raise ValueError(f"gate shape {gate.shape} != view shape {view.shape}")
    return gate * view


@dataclass
class ForwardState:
    """Everything one training step's losses and gradients need."""

    n_layers: int
    mode: str
    layer_views: list[np.ndarray]
    aggregated: np.ndarray            # clean F
    f_bar: np.ndarray
    f_tilde: np.ndarray
    s_bar: np.ndarray
    s_tilde: np.ndarray
    t_bar: np.ndarray
    t_tilde: np.ndarray
    r_bar: np.ndarray
    r_tilde: np.ndarray
    noise: PerturbRecord
    excite_cache_bar: dict = field(repr=False, default_factory=dict)
    excite_cache_tilde: dict = field(repr=False, default_factory=dict)


def forward(adj: NormalizedAdjacency, params: ModelParams, n_layers: int, mode: str,
            rng: np.random.Generator | None = None,
            noise: PerturbRecord | None = None) -> ForwardState:
    """Full pipeline: propagate, aggregate, perturb, squeeze/excite/recalibrate.

    The gate is applied to the perturbed aggregates only; the clean
    aggregate feeds ranking and the BPR loss.  ``noise`` replays a recorded
    draw (used for gradient checking); otherwise ``rng`` must be supplied
    for any perturbing mode.
    """
    if noise is None and mode != "none" and rng is None:
        raise ConfigError(f"mode {mode!r} draws noise: pass rng or a recorded noise")
    views = compute_layer_views(adj, params, n_layers)
    f = aggregate_mean(views)
    f_bar, f_tilde, record = perturb(views, mode, rng, noise=noise)
    s_bar, s_tilde = squeeze(f_bar), squeeze(f_tilde)
    t_bar, cache_bar = excite(s_bar, params, with_cache=True)
    t_tilde, cache_tilde = excite(s_tilde, params, with_cache=True)
    return ForwardState(
        n_layers=n_layers,
        mode=mode,
        layer_views=views,
        aggregated=f,
        f_bar=f_bar,
        f_tilde=f_tilde,
        s_bar=s_bar,
        s_tilde=s_tilde,
        t_bar=t_bar,
        t_tilde=t_tilde,
        r_bar=recalibrate(t_bar, f_bar),
        r_tilde=recalibrate(t_tilde, f_tilde),
        noise=record,
        excite_cache_bar=cache_bar,
        excite_cache_tilde=cache_tilde,
    )


def _encode(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "hex": np.ascontiguousarray(arr, dtype="<f8").tobytes().hex()}


def _decode(obj: dict) -> np.ndarray:
    return np.frombuffer(bytes.fromhex(obj["hex"]), dtype="<f8").reshape(obj["shape"]).copy()


def save_checkpoint(params: ModelParams, n_layers: int, path: str | os.PathLike) -> None:
    """JSON checkpoint with hex-encoded little-endian doubles (bit-exact)."""
    payload = {
        "header": {
            "num_nodes": params.num_nodes,
            "d": params.d,
            "K": params.levels,
            "dims": params.dims,
            "L": n_layers,
        },
        "embeddings": _encode(params.embeddings),
        "weights": [_encode(w) for w in params.weights],
        "biases": [_encode(b) for b in params.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, dict]:
    """Load a checkpoint; returns (params, header)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    params = ModelParams(
        embeddings=_decode(payload["embeddings"]),
        weights=[_decode(w) for w in payload["weights"]],
        biases=[_decode(b) for b in payload["biases"]],
    )
    return params, payload["header"]
