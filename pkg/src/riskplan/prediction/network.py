"""Attention-augmented LSTM encoder-decoder with convolutional social pooling.

One shared LSTM cell encodes the target agent's history and every neighbor
history.  Neighbor encodings feed two interaction paths: cosine-similarity
attention weights (queried by the target's final hidden state) form a
weighted neighbor summary, and the same encodings placed on a target-centered
spatial grid pass through a small convolution and projection.  The two paths
are summed, concatenated with the target's own encoding, and decoded into
per-step bivariate Gaussians over future positions.

Everything is plain numpy so the reverse pass in ``backprop`` can mirror it
operation by operation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit as sigmoid

from ..scenario import AgentState
from .types import RHO_BOUND, SIGMA_FLOOR, PredictedDistribution, TrackHistory

PARAMS_FILE_VERSION = 1

# attention falls back to uniform weights below these magnitudes
DENOM_GUARD = 1e-6
NORM_GUARD = 1e-12


class DimensionError(Exception):
    """Parameter and input dimensions do not agree."""


@dataclass(frozen=True)
class NetConfig:
    d_h: int = 16          # hidden size, shared by encoder/attention/decoder
    h_p: int = 8           # history steps
    h_f: int = 12          # forecast steps
    input_dim: int = 4     # (dx, dy, v, heading) per history step
    grid_x: int = 13       # pooling grid cells, longitudinal
    grid_y: int = 3        # pooling grid cells, lateral
    cell_size: float = 4.0
    conv_channels: int = 8
    kernel_x: int = 3
    kernel_y: int = 3

    @property
    def conv_out_x(self) -> int:
        return self.grid_x - self.kernel_x + 1

    @property
    def conv_out_y(self) -> int:
        return self.grid_y - self.kernel_y + 1

    @property
    def pool_flat_dim(self) -> int:
        return self.conv_out_x * self.conv_out_y * self.conv_channels

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# (name, shape builder) for every parameter block, in serialization order
def _block_shapes(cfg: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    h = cfg.d_h
    return [
        ("enc_wx", (cfg.input_dim, 4 * h)),
        ("enc_wh", (h, 4 * h)),
        ("enc_b", (4 * h,)),
        ("conv_k", (cfg.conv_channels, h, cfg.kernel_x, cfg.kernel_y)),
        ("conv_b", (cfg.conv_channels,)),
        ("pool_w", (cfg.pool_flat_dim, h)),
        ("pool_b", (h,)),
        ("dec_wx", (2 * h, 4 * h)),
        ("dec_wh", (h, 4 * h)),
        ("dec_b", (4 * h,)),
        ("out_w", (h, 5)),
        ("out_b", (5,)),
    ]


class NetworkParams:
    """Named parameter blocks; supports flat-vector views for gradient checks."""

    def __init__(self, config: NetConfig, blocks: dict[str, np.ndarray]) -> None:
        expected = _block_shapes(config)
        if set(blocks) != {name for name, _ in expected}:
            raise DimensionError("parameter blocks do not match the network config")
        for name, shape in expected:
            if blocks[name].shape != shape:
                raise DimensionError(
                    f"block '{name}' has shape {blocks[name].shape}, expected {shape}")
        self.config = config
        self.blocks = {name: np.asarray(blocks[name], dtype=float) for name, _ in expected}

    def __getattr__(self, name: str) -> np.ndarray:
        try:
            return self.__dict__["blocks"][name]
        except KeyError:
            raise AttributeError(name) from None

    @classmethod
    def zeros(cls, config: NetConfig) -> "NetworkParams":
        return cls(config, {name: np.zeros(shape) for name, shape in _block_shapes(config)})

    @classmethod
    def init(cls, config: NetConfig, rng: np.random.Generator,
             scale: float = 1.0) -> "NetworkParams":
        """Fan-in scaled normal init; biases start at zero."""
        blocks = {}
        for name, shape in _block_shapes(config):
            if name.endswith("_b"):
                blocks[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
                if name == "conv_k":
                    fan_in = config.d_h * config.kernel_x * config.kernel_y
                blocks[name] = rng.normal(0.0, scale / math.sqrt(fan_in), size=shape)
        return cls(config, blocks)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, {k: v.copy() for k, v in self.blocks.items()})

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.blocks[name].ravel()
                               for name, _ in _block_shapes(self.config)])

    @classmethod
    def from_vector(cls, config: NetConfig, vec: np.ndarray) -> "NetworkParams":
        blocks = {}
        offset = 0
        for name, shape in _block_shapes(config):
            size = int(np.prod(shape))
            blocks[name] = vec[offset:offset + size].reshape(shape)
            offset += size
        if offset != vec.size:
            raise DimensionError("parameter vector length does not match the config")
        return cls(config, blocks)

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros(shape) for name, shape in _block_shapes(self.config)}


def save_params(params: NetworkParams, path) -> None:
    doc = {
        "version": PARAMS_FILE_VERSION,
        "config": params.config.to_dict(),
        "blocks": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.blocks.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_params(path) -> NetworkParams:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != PARAMS_FILE_VERSION:
        raise ValueError(f"unsupported params file version {doc.get('version')!r}")
    cfg = NetConfig(**doc["config"])
    blocks = {name: np.array(block["data"], dtype=float).reshape(block["shape"])
              for name, block in doc["blocks"].items()}
    return NetworkParams(cfg, blocks)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def lstm_step(xw: np.ndarray, h: np.ndarray, c: np.ndarray,
              wh: np.ndarray, b: np.ndarray):
    """One LSTM step given the precomputed input projection ``xw``.

    Gate layout along the last axis is (input, forget, output, candidate).
    Returns the new hidden/cell states plus the cache the backward pass needs.
    """
    gates = xw + h @ wh + b
    d = wh.shape[0]
    ifo = sigmoid(gates[..., :3 * d])
    i = ifo[..., 0:d]
    f = ifo[..., d:2 * d]
    o = ifo[..., 2 * d:3 * d]
    g = np.tanh(gates[..., 3 * d:4 * d])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (h, c, i, f, o, g, tc)


def lstm_step_backward(dh: np.ndarray, dc: np.ndarray, cache, wh: np.ndarray):
    """Reverse of ``lstm_step``; returns (dgates, dh_prev, dc_prev)."""
    h_prev, c_prev, i, f, o, g, tc = cache
    dc_total = dc + dh * o * (1.0 - tc * tc)
    di = dc_total * g * i * (1.0 - i)
    df = dc_total * c_prev * f * (1.0 - f)
    do = dh * tc * o * (1.0 - o)
    dg = dc_total * i * (1.0 - g * g)
    dgates = np.concatenate([di, df, do, dg], axis=-1)
    dh_prev = dgates @ wh.T
    dc_prev = dc_total * f
    return dgates, dh_prev, dc_prev


def history_inputs(history: TrackHistory) -> np.ndarray:
    """Per-step encoder inputs (dx, dy, v, heading); padded steps carry zero
    position increments by construction (the earliest state is repeated)."""
    n = len(history.states)
    out = np.zeros((n, 4))
    for t, state in enumerate(history.states):
        if t > 0:
            prev = history.states[t - 1]
            out[t, 0] = state.x - prev.x
            out[t, 1] = state.y - prev.y
        out[t, 2] = state.v
        out[t, 3] = state.heading
    return out


@dataclass
class SceneInputs:
    """Network-ready view of one prediction scene (target agent + neighbors)."""
    ego_inputs: np.ndarray        # (h_p, input_dim)
    neighbor_inputs: np.ndarray   # (m, h_p, input_dim)
    rel_positions: np.ndarray     # (m, 2) neighbor minus target, at prediction time
    anchor: np.ndarray            # (2,) target world position at prediction time


def scene_from_histories(ego: TrackHistory,
                         neighbors: list[TrackHistory],
                         cfg: NetConfig) -> SceneInputs:
    if len(ego.states) != cfg.h_p:
        raise DimensionError(
            f"history length {len(ego.states)} does not match configured h_p={cfg.h_p}")
    anchor = np.array([ego.last.x, ego.last.y])
    m = len(neighbors)
    neighbor_inputs = np.zeros((m, cfg.h_p, cfg.input_dim))
    rel = np.zeros((m, 2))
    for j, nb in enumerate(neighbors):
        if len(nb.states) != cfg.h_p:
            raise DimensionError("neighbor history length does not match h_p")
        neighbor_inputs[j] = history_inputs(nb)
        rel[j] = (nb.last.x - anchor[0], nb.last.y - anchor[1])
    return SceneInputs(history_inputs(ego), neighbor_inputs, rel, anchor)


def encode_batch(params: NetworkParams, inputs: np.ndarray):
    """Run the shared encoder cell over a batch of histories.

    inputs: (B, h_p, input_dim).  Returns final hiddens (B, d_h) and the
    per-step caches for BPTT.
    """
    cfg = params.config
    if inputs.ndim != 3 or inputs.shape[2] != cfg.input_dim:
        raise DimensionError(
            f"encoder inputs have shape {inputs.shape}, expected (*, *, {cfg.input_dim})")
    batch, steps, _ = inputs.shape
    xw_all = inputs @ params.enc_wx  # (B, h_p, 4H)
    h = np.zeros((batch, cfg.d_h))
    c = np.zeros((batch, cfg.d_h))
    caches = []
    for t in range(steps):
        h, c, cache = lstm_step(xw_all[:, t], h, c, params.enc_wh, params.enc_b)
        caches.append(cache)
    return h, (inputs, caches)


def encode_history(params: NetworkParams, history: TrackHistory) -> np.ndarray:
    """Final hidden vector for a single history."""
    h, _ = encode_batch(params, history_inputs(history)[None, :, :])
    return h[0]


def cosine_similarities(query: np.ndarray, hiddens: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(query)
    hn = np.linalg.norm(hiddens, axis=1)
    denom = qn * hn
    safe = np.where(denom > 0, denom, 1.0)
    return (hiddens @ query) / safe


def _attention_forward(query: np.ndarray, hiddens: np.ndarray):
    """Weights plus the cache the backward pass needs (None on fallback)."""
    m = hiddens.shape[0]
    if m == 0:
        return np.zeros(0), None
    if hiddens.shape[1] != len(query):
        raise DimensionError("attention operands must share the hidden dimension")
    norms = np.linalg.norm(hiddens, axis=1)
    if np.linalg.norm(query) < NORM_GUARD or np.any(norms < NORM_GUARD):
        return np.full(m, 1.0 / m), None
    cos = cosine_similarities(query, hiddens)
    total = float(np.sum(cos))
    if abs(total) < DENOM_GUARD:
        return np.full(m, 1.0 / m), None
    return cos / total, (query, hiddens, cos, total)


def attention_weights(query: np.ndarray, hiddens) -> np.ndarray:
    """Normalized cosine-similarity weights over neighbor encodings.

    Falls back to uniform weights when the similarity sum is too close to
    zero to divide by, or when any operand is (numerically) the zero vector.
    """
    query = np.asarray(query, dtype=float)
    hiddens = np.atleast_2d(np.asarray(hiddens, dtype=float)) if len(hiddens) else \
        np.zeros((0, len(query)))
    weights, _ = _attention_forward(query, hiddens)
    return weights


def attention_fuse(weights: np.ndarray, hiddens, d_h: int | None = None) -> np.ndarray:
    """Weighted sum of neighbor encodings; the empty sum is the zero vector."""
    hiddens = np.asarray(hiddens, dtype=float)
    if len(weights) == 0:
        if d_h is None:
            raise DimensionError("empty fuse needs an explicit hidden dimension")
        return np.zeros(d_h)
    if hiddens.shape[0] != len(weights):
        raise DimensionError("attention weights and hidden states differ in length")
    return weights @ hiddens


def grid_cells(cfg: NetConfig, rel_positions: np.ndarray) -> list[tuple[int, int] | None]:
    """Nearest grid cell per neighbor, or None when off-grid."""
    cells: list[tuple[int, int] | None] = []
    for rx, ry in np.atleast_2d(rel_positions) if len(rel_positions) else []:
        ix = math.floor(rx / cfg.cell_size + 0.5 * (cfg.grid_x - 1) + 0.5)
        iy = math.floor(ry / cfg.cell_size + 0.5 * (cfg.grid_y - 1) + 0.5)
        if 0 <= ix < cfg.grid_x and 0 <= iy < cfg.grid_y:
            cells.append((ix, iy))
        else:
            cells.append(None)
    return cells


def social_pool(params: NetworkParams, neighbor_hiddens: np.ndarray,
                cells: list[tuple[int, int] | None]):
    """Grid-scatter, convolve, flatten, and project the neighbor encodings.

    Neighbors are placed in list order, so when two map to the same cell the
    later one wins.  Returns the pooled feature vector and the cache for the
    backward pass.
    """
    cfg = params.config
    grid = np.zeros((cfg.d_h, cfg.grid_x, cfg.grid_y))
    winners: dict[tuple[int, int], int] = {}
    for j, cell in enumerate(cells):
        if cell is None:
            continue
        grid[:, cell[0], cell[1]] = neighbor_hiddens[j]
        winners[cell] = j
    # valid cross-correlation via im2col
    windows = sliding_window_view(grid, (cfg.kernel_x, cfg.kernel_y), axis=(1, 2))
    # windows: (d_h, Ox, Oy, kx, ky) -> patches (Ox*Oy, d_h*kx*ky)
    patches = windows.transpose(1, 2, 0, 3, 4).reshape(
        cfg.conv_out_x * cfg.conv_out_y, -1)
    k_flat = params.conv_k.reshape(cfg.conv_channels, -1)
    conv_out = patches @ k_flat.T + params.conv_b  # (Ox*Oy, C)
    flat = conv_out.ravel()
    pooled = flat @ params.pool_w + params.pool_b
    return pooled, (patches, flat, winners)


def fuse(pooled: np.ndarray, weighted_neighbors: np.ndarray) -> np.ndarray:
    """Sum of the convolutional and attention interaction paths."""
    if pooled.shape != weighted_neighbors.shape:
        raise DimensionError("fusion operands must share the hidden dimension")
    return pooled + weighted_neighbors


def decode(params: NetworkParams, context: np.ndarray, ego_hidden: np.ndarray,
            h_f: int | None = None):
    """Unroll the decoder over the forecast horizon.

    The decoder consumes the same input every step: the fused interaction
    vector concatenated with the target's own encoding.  Returns the raw
    5-channel outputs (before squashing) and caches.
    """
    cfg = params.config
    steps = cfg.h_f if h_f is None else h_f
    dec_in = np.concatenate([context, ego_hidden])
    if dec_in.shape[0] != params.dec_wx.shape[0]:
        raise DimensionError("decoder input does not match dec_wx")
    xw = dec_in @ params.dec_wx
    h = np.zeros(cfg.d_h)
    c = np.zeros(cfg.d_h)
    caches = []
    hiddens = np.zeros((steps, cfg.d_h))
    for t in range(steps):
        h, c, cache = lstm_step(xw, h, c, params.dec_wh, params.dec_b)
        caches.append(cache)
        hiddens[t] = h
    raw = hiddens @ params.out_w + params.out_b
    return raw, (dec_in, hiddens, caches)


def squash_outputs(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map raw decoder outputs to (mu, sigma, rho) satisfying the invariants."""
    mu = raw[:, 0:2]
    sigma = softplus(raw[:, 2:4]) + SIGMA_FLOOR
    rho = RHO_BOUND * np.tanh(raw[:, 4])
    return mu, sigma, rho


def forward_scene(params: NetworkParams, scene: SceneInputs, h_f: int | None = None):
    """Full forward pass; returns (mu_world, sigma, rho, cache)."""
    cfg = params.config
    m = scene.neighbor_inputs.shape[0]
    all_inputs = np.concatenate([scene.ego_inputs[None], scene.neighbor_inputs], axis=0)
    hiddens, enc_cache = encode_batch(params, all_inputs)
    ego_h = hiddens[0]
    neighbor_h = hiddens[1:]
    weights, att_cache = _attention_forward(ego_h, neighbor_h)
    weighted = attention_fuse(weights, neighbor_h, d_h=cfg.d_h)
    cells = grid_cells(cfg, scene.rel_positions)
    pooled, pool_cache = social_pool(params, neighbor_h, cells)
    context = fuse(pooled, weighted)
    raw, dec_cache = decode(params, context, ego_h, h_f=h_f)
    mu, sigma, rho = squash_outputs(raw)
    mu_world = mu + scene.anchor
    cache = {
        "enc": enc_cache,
        "hiddens": hiddens,
        "weights": weights,
        "attention": att_cache,
        "m": m,
        "pool": pool_cache,
        "dec": dec_cache,
        "raw": raw,
        "sigma": sigma,
        "rho": rho,
    }
    return mu_world, sigma, rho, cache


def predict(params: NetworkParams, ego_history: TrackHistory,
            neighbor_histories: list[TrackHistory],
            h_f: int | None = None) -> PredictedDistribution:
    """Forecast the target agent's future positions as per-step Gaussians.

    The network operates in a frame centered on the target's position at
    prediction time; means are shifted back to world coordinates on return.
    """
    cfg = params.config
    scene = scene_from_histories(ego_history, neighbor_histories, cfg)
    mu_world, sigma, rho, _ = forward_scene(params, scene, h_f=h_f)
    return PredictedDistribution(mu_world, sigma, rho)
