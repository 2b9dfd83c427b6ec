"""Reverse-mode gradients for the forecasting network.

The forward pass in ``network`` is mirrored here operation by operation:
negative log-likelihood head, decoder BPTT, the two interaction paths
(attention and convolutional pooling), and encoder BPTT shared across the
target and all neighbors.  ``check_gradients`` validates the whole chain
against central finite differences.
"""

from __future__ import annotations

import math

import numpy as np

from ..scenario import AgentState
from .network import (
    RHO_BOUND,
    NetConfig,
    NetworkParams,
    SceneInputs,
    forward_scene,
    lstm_step_backward,
    sigmoid,
)
from .types import TrackHistory


def nll_terms(mu: np.ndarray, sigma: np.ndarray, rho: np.ndarray,
              truth: np.ndarray) -> np.ndarray:
    """Per-step negative log-density of the truth under the Gaussians."""
    dx = truth[:, 0] - mu[:, 0]
    dy = truth[:, 1] - mu[:, 1]
    sx, sy = sigma[:, 0], sigma[:, 1]
    u = dx / sx
    v = dy / sy
    k = 1.0 - rho ** 2
    q = (u * u - 2.0 * rho * u * v + v * v) / k
    return (math.log(2.0 * math.pi) + np.log(sx) + np.log(sy)
            + 0.5 * np.log(k) + 0.5 * q)


def nll_gradients(mu: np.ndarray, sigma: np.ndarray, rho: np.ndarray,
                  truth: np.ndarray):
    """Per-step gradients of the summed NLL w.r.t. mu, sigma, and rho."""
    dx = truth[:, 0] - mu[:, 0]
    dy = truth[:, 1] - mu[:, 1]
    sx, sy = sigma[:, 0], sigma[:, 1]
    u = dx / sx
    v = dy / sy
    k = 1.0 - rho ** 2
    q = (u * u - 2.0 * rho * u * v + v * v) / k
    dmu = np.stack([-(u - rho * v) / (k * sx),
                    -(v - rho * u) / (k * sy)], axis=1)
    dsigma = np.stack([(1.0 - u * (u - rho * v) / k) / sx,
                       (1.0 - v * (v - rho * u) / k) / sy], axis=1)
    drho = (rho * (q - 1.0) - u * v) / k
    return dmu, dsigma, drho


def attention_backward(d_weights: np.ndarray, cache):
    """Backward through the normalized cosine-similarity weights.

    ``cache`` is None when the forward pass took the uniform fallback, in
    which case the weights are constants and contribute no gradient.
    """
    if cache is None:
        return None
    query, hiddens, cos, total = cache
    dot = float(d_weights @ cos)
    dcos = d_weights / total - dot / (total * total)
    qn = float(np.linalg.norm(query))
    hn = np.linalg.norm(hiddens, axis=1)
    dquery = ((dcos / hn) @ hiddens) / qn - float(dcos @ cos) * query / (qn * qn)
    dhiddens = np.outer(dcos / (qn * hn), query) \
        - ((dcos * cos / (hn * hn))[:, None]) * hiddens
    return dquery, dhiddens


def loss_forward(params: NetworkParams, scene: SceneInputs,
                 truth: np.ndarray) -> float:
    mu, sigma, rho, _ = forward_scene(params, scene, h_f=truth.shape[0])
    return float(np.mean(nll_terms(mu, sigma, rho, truth)))


def loss_and_gradients(params: NetworkParams, scene: SceneInputs,
                       truth: np.ndarray):
    """Mean NLL of the truth plus gradients for every parameter block."""
    cfg = params.config
    h_steps = truth.shape[0]
    mu, sigma, rho, cache = forward_scene(params, scene, h_f=h_steps)
    terms = nll_terms(mu, sigma, rho, truth)
    loss = float(np.mean(terms))

    grads = params.zero_grads()
    dmu, dsigma, drho = nll_gradients(mu, sigma, rho, truth)
    scale = 1.0 / h_steps

    # output head: undo the squashing, then the linear projection
    raw = cache["raw"]
    draw = np.zeros_like(raw)
    draw[:, 0:2] = dmu * scale
    draw[:, 2:4] = dsigma * sigmoid(raw[:, 2:4]) * scale
    tanh_r = cache["rho"] / RHO_BOUND
    draw[:, 4] = drho * RHO_BOUND * (1.0 - tanh_r * tanh_r) * scale

    dec_in, dec_hiddens, dec_caches = cache["dec"]
    grads["out_w"] += dec_hiddens.T @ draw
    grads["out_b"] += draw.sum(axis=0)
    dh_steps = draw @ params.out_w.T

    # decoder BPTT; the input is constant across steps
    dh = np.zeros(cfg.d_h)
    dc = np.zeros(cfg.d_h)
    dgates_sum = np.zeros(4 * cfg.d_h)
    for t in reversed(range(h_steps)):
        dgates, dh, dc = lstm_step_backward(
            dh + dh_steps[t], dc, dec_caches[t], params.dec_wh)
        dgates_sum += dgates
        grads["dec_wh"] += np.outer(dec_caches[t][0], dgates)
    grads["dec_wx"] += np.outer(dec_in, dgates_sum)
    grads["dec_b"] += dgates_sum
    ddec_in = dgates_sum @ params.dec_wx.T

    d_context = ddec_in[:cfg.d_h]
    d_ego_h = ddec_in[cfg.d_h:].copy()

    m = cache["m"]
    hiddens = cache["hiddens"]
    neighbor_h = hiddens[1:]
    d_neighbor_h = np.zeros((m, cfg.d_h))

    # fusion is a plain sum: both interaction paths receive d_context
    d_pooled = d_context
    d_weighted = d_context

    # pooling path: projection, convolution, grid scatter
    patches, flat, winners = cache["pool"]
    dflat = d_pooled @ params.pool_w.T
    grads["pool_w"] += np.outer(flat, d_pooled)
    grads["pool_b"] += d_pooled
    dconv_out = dflat.reshape(cfg.conv_out_x * cfg.conv_out_y, cfg.conv_channels)
    grads["conv_b"] += dconv_out.sum(axis=0)
    k_flat = params.conv_k.reshape(cfg.conv_channels, -1)
    grads["conv_k"] += (dconv_out.T @ patches).reshape(params.conv_k.shape)
    dpatches = dconv_out @ k_flat
    dgrid = np.zeros((cfg.d_h, cfg.grid_x, cfg.grid_y))
    for p in range(dpatches.shape[0]):
        i, j = divmod(p, cfg.conv_out_y)
        dgrid[:, i:i + cfg.kernel_x, j:j + cfg.kernel_y] += \
            dpatches[p].reshape(cfg.d_h, cfg.kernel_x, cfg.kernel_y)
    for cell, j in winners.items():
        d_neighbor_h[j] += dgrid[:, cell[0], cell[1]]

    # attention path: weighted sum, then the weights themselves
    weights = cache["weights"]
    if m > 0:
        d_att_weights = neighbor_h @ d_weighted
        d_neighbor_h += np.outer(weights, d_weighted)
        att = attention_backward(d_att_weights, cache["attention"])
        if att is not None:
            dq, dhs = att
            d_ego_h += dq
            d_neighbor_h += dhs

    # encoder BPTT, batched over the target and all neighbors
    inputs, enc_caches = cache["enc"]
    batch = inputs.shape[0]
    dh_b = np.vstack([d_ego_h[None, :], d_neighbor_h])
    dc_b = np.zeros((batch, cfg.d_h))
    for t in reversed(range(inputs.shape[1])):
        dgates, dh_b, dc_b = lstm_step_backward(
            dh_b, dc_b, enc_caches[t], params.enc_wh)
        grads["enc_wh"] += enc_caches[t][0].T @ dgates
        grads["enc_b"] += dgates.sum(axis=0)
        grads["enc_wx"] += inputs[:, t].T @ dgates

    return loss, grads


def gradients_vector(params: NetworkParams, grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[name].ravel() for name in params.blocks])


# coordinates whose plain quotient already matches this closely skip the
# adaptive re-estimation
_FD_FAST_ACCEPT = 2.5e-5
_RIDDERS_TABLEAU = 10
_RIDDERS_SHRINK = 1.4


def _ridders_derivative(quotient, h0: float) -> float:
    """Adaptive central difference (Ridders/Richardson extrapolation).

    Starts from a deliberately large step and extrapolates the quotient to
    zero step size, tracking the internal error estimate; this resolves
    coordinates whose truncation/rounding trade-off leaves no single
    workable step.
    """
    shrink2 = _RIDDERS_SHRINK * _RIDDERS_SHRINK
    tableau = np.empty((_RIDDERS_TABLEAU, _RIDDERS_TABLEAU))
    h = h0
    tableau[0, 0] = quotient(h)
    best = tableau[0, 0]
    best_err = np.inf
    for i in range(1, _RIDDERS_TABLEAU):
        h /= _RIDDERS_SHRINK
        tableau[0, i] = quotient(h)
        fac = shrink2
        for j in range(1, i + 1):
            tableau[j, i] = (tableau[j - 1, i] * fac - tableau[j - 1, i - 1]) \
                / (fac - 1.0)
            fac *= shrink2
            err = max(abs(tableau[j, i] - tableau[j - 1, i]),
                      abs(tableau[j, i] - tableau[j - 1, i - 1]))
            if err <= best_err:
                best_err = err
                best = tableau[j, i]
        if abs(tableau[i, i] - tableau[i - 1, i - 1]) >= 2.0 * best_err:
            break
    return float(best)


def check_gradients(params: NetworkParams, scene: SceneInputs, truth: np.ndarray,
                    eps: float = 1e-5) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    Every parameter is probed with a plain central difference at step
    ``eps``; coordinates where that quotient disagrees with the analytic
    value are re-estimated with Ridders' adaptive scheme, which balances
    rounding against truncation per coordinate.  All arithmetic is double
    precision.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    _, grads = loss_and_gradients(params, scene, truth)
    analytic = gradients_vector(params, grads)

    vec = params.to_vector()
    probe = NetworkParams.from_vector(params.config, vec)  # blocks view vec

    def quotient_at(idx: int):
        orig = vec[idx]

        def quotient(h: float) -> float:
            vec[idx] = orig + h
            lp = loss_forward(probe, scene, truth)
            vec[idx] = orig - h
            lm = loss_forward(probe, scene, truth)
            vec[idx] = orig
            return (lp - lm) / (2.0 * h)

        return quotient

    numeric = np.empty_like(vec)
    for idx in range(vec.size):
        quotient = quotient_at(idx)
        numeric[idx] = quotient(eps)
        denom = max(abs(analytic[idx]), abs(numeric[idx]), 1e-8)
        if abs(analytic[idx] - numeric[idx]) / denom > _FD_FAST_ACCEPT:
            numeric[idx] = _ridders_derivative(quotient, h0=512.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_check_point(rng: np.random.Generator, cfg: NetConfig,
                       n_neighbors: int = 3, scale: float = 0.5,
                       min_cos_total: float = 0.3):
    """Seeded (params, scene, truth) triple suitable for finite differences.

    The attention normalization is singular where the cosine sum crosses
    zero; difference quotients there measure the pole, not the gradient, so
    draws near it are rejected (deterministically, from the same stream).
    """
    from .network import _attention_forward, encode_batch

    for _ in range(64):
        params = NetworkParams.init(cfg, rng, scale=scale)
        scene, truth = random_scene(rng, cfg, n_neighbors=n_neighbors)
        inputs = np.concatenate([scene.ego_inputs[None], scene.neighbor_inputs])
        hiddens, _ = encode_batch(params, inputs)
        _, att_cache = _attention_forward(hiddens[0], hiddens[1:])
        if att_cache is not None and abs(att_cache[3]) >= min_cos_total:
            return params, scene, truth
    raise RuntimeError("could not draw a well-conditioned gradient-check point")


def random_scene(rng: np.random.Generator, cfg: NetConfig,
                 n_neighbors: int = 3) -> tuple[SceneInputs, np.ndarray]:
    """Seeded synthetic scene plus ground-truth futures for checks and tests."""

    def random_history(agent_id: str, origin: np.ndarray) -> TrackHistory:
        heading = float(rng.uniform(-math.pi, math.pi))
        speed = float(rng.uniform(1.0, 8.0))
        dt = 0.25
        states = []
        pos = origin.copy()
        for _ in range(cfg.h_p):
            states.append(AgentState(float(pos[0]), float(pos[1]), speed, heading))
            heading = float(np.arctan2(math.sin(heading + rng.normal(0, 0.1)),
                                       math.cos(heading + rng.normal(0, 0.1))))
            speed = float(np.clip(speed + rng.normal(0, 0.3), 0.0, 12.0))
            pos = pos + speed * dt * np.array([math.cos(heading), math.sin(heading)])
        return TrackHistory(agent_id, tuple(states), tuple([True] * cfg.h_p))

    ego = random_history("target", np.zeros(2))
    half_x = 0.5 * cfg.grid_x * cfg.cell_size
    half_y = 0.5 * cfg.grid_y * cfg.cell_size
    neighbors = [
        random_history(f"n{j}", np.array([rng.uniform(-half_x, half_x),
                                          rng.uniform(-half_y, half_y)]))
        for j in range(n_neighbors)
    ]
    from .network import scene_from_histories
    scene = scene_from_histories(ego, neighbors, cfg)
    # keep the truth near the anchor so the NLL magnitude stays small; large
    # loss values push the finite-difference cancellation floor above the
    # smallest true gradients
    steps = rng.normal(0.0, 0.25, size=(cfg.h_f, 2)).cumsum(axis=0)
    truth = scene.anchor + steps
    return scene, truth
