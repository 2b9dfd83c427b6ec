"""Per-road-user risk: collision probability, harm, and their product.

Risk for one candidate trajectory against one road user is the probability
that the user's forecast position falls inside the ego footprint expanded by
the user's own half-dimensions, multiplied by a logistic harm value driven by
relative speed.  Per-agent values are aggregated over the horizon (max by
default) into a RiskProfile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .prediction.types import PredictedDistribution
from .scenario import Agent, AgentState, Footprint, VRU_CLASSES

# integration window half-width per axis, in standard deviations; 6.5 sigma
# balances the neglected tail (8e-11) against the 24-node Gauss-Legendre
# resolution of the bulk so enclosed-mass errors stay below 1e-9
_FAR_FIELD_SIGMAS = 6.5


class RiskError(Exception):
    pass


@dataclass(frozen=True)
class ClassHarmParams:
    beta0: float
    beta1: float
    kappa: float = 1.0


@dataclass(frozen=True)
class HarmModel:
    """Logistic harm curves per road-user class, capped at 1.

    ``truck_ego_multiplier`` scales harm to the ego occupants when the
    collision partner is a truck (mass ratio proxy).
    """
    classes: dict[str, ClassHarmParams] = field(default_factory=lambda: {
        "car": ClassHarmParams(beta0=-5.0, beta1=0.25, kappa=1.0),
        "truck": ClassHarmParams(beta0=-5.0, beta1=0.25, kappa=1.0),
        "pedestrian": ClassHarmParams(beta0=-3.5, beta1=0.35, kappa=1.0),
        "cyclist": ClassHarmParams(beta0=-3.5, beta1=0.35, kappa=1.0),
    })
    truck_ego_multiplier: float = 1.5

    def __post_init__(self):
        for cls, p in self.classes.items():
            if p.beta1 <= 0:
                raise RiskError(f"harm beta1 for class '{cls}' must be > 0")
            if cls in VRU_CLASSES:
                if p.kappa < 1.0:
                    raise RiskError(f"harm kappa for VRU class '{cls}' must be >= 1")
            elif p.kappa != 1.0:
                raise RiskError(f"harm kappa for class '{cls}' must be 1")


@dataclass(frozen=True)
class AgentForecast:
    """One road user's forecast plus the metadata risk scoring needs."""
    agent: Agent
    anchor: AgentState
    prediction: PredictedDistribution


@dataclass
class RiskProfile:
    """Per-candidate risk vectors; build_risk_profile always fills both
    vectors with one entry per considered agent."""
    candidate_id: int
    agent_ids: list[str]
    agent_classes: list[str]
    ego_risks: list[float]      # risk to ego occupants, one entry per agent
    imposed_risks: list[float]  # risk to that agent, same indexing
    attribution: dict[str, float]


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def harm(ego_class: str, other_class: str, relative_speed: float,
         model: HarmModel) -> tuple[float, float]:
    """Harm to the ego occupants and to the collision partner, each in [0, 1]."""
    if relative_speed < 0:
        raise RiskError("relative_speed must be >= 0")
    try:
        ego_p = model.classes[ego_class]
        other_p = model.classes[other_class]
    except KeyError as exc:
        raise RiskError(f"unknown road-user class {exc.args[0]!r}") from exc
    mass_adj = model.truck_ego_multiplier if other_class == "truck" else 1.0
    harm_to_ego = min(1.0, ego_p.kappa * mass_adj
                      * logistic(ego_p.beta0 + ego_p.beta1 * relative_speed))
    harm_to_other = min(1.0, other_p.kappa
                        * logistic(other_p.beta0 + other_p.beta1 * relative_speed))
    return harm_to_ego, harm_to_other


def risk(p: float, h: float) -> float:
    """Risk is the product of collision probability and harm."""
    return p * h


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


def collision_probability(ego_xy: np.ndarray, ego_heading: np.ndarray,
                          ego_footprint: Footprint,
                          forecast: PredictedDistribution,
                          obstacle_footprint: Footprint,
                          nodes: int = 24) -> np.ndarray:
    """Per-step probability that the obstacle center lies inside the expanded
    ego rectangle.

    The ego rectangle (oriented by the ego heading at each step) is inflated
    by the obstacle's half-dimensions, and the obstacle's bivariate Gaussian
    is integrated over it with an ``nodes`` x ``nodes`` Gauss-Legendre rule
    after rotating the distribution into the rectangle frame.
    """
    ego_xy = np.asarray(ego_xy, dtype=float)
    ego_heading = np.asarray(ego_heading, dtype=float)
    n_steps = len(forecast)
    if ego_xy.shape != (n_steps, 2) or ego_heading.shape != (n_steps,):
        raise RiskError(
            f"ego trajectory ({ego_xy.shape[0]} steps) and forecast "
            f"({n_steps} steps) must share their step count")

    half_l = 0.5 * (ego_footprint.length + obstacle_footprint.length)
    half_w = 0.5 * (ego_footprint.width + obstacle_footprint.width)

    cos_h = np.cos(ego_heading)
    sin_h = np.sin(ego_heading)
    rel = forecast.mu - ego_xy
    # rotate mean and covariance into the rectangle frame
    mx = cos_h * rel[:, 0] + sin_h * rel[:, 1]
    my = -sin_h * rel[:, 0] + cos_h * rel[:, 1]
    sx, sy, rho = forecast.sigma[:, 0], forecast.sigma[:, 1], forecast.rho
    if np.any(sx <= 0) or np.any(sy <= 0) or np.any(np.abs(rho) >= 1):
        raise RiskError("forecast distribution is invalid (sigma <= 0 or |rho| >= 1)")
    vxx = sx ** 2
    vyy = sy ** 2
    vxy = rho * sx * sy
    a_xx = cos_h * cos_h * vxx + 2 * cos_h * sin_h * vxy + sin_h * sin_h * vyy
    a_yy = sin_h * sin_h * vxx - 2 * cos_h * sin_h * vxy + cos_h * cos_h * vyy
    a_xy = cos_h * sin_h * (vyy - vxx) + (cos_h * cos_h - sin_h * sin_h) * vxy

    # integrate only where the rectangle overlaps the distribution's
    # +-9 sigma box: far-away steps cost nothing and narrow distributions
    # keep all quadrature nodes on their mass
    std_x = np.sqrt(a_xx)
    std_y = np.sqrt(a_yy)
    lo_x = np.maximum(-half_l, mx - _FAR_FIELD_SIGMAS * std_x)
    hi_x = np.minimum(half_l, mx + _FAR_FIELD_SIGMAS * std_x)
    lo_y = np.maximum(-half_w, my - _FAR_FIELD_SIGMAS * std_y)
    hi_y = np.minimum(half_w, my + _FAR_FIELD_SIGMAS * std_y)

    gl_nodes, gl_weights = _gauss_legendre(nodes)
    out = np.zeros(n_steps)
    for t in range(n_steps):
        if lo_x[t] >= hi_x[t] or lo_y[t] >= hi_y[t]:
            continue
        cx = 0.5 * (hi_x[t] + lo_x[t])
        rx = 0.5 * (hi_x[t] - lo_x[t])
        cy = 0.5 * (hi_y[t] + lo_y[t])
        ry = 0.5 * (hi_y[t] - lo_y[t])
        px = cx + rx * gl_nodes
        py = cy + ry * gl_nodes
        det = a_xx[t] * a_yy[t] - a_xy[t] ** 2
        det = max(det, 1e-300)
        dx = (px - mx[t])[:, None]
        dy = (py - my[t])[None, :]
        quad = (a_yy[t] * dx * dx - 2 * a_xy[t] * dx * dy + a_xx[t] * dy * dy) / det
        density = np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))
        out[t] = float(np.sum(density * np.outer(gl_weights, gl_weights))
                       * rx * ry)
    return np.clip(out, 0.0, 1.0)


def _relative_speeds(ego_speed: np.ndarray, ego_heading: np.ndarray,
                     forecast: AgentForecast, dt: float) -> np.ndarray:
    """Per-step closing speed: ego velocity minus the agent's velocity proxy.

    The agent's velocity proxy is the forecast mean displacement per step;
    using the vector difference keeps head-on and crossing geometries
    consistent with how collisions are scored at impact.
    """
    mu = forecast.prediction.mu
    prev = np.vstack([[forecast.anchor.x, forecast.anchor.y], mu[:-1]])
    v_agent = (mu - prev) / dt
    v_ego = np.stack([ego_speed * np.cos(ego_heading),
                      ego_speed * np.sin(ego_heading)], axis=1)
    diff = v_ego - v_agent
    return np.hypot(diff[:, 0], diff[:, 1])


def _aggregate(values: np.ndarray, mode: str) -> float:
    if len(values) == 0:
        return 0.0
    if mode == "max":
        return float(np.max(values))
    if mode == "survival":
        return float(1.0 - np.prod(1.0 - values))
    raise RiskError(f"unknown risk aggregation mode '{mode}'")


def build_risk_profile(candidate_id: int,
                       ego_xy: np.ndarray, ego_heading: np.ndarray,
                       ego_speed: np.ndarray, ego_footprint: Footprint,
                       forecasts: list[AgentForecast],
                       model: HarmModel, dt: float,
                       ego_class: str = "car",
                       aggregation: str = "max") -> RiskProfile:
    """Score one candidate against every forecast road user.

    The forecasts are truncated to the candidate's step count; per-step risks
    are probability times harm, aggregated per agent over the horizon.
    """
    n_steps = len(ego_speed)
    agent_ids, agent_classes = [], []
    ego_risks, imposed_risks = [], []
    ego_sum = 0.0
    third_sum = 0.0
    vru_sum = 0.0
    for fc in forecasts:
        if len(fc.prediction) < n_steps:
            raise RiskError(
                f"forecast for agent '{fc.agent.id}' is shorter than the candidate")
        pred = fc.prediction.truncated(n_steps)
        p = collision_probability(ego_xy, ego_heading, ego_footprint,
                                  pred, fc.agent.shape)
        rel_speed = _relative_speeds(ego_speed, ego_heading,
                                     AgentForecast(fc.agent, fc.anchor, pred), dt)
        r_ego = np.empty(n_steps)
        r_other = np.empty(n_steps)
        for t in range(n_steps):
            h_ego, h_other = harm(ego_class, fc.agent.cls, float(rel_speed[t]), model)
            r_ego[t] = risk(float(p[t]), h_ego)
            r_other[t] = risk(float(p[t]), h_other)
        agg_ego = _aggregate(r_ego, aggregation)
        agg_other = _aggregate(r_other, aggregation)
        agent_ids.append(fc.agent.id)
        agent_classes.append(fc.agent.cls)
        ego_risks.append(agg_ego)
        imposed_risks.append(agg_other)
        ego_sum += agg_ego
        if fc.agent.cls in VRU_CLASSES:
            vru_sum += agg_other
        else:
            third_sum += agg_other
    return RiskProfile(
        candidate_id=candidate_id,
        agent_ids=agent_ids,
        agent_classes=agent_classes,
        ego_risks=ego_risks,
        imposed_risks=imposed_risks,
        attribution={"ego_av": ego_sum, "third_party": third_sum, "vru": vru_sum},
    )
