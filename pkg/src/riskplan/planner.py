"""Candidate trajectory sampling and the risk-aware cost stack.

Candidates are quintic lateral offsets paired with quartic speed profiles in
the Frenet frame of the reference path, one per (terminal offset, terminal
speed, horizon) combination.  Each feasible candidate is scored with a
comfort baseline cost plus the utility-principle risk cost, and the
minimum-total-cost candidate wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
from matplotlib.path import Path as MplPath

from .frenet import ReferencePath
from .risk import RiskProfile
from .scenario import AgentState, wrap_angle

# speed floor for curvature estimation on nearly stopped poses
_CURVATURE_SPEED_FLOOR = 0.1


class PlannerError(Exception):
    pass


class NoFeasibleTrajectory(PlannerError):
    """Every sampled candidate violated a constraint."""


@dataclass(frozen=True)
class PlannerConfig:
    lateral_offsets: tuple[float, ...] = (-3.0, -1.5, 0.0, 1.5, 3.0)
    speed_factors: tuple[float, ...] = (0.8, 1.0, 1.2)  # x current speed
    terminal_speeds: tuple[float, ...] | None = None    # absolute, overrides factors
    horizons: tuple[float, ...] = (2.0, 3.0)
    w_jerk: float = 0.004
    w_time: float = 0.1
    w_lat: float = 0.002
    w_vel: float = 0.02
    a_max: float = 4.0
    v_max: float = 15.0
    kappa_max: float = 0.5
    omega_o: float = 1.0
    omega_u: float = 1.0
    j_mean_mode: str = "paper-literal"  # or "cohort-mean"
    utility_rule: str = "equation"      # or "prose"
    risk_aggregation: str = "max"       # or "survival"
    v_target: float | None = None       # None: ego speed at planning time

    def __post_init__(self):
        if self.omega_o < 0 or self.omega_u < 0 or (self.omega_o == 0 and self.omega_u == 0):
            raise PlannerError("omega_o and omega_u must be >= 0 and not both zero")
        if not self.lateral_offsets or not self.horizons:
            raise PlannerError("sampling sets must be nonempty")
        if self.terminal_speeds is None and not self.speed_factors:
            raise PlannerError("sampling sets must be nonempty")
        if self.j_mean_mode not in ("paper-literal", "cohort-mean"):
            raise PlannerError(f"unknown j_mean_mode '{self.j_mean_mode}'")
        if self.utility_rule not in ("equation", "prose"):
            raise PlannerError(f"unknown utility_rule '{self.utility_rule}'")


class QuinticPolynomial:
    """x(t) = a0 + a1 t + ... + a5 t^5 matching position, velocity, and
    acceleration at both ends."""

    def __init__(self, xs, vxs, axs, xe, vxe, axe, T):
        self.a0 = xs
        self.a1 = vxs
        self.a2 = axs / 2.0
        A = np.array([
            [T ** 3, T ** 4, T ** 5],
            [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
            [6 * T, 12 * T ** 2, 20 * T ** 3],
        ])
        b = np.array([
            xe - self.a0 - self.a1 * T - self.a2 * T ** 2,
            vxe - self.a1 - 2 * self.a2 * T,
            axe - 2 * self.a2,
        ])
        self.a3, self.a4, self.a5 = np.linalg.solve(A, b)

    def value(self, t):
        return (self.a0 + self.a1 * t + self.a2 * t ** 2
                + self.a3 * t ** 3 + self.a4 * t ** 4 + self.a5 * t ** 5)

    def first_derivative(self, t):
        return (self.a1 + 2 * self.a2 * t + 3 * self.a3 * t ** 2
                + 4 * self.a4 * t ** 3 + 5 * self.a5 * t ** 4)

    def second_derivative(self, t):
        return (2 * self.a2 + 6 * self.a3 * t + 12 * self.a4 * t ** 2
                + 20 * self.a5 * t ** 3)


class QuarticPolynomial:
    """x(t) with free terminal position: matches start position/velocity/
    acceleration and terminal velocity/acceleration."""

    def __init__(self, xs, vxs, axs, vxe, axe, T):
        self.a0 = xs
        self.a1 = vxs
        self.a2 = axs / 2.0
        A = np.array([
            [3 * T ** 2, 4 * T ** 3],
            [6 * T, 12 * T ** 2],
        ])
        b = np.array([
            vxe - self.a1 - 2 * self.a2 * T,
            axe - 2 * self.a2,
        ])
        self.a3, self.a4 = np.linalg.solve(A, b)

    def value(self, t):
        return (self.a0 + self.a1 * t + self.a2 * t ** 2
                + self.a3 * t ** 3 + self.a4 * t ** 4)

    def first_derivative(self, t):
        return self.a1 + 2 * self.a2 * t + 3 * self.a3 * t ** 2 + 4 * self.a4 * t ** 3

    def second_derivative(self, t):
        return 2 * self.a2 + 6 * self.a3 * t + 12 * self.a4 * t ** 2


@dataclass
class CandidateTrajectory:
    id: int
    d_target: float
    v_target: float
    horizon: float
    x: np.ndarray        # per step 1..N at dt spacing
    y: np.ndarray
    heading: np.ndarray
    v: np.ndarray
    a: np.ndarray
    jerk: np.ndarray
    curvature: np.ndarray
    feasible: bool = True
    violations: list[str] = field(default_factory=list)
    lat_poly: QuinticPolynomial | None = None
    lon_poly: QuarticPolynomial | None = None

    def __len__(self) -> int:
        return len(self.x)

    def pose_at(self, step: int) -> AgentState:
        i = step - 1
        return AgentState(float(self.x[i]), float(self.y[i]),
                          float(self.v[i]), float(self.heading[i]))


@dataclass(frozen=True)
class CostBreakdown:
    j_origin: float
    j: float
    j_mean: float
    j_utility: float
    j_risk: float
    omega_o: float
    omega_u: float


@dataclass(frozen=True)
class FrenetSeed:
    """Planned Frenet derivatives carried across replanning steps.

    Re-seeding the polynomials from the previous plan keeps maneuvers
    committed; deriving rates from the executed pose alone would reset the
    lateral acceleration to zero every step.
    """
    s_rate: float
    s_acc: float
    d_rate: float
    d_acc: float


def sample_candidates(ego: AgentState, path: ReferencePath,
                      cfg: PlannerConfig, dt: float,
                      seed: FrenetSeed | None = None) -> list[CandidateTrajectory]:
    """Enumerate the (offset x speed x horizon) trajectory lattice.

    For each combination, the lateral offset follows a quintic settling to
    the target offset with zero terminal rate, and the longitudinal motion
    follows a quartic speed profile reaching the terminal speed.  ``seed``
    supplies the current Frenet rates and accelerations from the previously
    executed plan; without one they are estimated from the pose (zero
    accelerations).
    """
    s0, d0 = path.project(ego.x, ego.y)
    if seed is not None:
        v_lon = seed.s_rate
        a_lon = seed.s_acc
        d_rate = seed.d_rate
        d_acc = seed.d_acc
    else:
        path_heading = path.heading_at(s0)
        delta = wrap_angle(ego.heading - path_heading)
        v_lon = ego.v * math.cos(delta)
        d_rate = ego.v * math.sin(delta)
        a_lon = 0.0
        d_acc = 0.0

    if cfg.terminal_speeds is not None:
        speeds = [min(max(v, 0.0), cfg.v_max) for v in cfg.terminal_speeds]
    else:
        speeds = [min(max(f * ego.v, 0.0), cfg.v_max) for f in cfg.speed_factors]

    candidates = []
    for cand_id, (d_t, v_t, horizon) in enumerate(
            product(cfg.lateral_offsets, speeds, cfg.horizons)):
        n_steps = int(round(horizon / dt))
        lat = QuinticPolynomial(d0, d_rate, d_acc, d_t, 0.0, 0.0, horizon)
        lon = QuarticPolynomial(s0, v_lon, a_lon, v_t, 0.0, horizon)

        # evaluate on steps 0..N so end derivatives difference cleanly,
        # then keep steps 1..N
        t = np.arange(n_steps + 1) * dt
        d = lat.value(t)
        dd = lat.first_derivative(t)
        s = lon.value(t)
        ds = lon.first_derivative(t)

        xs = np.empty(n_steps + 1)
        ys = np.empty(n_steps + 1)
        headings = np.empty(n_steps + 1)
        for k in range(n_steps + 1):
            px, py, ph = path.pose_at(float(s[k]), float(d[k]))
            xs[k] = px
            ys[k] = py
            if ds[k] != 0.0 or dd[k] != 0.0:
                headings[k] = wrap_angle(ph + math.atan2(dd[k], ds[k]))
            else:
                headings[k] = ph
        v = np.hypot(ds, dd)
        # a is the speed derivative (longitudinal comfort/limit); jerk is the
        # full vector jerk so lateral maneuvers carry their comfort cost
        a = np.gradient(v, dt)
        vx = np.gradient(xs, dt)
        vy = np.gradient(ys, dt)
        jx = np.gradient(np.gradient(vx, dt), dt)
        jy = np.gradient(np.gradient(vy, dt), dt)
        jerk = np.hypot(jx, jy)
        kappa = np.abs(np.gradient(np.unwrap(headings), dt)) \
            / np.maximum(v, _CURVATURE_SPEED_FLOOR)

        candidates.append(CandidateTrajectory(
            id=cand_id, d_target=d_t, v_target=v_t, horizon=horizon,
            x=xs[1:], y=ys[1:], heading=headings[1:], v=v[1:],
            a=a[1:], jerk=jerk[1:], curvature=kappa[1:],
            lat_poly=lat, lon_poly=lon,
        ))
    return candidates


def lanelet_paths(lanelet_polygons) -> list[MplPath]:
    return [MplPath(np.asarray(poly, dtype=float)) for poly in lanelet_polygons]


def feasibility_check(candidate: CandidateTrajectory, cfg: PlannerConfig,
                      lanelet_polygons=()) -> list[str]:
    """Constraint violations for one candidate; empty means feasible.

    ``lanelet_polygons`` are closed boundary point lists; when provided,
    every pose center must fall inside their union (boundary inclusive).
    """
    violations = []
    if np.any(np.abs(candidate.a) > cfg.a_max):
        violations.append("accel")
    if np.any(candidate.v > cfg.v_max) or np.any(candidate.v < 0):
        violations.append("speed")
    if np.any(candidate.curvature > cfg.kappa_max):
        violations.append("curvature")
    if lanelet_polygons:
        points = np.stack([candidate.x, candidate.y], axis=1)
        inside = np.zeros(len(points), dtype=bool)
        for poly in lanelet_polygons:
            mpl_path = poly if isinstance(poly, MplPath) else MplPath(np.asarray(poly, float))
            # radius of either sign dilates depending on winding; the union
            # makes the containment test boundary-inclusive
            inside |= mpl_path.contains_points(points, radius=1e-9)
            inside |= mpl_path.contains_points(points, radius=-1e-9)
            if inside.all():
                break
        if not inside.all():
            violations.append("bounds")
    return violations


def cost_origin(candidate: CandidateTrajectory, cfg: PlannerConfig, dt: float,
                v_target: float) -> float:
    """Comfort baseline: squared jerk, duration, offset, and speed deviation."""
    jerk_term = float(np.sum(candidate.jerk ** 2) * dt)
    return (cfg.w_jerk * jerk_term
            + cfg.w_time * candidate.horizon
            + cfg.w_lat * candidate.d_target ** 2
            + cfg.w_vel * (candidate.v_target - v_target) ** 2)


def cost_J(profile: RiskProfile) -> float:
    """Actual utility cost: all ego risks plus all imposed risks."""
    return sum(profile.ego_risks) + sum(profile.imposed_risks)


def cost_J_mean(profile: RiskProfile | None = None,
                cohort: list[float] | None = None,
                mode: str = "paper-literal") -> float:
    """Utility cost reference value.

    paper-literal: the profile's total risk divided by the ego risk vector
    length.  cohort-mean: the mean utility cost over the feasible candidate
    cohort.
    """
    if mode == "paper-literal":
        if profile is None:
            raise PlannerError("paper-literal j_mean needs a risk profile")
        total = cost_J(profile)
        n = len(profile.ego_risks)
        if n == 0:
            if total != 0.0:
                raise PlannerError("paper-literal j_mean undefined: empty ego risk "
                                   "vector with nonzero risk sums")
            return 0.0
        return total / n
    if mode == "cohort-mean":
        if not cohort:
            raise PlannerError("cohort-mean j_mean needs a nonempty cohort")
        return sum(cohort) / len(cohort)
    raise PlannerError(f"unknown j_mean_mode '{mode}'")


def cost_utility(j: float, j_mean: float, rule: str = "equation") -> float:
    """Piecewise utility cost: zero when the actual cost is within the
    reference limit.

    The displayed equation returns J above the limit; the prose variant
    (rule="prose") returns the limit itself instead.
    """
    if j <= j_mean:
        return 0.0
    if rule == "equation":
        return j
    if rule == "prose":
        return j_mean
    raise PlannerError(f"unknown utility_rule '{rule}'")


def cost_total(j_origin: float, j_utility: float, cfg: PlannerConfig) -> float:
    return cfg.omega_o * j_origin + cfg.omega_u * j_utility


def score_candidates(candidates: list[CandidateTrajectory],
                     profiles: dict[int, RiskProfile],
                     cfg: PlannerConfig, dt: float,
                     v_target: float) -> dict[int, CostBreakdown]:
    """CostBreakdown per feasible candidate (keyed by candidate id)."""
    feasible = [c for c in candidates if c.feasible]
    js = {c.id: cost_J(profiles[c.id]) for c in feasible}
    cohort = [js[c.id] for c in feasible]
    out = {}
    for cand in feasible:
        j = js[cand.id]
        if cfg.j_mean_mode == "cohort-mean":
            j_mean = cost_J_mean(cohort=cohort, mode="cohort-mean")
        else:
            j_mean = cost_J_mean(profile=profiles[cand.id], mode="paper-literal")
        j_utility = cost_utility(j, j_mean, cfg.utility_rule)
        j_origin = cost_origin(cand, cfg, dt, v_target)
        out[cand.id] = CostBreakdown(
            j_origin=j_origin, j=j, j_mean=j_mean, j_utility=j_utility,
            j_risk=cost_total(j_origin, j_utility, cfg),
            omega_o=cfg.omega_o, omega_u=cfg.omega_u,
        )
    return out


def select_trajectory(scored: list[tuple[CandidateTrajectory, CostBreakdown]]
                      ) -> tuple[CandidateTrajectory, list[tuple[CandidateTrajectory, CostBreakdown]]]:
    """Minimum-total-cost feasible candidate plus the full feasible ranking.

    Ties break on lower baseline cost, then lower candidate id; infeasible
    candidates never enter.
    """
    feasible = [(c, b) for c, b in scored if c.feasible]
    if not feasible:
        raise NoFeasibleTrajectory("no feasible trajectory among the candidates")
    ranking = sorted(feasible, key=lambda cb: (cb[1].j_risk, cb[1].j_origin, cb[0].id))
    return ranking[0][0], ranking
