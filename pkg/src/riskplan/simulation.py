"""Closed-loop scenario execution and suite-level metrics.

Each step the ego forecasts every recorded agent, samples and scores a fresh
candidate set, and executes the first step of the winner (receding horizon).
Agents replay their recordings open loop.  Ego collisions end the run; when
no candidate is feasible the ego brakes hard along its heading and tries
again next step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frenet import PathProjectionError, ReferencePath
from .planner import (
    CandidateTrajectory,
    CostBreakdown,
    FrenetSeed,
    NoFeasibleTrajectory,
    PlannerConfig,
    feasibility_check,
    lanelet_paths,
    sample_candidates,
    score_candidates,
    select_trajectory,
)
from .prediction import (
    NetworkParams,
    TrackHistory,
    constant_velocity_predict,
    predict,
)
from .risk import AgentForecast, HarmModel, build_risk_profile, harm
from .scenario import (
    Agent,
    AgentState,
    Footprint,
    Scenario,
    VRU_CLASSES,
    agent_state_at,
)


@dataclass(frozen=True)
class CollisionEvent:
    step: int
    agent_id: str
    agent_cls: str
    relative_speed: float
    harm_to_ego: float
    harm_to_other: float


@dataclass(frozen=True)
class PlanTrace:
    step: int
    candidate_id: int | None      # None for emergency-stop steps
    breakdown: CostBreakdown | None
    reason: str                   # "planned" or "emergency"


@dataclass
class SimResult:
    scenario_id: str
    completed: bool
    steps_executed: int
    collision_events: list[CollisionEvent]
    cost_trace: list[PlanTrace]
    ego_states: list[AgentState]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "completed": self.completed,
            "steps_executed": self.steps_executed,
            "collision_events": [
                {"step": e.step, "agent_id": e.agent_id, "agent_cls": e.agent_cls,
                 "relative_speed": e.relative_speed,
                 "harm_to_ego": e.harm_to_ego, "harm_to_other": e.harm_to_other}
                for e in self.collision_events
            ],
            "cost_trace": [
                {"step": t.step, "reason": t.reason, "candidate_id": t.candidate_id,
                 **({"j_origin": t.breakdown.j_origin, "j": t.breakdown.j,
                     "j_mean": t.breakdown.j_mean, "j_utility": t.breakdown.j_utility,
                     "j_risk": t.breakdown.j_risk, "omega_o": t.breakdown.omega_o,
                     "omega_u": t.breakdown.omega_u} if t.breakdown else {})}
                for t in self.cost_trace
            ],
        }


@dataclass(frozen=True)
class SuiteMetrics:
    completed_rate: float
    total_harm: float
    harm_ego: float
    harm_third_party: float
    harm_vru: float

    def __post_init__(self):
        group_sum = self.harm_ego + self.harm_third_party + self.harm_vru
        if abs(self.total_harm - group_sum) > 1e-9:
            raise AssertionError("harm groups do not add up to the total")


def _corners(x: float, y: float, heading: float, fp: Footprint) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * fp.length, 0.5 * fp.width
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def detect_collision(ego_state: AgentState, ego_fp: Footprint,
                     agent_state: AgentState, agent_fp: Footprint) -> bool:
    """Oriented-rectangle overlap via the separating-axis test.

    Touching edges count as overlap (closed intersection).
    """
    a = _corners(ego_state.x, ego_state.y, ego_state.heading, ego_fp)
    b = _corners(agent_state.x, agent_state.y, agent_state.heading, agent_fp)
    for heading in (ego_state.heading, agent_state.heading):
        for axis in (np.array([math.cos(heading), math.sin(heading)]),
                     np.array([-math.sin(heading), math.cos(heading)])):
            pa = a @ axis
            pb = b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def collision_relative_speed(ego_state: AgentState, agent_state: AgentState) -> float:
    dvx = ego_state.v * math.cos(ego_state.heading) \
        - agent_state.v * math.cos(agent_state.heading)
    dvy = ego_state.v * math.sin(ego_state.heading) \
        - agent_state.v * math.sin(agent_state.heading)
    return math.hypot(dvx, dvy)


def score_collision(ego_state: AgentState, agent_state: AgentState,
                    agent_cls: str, model: HarmModel) -> tuple[float, float, float]:
    """(relative speed, harm to ego, harm to agent) at the moment of impact.

    Relative speed is the magnitude of the velocity-vector difference.
    """
    rel = collision_relative_speed(ego_state, agent_state)
    harm_to_ego, harm_to_other = harm("car", agent_cls, rel, model)
    return rel, harm_to_ego, harm_to_other


class ConstantVelocityPredictor:
    """Baseline forecaster: straight-line extrapolation per agent."""

    def __init__(self, h_p: int = 8, h_f: int = 12,
                 sigma0: float = 0.35, sigma_growth: float = 0.15):
        self.h_p = h_p
        self.h_f = h_f
        self.sigma0 = sigma0
        self.sigma_growth = sigma_growth

    def forecast(self, agents: tuple[Agent, ...], step: int, dt: float,
                 ego_history: TrackHistory | None = None) -> list[AgentForecast]:
        out = []
        for agent in agents:
            history = TrackHistory.from_agent(agent, step, dt, self.h_p)
            pred = constant_velocity_predict(history, self.h_f, dt,
                                             self.sigma0, self.sigma_growth)
            out.append(AgentForecast(agent, history.last, pred))
        return out


class NetworkPredictor:
    """Attention-LSTM forecaster; every other road user (and the ego) is a
    neighbor of the agent being predicted."""

    def __init__(self, params: NetworkParams):
        self.params = params
        self.h_p = params.config.h_p
        self.h_f = params.config.h_f

    def forecast(self, agents: tuple[Agent, ...], step: int, dt: float,
                 ego_history: TrackHistory | None = None) -> list[AgentForecast]:
        histories = [TrackHistory.from_agent(a, step, dt, self.h_p) for a in agents]
        out = []
        for i, agent in enumerate(agents):
            neighbors = [h for j, h in enumerate(histories) if j != i]
            if ego_history is not None:
                neighbors.append(ego_history)
            pred = predict(self.params, histories[i], neighbors)
            out.append(AgentForecast(agent, histories[i].last, pred))
        return out


def _ego_history(ego_states: list[AgentState], h_p: int) -> TrackHistory:
    states = ego_states[-h_p:]
    pad = h_p - len(states)
    mask = [False] * pad + [True] * len(states)
    states = [states[0]] * pad + states
    return TrackHistory("ego", tuple(states), tuple(mask))


def _brake_step(ego: AgentState, a_max: float, dt: float) -> AgentState:
    v_next = max(0.0, ego.v - a_max * dt)
    dist = 0.5 * (ego.v + v_next) * dt
    return AgentState(ego.x + dist * math.cos(ego.heading),
                      ego.y + dist * math.sin(ego.heading),
                      v_next, ego.heading)


def run_scenario(scenario: Scenario, predictor, planner_cfg: PlannerConfig,
                 harm_model: HarmModel, seed: int = 0,
                 ego_replay: Agent | None = None,
                 candidate_log: list | None = None) -> SimResult:
    """Closed-loop run of one scenario; deterministic given its inputs.

    ``ego_replay`` substitutes a recorded track for the planner (used to
    check replay fidelity).  ``candidate_log``, when given, collects one row
    per step per candidate for the planner log CSV.
    """
    dt = scenario.time_step
    ref = ReferencePath(scenario.reference_path)
    lanelet_polys = lanelet_paths([l.polygon() for l in scenario.lanelets])
    cfg = planner_cfg
    if cfg.v_target is None:
        cfg = replace(cfg, v_target=scenario.ego_start.v)

    ego = scenario.ego_start
    ego_states = [ego]
    events: list[CollisionEvent] = []
    trace: list[PlanTrace] = []
    scored_agents: set[str] = set()
    completed = False
    goal = scenario.goal
    step = 0
    plan_seed: FrenetSeed | None = None

    def in_goal(state: AgentState) -> bool:
        return math.hypot(state.x - goal.center[0],
                          state.y - goal.center[1]) <= goal.radius

    if in_goal(ego):
        return SimResult(scenario.id, True, 0, [], [], ego_states)

    while step < goal.deadline_step:
        if ego_replay is not None:
            ego_next = agent_state_at(ego_replay, step + 1, dt)
            trace.append(PlanTrace(step, None, None, "replay"))
        else:
            ego_hist = _ego_history(ego_states, getattr(predictor, "h_p", 8))
            forecasts = predictor.forecast(scenario.agents, step, dt,
                                           ego_history=ego_hist)
            try:
                candidates = sample_candidates(ego, ref, cfg, dt, seed=plan_seed)
                for cand in candidates:
                    cand.violations = feasibility_check(cand, cfg, lanelet_polys)
                    cand.feasible = not cand.violations
                profiles = {
                    cand.id: build_risk_profile(
                        cand.id, np.stack([cand.x, cand.y], axis=1), cand.heading,
                        cand.v, scenario.ego_shape, forecasts, harm_model, dt,
                        aggregation=cfg.risk_aggregation)
                    for cand in candidates if cand.feasible
                }
                breakdowns = score_candidates(candidates, profiles, cfg, dt,
                                              cfg.v_target)
                chosen, _ = select_trajectory(
                    [(c, breakdowns[c.id]) for c in candidates if c.feasible])
                if candidate_log is not None:
                    for cand in candidates:
                        bd = breakdowns.get(cand.id)
                        candidate_log.append((step, cand, bd, cand.id == chosen.id))
                ego_next = chosen.pose_at(1)
                plan_seed = FrenetSeed(
                    s_rate=chosen.lon_poly.first_derivative(dt),
                    s_acc=chosen.lon_poly.second_derivative(dt),
                    d_rate=chosen.lat_poly.first_derivative(dt),
                    d_acc=chosen.lat_poly.second_derivative(dt))
                trace.append(PlanTrace(step, chosen.id, breakdowns[chosen.id],
                                       "planned"))
            except (NoFeasibleTrajectory, PathProjectionError):
                ego_next = _brake_step(ego, cfg.a_max, dt)
                plan_seed = None
                trace.append(PlanTrace(step, None, None, "emergency"))

        step += 1
        ego = ego_next
        ego_states.append(ego)

        hit = False
        for agent in scenario.agents:
            if agent.id in scored_agents:
                continue  # a collision ends that pairing
            agent_state = agent_state_at(agent, step, dt)
            if detect_collision(ego, scenario.ego_shape, agent_state, agent.shape):
                rel, h_ego, h_other = score_collision(ego, agent_state,
                                                      agent.cls, harm_model)
                events.append(CollisionEvent(step, agent.id, agent.cls,
                                             rel, h_ego, h_other))
                scored_agents.add(agent.id)
                hit = True
        if hit and ego_replay is None:
            break
        if in_goal(ego):
            completed = not events
            break

    ego_collided = bool(events)
    completed = completed and not ego_collided
    return SimResult(scenario.id, completed, step, events, trace, ego_states)


def suite_metrics(results: list[SimResult]) -> SuiteMetrics:
    """Aggregate one variant's per-scenario results into the metrics table."""
    if not results:
        raise ValueError("cannot aggregate an empty result set")
    n_completed = sum(1 for r in results if r.completed)
    harm_ego = 0.0
    harm_third = 0.0
    harm_vru = 0.0
    total = 0.0
    for result in results:
        for event in result.collision_events:
            harm_ego += event.harm_to_ego
            if event.agent_cls in VRU_CLASSES:
                harm_vru += event.harm_to_other
            else:
                harm_third += event.harm_to_other
            total += event.harm_to_ego + event.harm_to_other
    return SuiteMetrics(
        completed_rate=100.0 * n_completed / len(results),
        total_harm=total,
        harm_ego=harm_ego,
        harm_third_party=harm_third,
        harm_vru=harm_vru,
    )
