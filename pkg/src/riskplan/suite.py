"""Seeded synthetic scenario suite and training fixtures.

Scenarios live on a straight two-lane road segment along +x.  The mix blends
benign runs (free road, parallel traffic) with conflicts timed against the
ego's nominal arrival: crossing pedestrians and cyclists, slow lead vehicles,
and oncoming cars drifting into the ego lane.  A comfort-only planner drives
through the conflicts at speed; a risk-aware one has room to slow down or
swerve, which is what the suite is built to measure.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .scenario import (
    Agent,
    AgentState,
    Footprint,
    GoalRegion,
    Lanelet,
    Scenario,
    wrap_angle,
    write_scenario,
)

DT = 0.25
ROAD_HALF_WIDTH = 4.5
EGO_SPEED = 11.0
GOAL_X = 90.0
DEADLINE_STEPS = 110
DURATION_STEPS = 120

CAR_SHAPE = Footprint(4.5, 1.8)
TRUCK_SHAPE = Footprint(8.0, 2.4)
PEDESTRIAN_SHAPE = Footprint(0.6, 0.6)
CYCLIST_SHAPE = Footprint(1.8, 0.6)

_SHAPES = {"car": CAR_SHAPE, "truck": TRUCK_SHAPE,
           "pedestrian": PEDESTRIAN_SHAPE, "cyclist": CYCLIST_SHAPE}


def _straight_track(agent_id: str, cls: str, start: tuple[float, float],
                    heading: float, speed: float,
                    n_steps: int = DURATION_STEPS) -> Agent:
    track = []
    x, y = start
    vx = speed * math.cos(heading)
    vy = speed * math.sin(heading)
    for k in range(n_steps + 1):
        t = k * DT
        track.append((k, AgentState(x + vx * t, y + vy * t, speed,
                                    wrap_angle(heading))))
    return Agent(agent_id, cls, _SHAPES[cls], tuple(track))


def _drift_track(agent_id: str, start_x: float, speed: float, y_from: float,
                 y_to: float, drift_start_t: float, drift_time: float,
                 n_steps: int = DURATION_STEPS) -> Agent:
    """Oncoming car (moving -x) that slides laterally during a time window.

    Recorded speed and heading follow the actual per-step displacement so
    forecasts extrapolate the drift.
    """
    xs, ys = [], []
    for k in range(n_steps + 1):
        t = k * DT
        w = min(max((t - drift_start_t) / drift_time, 0.0), 1.0)
        # smoothstep keeps the recorded motion differentiable
        blend = w * w * (3.0 - 2.0 * w)
        xs.append(start_x - speed * t)
        ys.append(y_from + (y_to - y_from) * blend)
    track = []
    for k in range(n_steps + 1):
        j = min(k + 1, n_steps)
        i = j - 1
        vx = (xs[j] - xs[i]) / DT
        vy = (ys[j] - ys[i]) / DT
        track.append((k, AgentState(xs[k], ys[k], math.hypot(vx, vy),
                                    wrap_angle(math.atan2(vy, vx)))))
    return Agent(agent_id, "car", CAR_SHAPE, tuple(track))


def _base_scenario(scenario_id: str, agents: list[Agent],
                   ego_speed: float = EGO_SPEED) -> Scenario:
    lane = Lanelet(
        id="road",
        left=((-30.0, ROAD_HALF_WIDTH), (180.0, ROAD_HALF_WIDTH)),
        right=((-30.0, -ROAD_HALF_WIDTH), (180.0, -ROAD_HALF_WIDTH)),
    )
    return Scenario(
        id=scenario_id,
        time_step=DT,
        duration_steps=DURATION_STEPS,
        lanelets=(lane,),
        agents=tuple(agents),
        ego_start=AgentState(0.0, 0.0, ego_speed, 0.0),
        ego_shape=CAR_SHAPE,
        goal=GoalRegion(center=(GOAL_X, 0.0), radius=4.0,
                        deadline_step=DEADLINE_STEPS),
        reference_path=((-30.0, 0.0), (180.0, 0.0)),
    )


def make_free_road(scenario_id: str, rng: np.random.Generator) -> Scenario:
    agents = []
    if rng.random() < 0.5:
        # same-direction car in the other lane, no conflict
        agents.append(_straight_track("far_car", "car",
                                      (float(rng.uniform(20, 60)), 3.2),
                                      0.0, float(rng.uniform(7.0, 10.0))))
    return _base_scenario(scenario_id, agents)


def make_parallel_traffic(scenario_id: str, rng: np.random.Generator) -> Scenario:
    cls = "truck" if rng.random() < 0.3 else "car"
    oncoming = _straight_track(
        "oncoming", cls, (float(rng.uniform(110, 150)), 3.2),
        math.pi, float(rng.uniform(7.0, 11.0)))
    return _base_scenario(scenario_id, [oncoming])


def make_crossing(scenario_id: str, rng: np.random.Generator,
                  cls: str) -> Scenario:
    """A VRU crossing the ego lane, timed to meet the ego's nominal arrival."""
    speed = float(rng.uniform(1.2, 1.8)) if cls == "pedestrian" \
        else float(rng.uniform(2.2, 3.2))
    x_cross = float(rng.uniform(45.0, 70.0))
    t_meet = x_cross / EGO_SPEED + float(rng.uniform(-0.2, 0.2))
    side = 1.0 if (cls == "pedestrian" and rng.random() < 0.5) else -1.0
    y0 = -side * speed * t_meet
    heading = side * math.pi / 2.0
    agent = _straight_track("crosser", cls, (x_cross, y0), heading, speed)
    return _base_scenario(scenario_id, [agent])


def make_slow_lead(scenario_id: str, rng: np.random.Generator) -> Scenario:
    """A stalled or crawling truck blocking the ego lane."""
    lead_speed = float(rng.uniform(0.5, 1.5))
    gap = float(rng.uniform(30.0, 42.0))
    lead = _straight_track("lead", "truck", (gap, 0.0), 0.0, lead_speed)
    agents = [lead]
    if rng.random() < 0.4:
        agents.append(_straight_track(
            "oncoming", "car", (float(rng.uniform(100, 140)), 3.2),
            math.pi, float(rng.uniform(7.0, 10.0))))
    return _base_scenario(scenario_id, agents)


def make_oncoming_drift(scenario_id: str, rng: np.random.Generator) -> Scenario:
    speed = float(rng.uniform(6.0, 9.0))
    x_meet = float(rng.uniform(40.0, 60.0))
    t_meet = x_meet / EGO_SPEED
    start_x = x_meet + speed * t_meet
    drifter = _drift_track(
        "drifter", start_x, speed, y_from=3.2,
        y_to=float(rng.uniform(-0.5, 0.5)),
        drift_start_t=max(0.0, t_meet - float(rng.uniform(4.5, 6.0))),
        drift_time=float(rng.uniform(3.5, 4.5)))
    return _base_scenario(scenario_id, [drifter])


_ARCHETYPES = (
    ("free", make_free_road, 9),
    ("parallel", make_parallel_traffic, 6),
    ("ped", lambda sid, rng: make_crossing(sid, rng, "pedestrian"), 12),
    ("cyclist", lambda sid, rng: make_crossing(sid, rng, "cyclist"), 8),
    ("lead", make_slow_lead, 10),
    ("drift", make_oncoming_drift, 5),
)


def build_suite(n: int = 50, seed: int = 0) -> list[Scenario]:
    """The bundled synthetic suite: n scenarios drawn from the archetype mix."""
    plan = []
    for name, factory, count in _ARCHETYPES:
        plan.extend((name, factory) for _ in range(count))
    # repeat the mix if more scenarios are requested than one mix provides
    while len(plan) < n:
        plan.extend(plan[:n - len(plan)])
    plan = plan[:n]
    scenarios = []
    for i, (name, factory) in enumerate(plan):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7, i]))
        scenarios.append(factory(f"{name}_{i:03d}", rng))
    return scenarios


def write_suite(out_dir, n: int = 50, seed: int = 0) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for scenario in build_suite(n, seed):
        path = out / f"{scenario.id}.json"
        write_scenario(scenario, path)
        paths.append(path)
    return paths


def build_training_scenario(seed: int = 0) -> Scenario:
    """One scenario with four agents on varied tracks, for predictor training."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    n_steps = 40
    agents = []

    specs = [
        ("car_straight", "car", (5.0, 3.2), 7.0, 0.0, 0.0),
        ("car_weave", "car", (18.0, -3.2), 6.0, 1.2, 0.5),
        ("cyclist_diag", "cyclist", (10.0, -6.0), 3.5, 0.0, 0.35),
        ("ped_walk", "pedestrian", (30.0, -4.0), 1.4, 0.0, 1.3),
    ]
    for agent_id, cls, (x0, y0), speed, weave_amp, base_heading in specs:
        track = []
        x, y = x0, y0
        for k in range(n_steps + 1):
            t = k * DT
            heading = base_heading + weave_amp * 0.3 * math.sin(0.5 * t)
            jitter = float(rng.normal(0.0, 0.02))
            vx = speed * math.cos(heading + jitter)
            vy = speed * math.sin(heading + jitter)
            track.append((k, AgentState(x, y, speed, wrap_angle(heading + jitter))))
            x += vx * DT
            y += vy * DT
        agents.append(Agent(agent_id, cls, _SHAPES[cls], tuple(track)))

    lane = Lanelet(
        id="road",
        left=((-30.0, 8.0), (180.0, 8.0)),
        right=((-30.0, -8.0), (180.0, -8.0)),
    )
    return Scenario(
        id=f"train_toy_{seed}",
        time_step=DT,
        duration_steps=n_steps,
        lanelets=(lane,),
        agents=tuple(agents),
        ego_start=AgentState(0.0, 0.0, EGO_SPEED, 0.0),
        ego_shape=CAR_SHAPE,
        goal=GoalRegion(center=(GOAL_X, 0.0), radius=4.0, deadline_step=n_steps),
        reference_path=((-30.0, 0.0), (180.0, 0.0)),
    )


def toy_training_samples(scenario: Scenario, h_p: int, h_f: int,
                         anchors: range = range(8, 16)) -> list[tuple[str, int]]:
    """(agent id, anchor step) pairs: every agent at every anchor step."""
    return [(agent.id, anchor) for agent in scenario.agents for anchor in anchors]
