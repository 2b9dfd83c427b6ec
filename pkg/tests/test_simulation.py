import json
import math

import numpy as np
import pytest

from riskplan.planner import PlannerConfig
from riskplan.risk import HarmModel, logistic
from riskplan.scenario import (
    Agent,
    AgentState,
    Footprint,
    GoalRegion,
    Lanelet,
    Scenario,
    agent_state_at,
)
from riskplan.simulation import (
    ConstantVelocityPredictor,
    SimResult,
    SuiteMetrics,
    collision_relative_speed,
    detect_collision,
    run_scenario,
    score_collision,
    suite_metrics,
)

CAR = Footprint(4.5, 1.8)


def state(x, y, v=0.0, heading=0.0):
    return AgentState(x, y, v, heading)


def straight_agent(agent_id, cls, start, heading, speed, n_steps, dt, shape):
    track = []
    for k in range(n_steps + 1):
        t = k * dt
        track.append((k, AgentState(start[0] + speed * math.cos(heading) * t,
                                    start[1] + speed * math.sin(heading) * t,
                                    speed, heading)))
    return Agent(agent_id, cls, shape, tuple(track))


def open_road_scenario(agents=(), goal_x=30.0, deadline=60, ego_v=8.0):
    return Scenario(
        id="test",
        time_step=0.25,
        duration_steps=deadline + 10,
        lanelets=(Lanelet("road", ((-20.0, 4.5), (120.0, 4.5)),
                          ((-20.0, -4.5), (120.0, -4.5))),),
        agents=tuple(agents),
        ego_start=AgentState(0.0, 0.0, ego_v, 0.0),
        ego_shape=CAR,
        goal=GoalRegion(center=(goal_x, 0.0), radius=3.0, deadline_step=deadline),
        reference_path=((-20.0, 0.0), (120.0, 0.0)),
    )


# --- collision detection ------------------------------------------------------

def test_detect_far_apart():
    assert not detect_collision(state(0, 0), CAR, state(100, 0), CAR)


def test_detect_identical_poses():
    assert detect_collision(state(5, 5, 0, 0.3), CAR, state(5, 5, 0, 0.3), CAR)


def test_detect_edge_touching_counts():
    # axis-aligned rectangles touching exactly at x = 4.5
    a = state(0, 0)
    b = state(4.5, 0)
    assert detect_collision(a, CAR, b, CAR)
    assert not detect_collision(a, CAR, state(4.5 + 1e-9, 0), CAR)


def test_detect_rotated_separation():
    # diagonal neighbor that only a rotated axis separates
    a = state(0, 0, 0, 0.0)
    b = state(3.6, 1.9, 0, math.pi / 4)
    overlapped = detect_collision(a, CAR, b, CAR)
    far = detect_collision(a, CAR, state(6.0, 4.0, 0, math.pi / 4), CAR)
    assert overlapped
    assert not far


def test_relative_speed_vector_difference():
    a = state(0, 0, 5.0, 0.0)
    b = state(0, 0, 5.0, math.pi)  # head-on
    assert collision_relative_speed(a, b) == pytest.approx(10.0)
    c = state(0, 0, 5.0, 0.0)
    assert collision_relative_speed(a, c) == pytest.approx(0.0)


def test_score_collision_closed_form():
    model = HarmModel()
    rel, h_ego, h_other = score_collision(state(0, 0, 5.0, 0.0),
                                          state(0, 0, 5.0, 0.0), "car", model)
    assert rel == 0.0
    assert h_ego == pytest.approx(logistic(-5.0))
    assert h_other == pytest.approx(logistic(-5.0))


def test_score_collision_vru_exceeds_car():
    model = HarmModel()
    ego = state(0, 0, 10.0, 0.0)
    still = state(0, 0, 0.0, 0.0)
    _, _, to_ped = score_collision(ego, still, "pedestrian", model)
    _, _, to_car = score_collision(ego, still, "car", model)
    assert to_ped > to_car


# --- closed loop ---------------------------------------------------------------

def test_unobstructed_run_completes():
    scenario = open_road_scenario()
    result = run_scenario(scenario, ConstantVelocityPredictor(),
                          PlannerConfig(), HarmModel())
    assert result.completed
    assert result.collision_events == []
    assert result.steps_executed < scenario.goal.deadline_step


def test_blocked_corridor_collides():
    # a wall of stopped trucks spans every lateral option at high closing speed
    trucks = [
        straight_agent(f"t{i}", "truck", (25.0, y), 0.0, 0.0, 70, 0.25,
                       Footprint(6.0, 3.0))
        for i, y in enumerate((-3.0, 0.0, 3.0))
    ]
    scenario = open_road_scenario(trucks, goal_x=60.0, ego_v=12.0)
    result = run_scenario(scenario, ConstantVelocityPredictor(),
                          PlannerConfig(omega_u=0.0), HarmModel())
    assert not result.completed
    assert result.collision_events
    assert result.collision_events[0].harm_to_other > 0


def test_same_seed_identical_results():
    agents = [straight_agent("x", "car", (40.0, 3.2), math.pi, 8.0, 70, 0.25, CAR)]
    scenario = open_road_scenario(agents, goal_x=50.0)
    cfg = PlannerConfig(j_mean_mode="cohort-mean")
    r1 = run_scenario(scenario, ConstantVelocityPredictor(), cfg, HarmModel(), seed=7)
    r2 = run_scenario(scenario, ConstantVelocityPredictor(), cfg, HarmModel(), seed=7)
    assert json.dumps(r1.to_dict()) == json.dumps(r2.to_dict())
    assert [(s.x, s.y, s.v, s.heading) for s in r1.ego_states] == \
        [(s.x, s.y, s.v, s.heading) for s in r2.ego_states]


def test_replay_fidelity():
    recorded = straight_agent("ego_track", "car", (0.0, 0.0), 0.0, 6.0, 80,
                              0.25, CAR)
    agents = [straight_agent("other", "car", (30.0, 3.0), 0.0, 5.0, 80, 0.25, CAR)]
    scenario = open_road_scenario(agents, goal_x=35.0, deadline=40, ego_v=6.0)
    result = run_scenario(scenario, ConstantVelocityPredictor(),
                          PlannerConfig(), HarmModel(), ego_replay=recorded)
    for step, ego_state in enumerate(result.ego_states):
        expected = agent_state_at(recorded, step, 0.25)
        assert ego_state == expected


def test_collision_ends_run_and_dedups():
    # ego replayed straight through a stopped car: exactly one event
    blocker = straight_agent("b", "car", (12.0, 0.0), 0.0, 0.0, 80, 0.25, CAR)
    scenario = open_road_scenario([blocker], goal_x=60.0, deadline=70)
    result = run_scenario(scenario, ConstantVelocityPredictor(),
                          PlannerConfig(omega_u=0.0,
                                        lateral_offsets=(0.0,),
                                        speed_factors=(1.0,)),
                          HarmModel())
    assert not result.completed
    assert len(result.collision_events) == 1
    assert result.steps_executed == result.collision_events[0].step


def test_emergency_brake_on_no_feasible():
    # zero speed limit makes every candidate infeasible; ego brakes to rest
    scenario = open_road_scenario(goal_x=100.0, deadline=30)
    cfg = PlannerConfig(v_max=0.5, a_max=3.0)
    result = run_scenario(scenario, ConstantVelocityPredictor(), cfg, HarmModel())
    assert not result.completed
    assert all(t.reason == "emergency" for t in result.cost_trace)
    speeds = [s.v for s in result.ego_states]
    assert speeds[-1] == 0.0
    assert all(b <= a for a, b in zip(speeds, speeds[1:]))


def test_goal_at_start_completes_immediately():
    scenario = open_road_scenario(goal_x=0.0)
    result = run_scenario(scenario, ConstantVelocityPredictor(),
                          PlannerConfig(), HarmModel())
    assert result.completed
    assert result.steps_executed == 0


# --- suite metrics --------------------------------------------------------------

def make_result(completed, events):
    return SimResult("s", completed, 10, events, [], [])


def test_suite_metrics_rates_and_sums():
    from riskplan.simulation import CollisionEvent
    events = [CollisionEvent(3, "a", "pedestrian", 8.0, 0.1, 0.5),
              CollisionEvent(5, "b", "car", 6.0, 0.2, 0.15)]
    results = [make_result(True, []), make_result(True, []),
               make_result(True, []), make_result(False, events)]
    metrics = suite_metrics(results)
    assert metrics.completed_rate == pytest.approx(75.0)
    assert metrics.harm_ego == pytest.approx(0.3)
    assert metrics.harm_vru == pytest.approx(0.5)
    assert metrics.harm_third_party == pytest.approx(0.15)
    assert metrics.total_harm == pytest.approx(0.95)


def test_suite_metrics_zero_collisions():
    metrics = suite_metrics([make_result(True, [])] * 3)
    assert metrics.total_harm == 0.0
    assert metrics.completed_rate == 100.0


def test_suite_metrics_additivity_guard():
    with pytest.raises(AssertionError):
        SuiteMetrics(completed_rate=50.0, total_harm=1.0, harm_ego=0.1,
                     harm_third_party=0.1, harm_vru=0.1)
