import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskplan.scenario import (
    Agent,
    AgentState,
    Footprint,
    InvariantError,
    SchemaError,
    agent_state_at,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    track_history_states,
    validate_scenario,
    wrap_angle,
    write_scenario,
)


def make_agent(steps_states):
    return Agent(
        id="t", cls="car", shape=Footprint(4.0, 1.8),
        track=tuple((s, AgentState(*vals)) for s, vals in steps_states),
    )


def test_load_minimal_fixture(scenario_file):
    scenario = load_scenario(scenario_file)
    assert scenario.id == "fixture"
    assert len(scenario.agents) == 1
    assert scenario.duration_steps == 4
    assert len(scenario.agents[0].track) == 4
    assert len(scenario.lanelets) == 1


def test_missing_time_step_names_field(tmp_path, scenario_doc):
    del scenario_doc["time_step"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(scenario_doc))
    with pytest.raises(SchemaError, match="time_step"):
        load_scenario(path)


def test_unknown_key_rejected(tmp_path, scenario_doc):
    scenario_doc["extra"] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(scenario_doc))
    with pytest.raises(SchemaError, match="extra"):
        load_scenario(path)


def test_nonmonotone_track_names_agent(tmp_path, scenario_doc):
    track = scenario_doc["agents"][0]["track"]
    track[1]["step"], track[2]["step"] = 2, 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(scenario_doc))
    with pytest.raises(InvariantError, match="a1"):
        load_scenario(path)


def test_unreadable_file():
    with pytest.raises(Exception, match="cannot read"):
        load_scenario("/nonexistent/path/scenario.json")


def test_validate_valid_fixture_empty(scenario_doc):
    scenario = scenario_from_dict(scenario_doc)
    assert validate_scenario(scenario) == []


def test_validate_zero_goal_radius(scenario_doc):
    scenario_doc["goal"]["radius"] = 0.0
    scenario = scenario_from_dict(scenario_doc)
    violations = validate_scenario(scenario)
    assert [v.code for v in violations] == ["goal.radius.nonpositive"]


def test_validate_reports_all_violations(scenario_doc):
    # two independent defects: bad goal radius and a negative speed
    scenario_doc["goal"]["radius"] = -1.0
    scenario_doc["agents"][0]["track"][0]["v"] = -2.0
    scenario = scenario_from_dict(scenario_doc)
    codes = {v.code for v in validate_scenario(scenario)}
    assert codes == {"goal.radius.nonpositive", "state.negative_speed"}


def test_validate_matches_load_acceptance(tmp_path, scenario_doc):
    # load_scenario accepts exactly the documents validate_scenario clears
    scenario_doc["time_step"] = -0.5
    scenario = scenario_from_dict(scenario_doc)
    assert validate_scenario(scenario)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(scenario_doc))
    with pytest.raises(InvariantError):
        load_scenario(path)


def test_round_trip(tmp_path, scenario_doc):
    scenario = scenario_from_dict(scenario_doc)
    path = tmp_path / "again.json"
    write_scenario(scenario, path)
    assert load_scenario(path) == scenario


def test_round_trip_dict_identity(scenario_doc):
    scenario = scenario_from_dict(scenario_doc)
    assert scenario_from_dict(scenario_to_dict(scenario)) == scenario


def test_state_at_recorded_step_exact():
    agent = make_agent([(0, (0, 0, 1, 0)), (3, (10.0, 0.0, 1, 0))])
    state = agent_state_at(agent, 3, 0.5)
    assert (state.x, state.y) == (10.0, 0.0)


def test_state_at_linear_interpolation():
    agent = make_agent([(0, (0.0, 0.0, 2.0, 0)), (2, (4.0, 0.0, 4.0, 0))])
    state = agent_state_at(agent, 1, 0.5)
    assert state.x == pytest.approx(2.0)
    assert state.v == pytest.approx(3.0)


def test_state_at_hold_last():
    agent = make_agent([(0, (0, 0, 3.0, 0.2)), (2, (4.0, 1.0, 3.0, 0.2))])
    state = agent_state_at(agent, 10, 0.5)
    assert state == agent.track[-1][1]
    assert state.v == 3.0


def test_state_before_first_sample_errors():
    agent = Agent("t", "car", Footprint(4, 2),
                  ((2, AgentState(0, 0, 1, 0)), (4, AgentState(1, 0, 1, 0))))
    with pytest.raises(ValueError, match="'t'"):
        agent_state_at(agent, 1, 0.5)


def test_heading_shortest_arc():
    # from +170deg to -170deg the short way passes through 180, not 0
    a = math.radians(170)
    b = math.radians(-170)
    agent = make_agent([(0, (0, 0, 1, a)), (2, (2, 0, 1, b))])
    mid = agent_state_at(agent, 1, 0.5)
    assert abs(abs(mid.heading) - math.pi) < 1e-9


@given(st.floats(min_value=0.0, max_value=1.9), st.floats(min_value=1e-6, max_value=0.05))
@settings(max_examples=60, deadline=None)
def test_state_continuity_along_segments(step, eps):
    agent = make_agent([(0, (0.0, 1.0, 2.0, 0.1)), (2, (4.0, 3.0, 6.0, 1.3))])
    lo = agent_state_at(agent, max(step - eps, 0.0), 0.5)
    hi = agent_state_at(agent, min(step + eps, 2.0), 0.5)
    assert abs(hi.x - lo.x) <= 3.0 * 2 * eps + 1e-9
    assert abs(hi.v - lo.v) <= 3.0 * 2 * eps + 1e-9
    assert abs(wrap_angle(hi.heading - lo.heading)) <= 2.0 * 2 * eps + 1e-9


def test_history_front_padding():
    agent = make_agent([(0, (0, 0, 1, 0)), (1, (1, 0, 1, 0)), (2, (2, 0, 1, 0))])
    states, mask = track_history_states(agent, 2, 0.5, length=5)
    assert mask == [False, False, True, True, True]
    assert states[0] == states[1] == agent.track[0][1]
    assert states[-1] == agent.track[2][1]
