"""Scenario data model, file IO, and time-indexed track queries.

A scenario file is a single JSON document (see ``SCENARIO_KEYS`` for the
schema).  All lengths are meters, speeds m/s, angles radians; ``time_step``
is the fixed sampling interval of every recorded track.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

VRU_CLASSES = frozenset({"pedestrian", "cyclist"})
AGENT_CLASSES = frozenset({"car", "truck", "pedestrian", "cyclist"})

SCENARIO_KEYS = {
    "id", "time_step", "duration_steps", "lanelets", "reference_path",
    "ego_start", "ego_shape", "goal", "agents",
}


class ScenarioError(Exception):
    """Raised when a scenario file cannot be parsed or violates the schema."""


class SchemaError(ScenarioError):
    """Missing key, unknown key, or wrong type; names the offending field."""


class InvariantError(ScenarioError):
    """Structurally valid document whose values break a scenario invariant."""


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    v: float
    heading: float


@dataclass(frozen=True)
class Footprint:
    length: float
    width: float


@dataclass(frozen=True)
class GoalRegion:
    center: tuple[float, float]
    radius: float
    deadline_step: int


@dataclass(frozen=True)
class Lanelet:
    id: str
    left: tuple[tuple[float, float], ...]
    right: tuple[tuple[float, float], ...]

    def polygon(self) -> list[tuple[float, float]]:
        """Closed boundary: left border followed by the reversed right border."""
        return list(self.left) + list(reversed(self.right))


@dataclass(frozen=True)
class Agent:
    id: str
    cls: str
    shape: Footprint
    track: tuple[tuple[int, AgentState], ...]

    @property
    def is_vru(self) -> bool:
        return self.cls in VRU_CLASSES

    def first_step(self) -> int:
        return self.track[0][0]

    def last_step(self) -> int:
        return self.track[-1][0]


@dataclass(frozen=True)
class Scenario:
    id: str
    time_step: float
    duration_steps: int
    lanelets: tuple[Lanelet, ...]
    agents: tuple[Agent, ...]
    ego_start: AgentState
    ego_shape: Footprint
    goal: GoalRegion
    reference_path: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def wrap_angle(a: float) -> float:
    """Normalize an angle to [-pi, pi]."""
    return math.atan2(math.sin(a), math.cos(a))


def _require(doc: dict, key: str, types, where: str):
    if key not in doc:
        raise SchemaError(f"missing required field '{where}{key}'")
    value = doc[key]
    if types is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"field '{where}{key}' must be a number")
        return float(value)
    if types is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"field '{where}{key}' must be an integer")
        return value
    if not isinstance(value, types):
        raise SchemaError(f"field '{where}{key}' has wrong type")
    return value


def _reject_unknown(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        name = sorted(unknown)[0]
        raise SchemaError(f"unknown field '{where}{name}'")


def _parse_point(value, where: str) -> tuple[float, float]:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in value)):
        raise SchemaError(f"field '{where}' must be an [x, y] pair")
    return (float(value[0]), float(value[1]))


def _parse_polyline(value, where: str) -> tuple[tuple[float, float], ...]:
    if not isinstance(value, list):
        raise SchemaError(f"field '{where}' must be an array of [x, y] pairs")
    return tuple(_parse_point(p, f"{where}[{i}]") for i, p in enumerate(value))


def _parse_state(doc, where: str) -> AgentState:
    if not isinstance(doc, dict):
        raise SchemaError(f"field '{where}' must be an object")
    _reject_unknown(doc, {"x", "y", "v", "heading"}, where + ".")
    return AgentState(
        x=_require(doc, "x", float, where + "."),
        y=_require(doc, "y", float, where + "."),
        v=_require(doc, "v", float, where + "."),
        heading=_require(doc, "heading", float, where + "."),
    )


def _parse_footprint(doc, where: str) -> Footprint:
    if not isinstance(doc, dict):
        raise SchemaError(f"field '{where}' must be an object")
    _reject_unknown(doc, {"length", "width"}, where + ".")
    return Footprint(
        length=_require(doc, "length", float, where + "."),
        width=_require(doc, "width", float, where + "."),
    )


def _parse_agent(doc, index: int) -> Agent:
    where = f"agents[{index}]"
    if not isinstance(doc, dict):
        raise SchemaError(f"field '{where}' must be an object")
    _reject_unknown(doc, {"id", "cls", "shape", "track"}, where + ".")
    agent_id = _require(doc, "id", str, where + ".")
    cls = _require(doc, "cls", str, where + ".")
    shape = _parse_footprint(_require(doc, "shape", dict, where + "."), where + ".shape")
    raw_track = _require(doc, "track", list, where + ".")
    track = []
    for i, entry in enumerate(raw_track):
        twhere = f"{where}.track[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"field '{twhere}' must be an object")
        _reject_unknown(entry, {"step", "x", "y", "v", "heading"}, twhere + ".")
        step = _require(entry, "step", int, twhere + ".")
        state = AgentState(
            x=_require(entry, "x", float, twhere + "."),
            y=_require(entry, "y", float, twhere + "."),
            v=_require(entry, "v", float, twhere + "."),
            heading=_require(entry, "heading", float, twhere + "."),
        )
        track.append((step, state))
    return Agent(id=agent_id, cls=cls, shape=shape, track=tuple(track))


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a Scenario from a parsed JSON document, checking the schema only."""
    if not isinstance(doc, dict):
        raise SchemaError("scenario document must be a JSON object")
    _reject_unknown(doc, SCENARIO_KEYS, "")

    lanelets = []
    for i, entry in enumerate(_require(doc, "lanelets", list, "")):
        where = f"lanelets[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"field '{where}' must be an object")
        _reject_unknown(entry, {"id", "left", "right"}, where + ".")
        lanelets.append(Lanelet(
            id=_require(entry, "id", str, where + "."),
            left=_parse_polyline(_require(entry, "left", list, where + "."), where + ".left"),
            right=_parse_polyline(_require(entry, "right", list, where + "."), where + ".right"),
        ))

    agents = tuple(_parse_agent(a, i)
                   for i, a in enumerate(_require(doc, "agents", list, "")))

    goal_doc = _require(doc, "goal", dict, "")
    _reject_unknown(goal_doc, {"center", "radius", "deadline_step"}, "goal.")
    goal = GoalRegion(
        center=_parse_point(_require(goal_doc, "center", (list, tuple), "goal."), "goal.center"),
        radius=_require(goal_doc, "radius", float, "goal."),
        deadline_step=_require(goal_doc, "deadline_step", int, "goal."),
    )

    return Scenario(
        id=_require(doc, "id", str, ""),
        time_step=_require(doc, "time_step", float, ""),
        duration_steps=_require(doc, "duration_steps", int, ""),
        lanelets=tuple(lanelets),
        agents=agents,
        ego_start=_parse_state(_require(doc, "ego_start", dict, ""), "ego_start"),
        ego_shape=_parse_footprint(_require(doc, "ego_shape", dict, ""), "ego_shape"),
        goal=goal,
        reference_path=_parse_polyline(_require(doc, "reference_path", list, ""), "reference_path"),
    )


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of scenario_from_dict; round-trips through load_scenario."""
    return {
        "id": s.id,
        "time_step": s.time_step,
        "duration_steps": s.duration_steps,
        "lanelets": [
            {"id": l.id, "left": [list(p) for p in l.left], "right": [list(p) for p in l.right]}
            for l in s.lanelets
        ],
        "reference_path": [list(p) for p in s.reference_path],
        "ego_start": {"x": s.ego_start.x, "y": s.ego_start.y,
                      "v": s.ego_start.v, "heading": s.ego_start.heading},
        "ego_shape": {"length": s.ego_shape.length, "width": s.ego_shape.width},
        "goal": {"center": list(s.goal.center), "radius": s.goal.radius,
                 "deadline_step": s.goal.deadline_step},
        "agents": [
            {
                "id": a.id,
                "cls": a.cls,
                "shape": {"length": a.shape.length, "width": a.shape.width},
                "track": [
                    {"step": step, "x": st.x, "y": st.y, "v": st.v, "heading": st.heading}
                    for step, st in a.track
                ],
            }
            for a in s.agents
        ],
    }


def validate_scenario(s: Scenario) -> list[Violation]:
    """Check every scenario invariant; returns all violations, never raises."""
    out: list[Violation] = []

    if not s.time_step > 0:
        out.append(Violation("time_step.nonpositive",
                             f"time_step must be > 0, got {s.time_step}"))
    if s.duration_steps < 1:
        out.append(Violation("duration_steps.too_small",
                             f"duration_steps must be >= 1, got {s.duration_steps}"))

    if len(s.reference_path) < 2:
        out.append(Violation("reference_path.too_short",
                             "reference_path needs at least 2 points"))
    else:
        for i in range(len(s.reference_path) - 1):
            ax, ay = s.reference_path[i]
            bx, by = s.reference_path[i + 1]
            if math.hypot(bx - ax, by - ay) == 0.0:
                out.append(Violation("reference_path.zero_segment",
                                     f"segment {i} of reference_path has zero length"))

    def check_state(state: AgentState, where: str) -> None:
        if state.v < 0:
            out.append(Violation("state.negative_speed", f"{where}: v must be >= 0"))
        if not -math.pi <= state.heading <= math.pi:
            out.append(Violation("state.heading_range",
                                 f"{where}: heading must lie in [-pi, pi]"))

    def check_footprint(fp: Footprint, where: str) -> None:
        if fp.length <= 0 or fp.width <= 0:
            out.append(Violation("footprint.nonpositive",
                                 f"{where}: footprint dimensions must be > 0"))

    check_state(s.ego_start, "ego_start")
    check_footprint(s.ego_shape, "ego_shape")

    if s.goal.radius <= 0:
        out.append(Violation("goal.radius.nonpositive",
                             f"goal radius must be > 0, got {s.goal.radius}"))
    if s.goal.deadline_step > s.duration_steps:
        out.append(Violation("goal.deadline.after_end",
                             "goal deadline_step must be <= duration_steps"))

    for lanelet in s.lanelets:
        if len(lanelet.left) < 2 or len(lanelet.right) < 2:
            out.append(Violation("lanelet.too_short",
                                 f"lanelet '{lanelet.id}' borders need >= 2 points"))

    for agent in s.agents:
        where = f"agent '{agent.id}'"
        if agent.cls not in AGENT_CLASSES:
            out.append(Violation("agent.unknown_class",
                                 f"{where}: unknown class '{agent.cls}'"))
        check_footprint(agent.shape, where)
        if not agent.track:
            out.append(Violation("agent.track.empty", f"{where}: track is empty"))
            continue
        if agent.track[0][0] != 0:
            out.append(Violation("agent.track.missing_step0",
                                 f"{where}: track must cover step 0"))
        steps = [step for step, _ in agent.track]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            out.append(Violation("agent.track.nonmonotone",
                                 f"{where}: track step indices must strictly increase"))
        for step, state in agent.track:
            check_state(state, f"{where} step {step}")

    return out


def load_scenario(path) -> Scenario:
    """Load and fully validate a scenario file.

    Raises SchemaError for structural problems and InvariantError when the
    parsed values break a scenario invariant; both name the offending field
    or agent.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scenario file {path} is not valid JSON: {exc}") from exc

    scenario = scenario_from_dict(doc)
    violations = validate_scenario(scenario)
    if violations:
        detail = "; ".join(str(v) for v in violations)
        raise InvariantError(f"scenario '{scenario.id}' invalid: {detail}")
    return scenario


def write_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=1)
        fh.write("\n")


def interpolate_states(a: AgentState, b: AgentState, w: float) -> AgentState:
    """Linear blend of two states; heading follows the shortest arc."""
    delta = wrap_angle(b.heading - a.heading)
    return AgentState(
        x=a.x + w * (b.x - a.x),
        y=a.y + w * (b.y - a.y),
        v=a.v + w * (b.v - a.v),
        heading=wrap_angle(a.heading + w * delta),
    )


def agent_state_at(agent: Agent, step: float, time_step: float) -> AgentState:
    """Sample an agent's recorded track at a (possibly fractional) step.

    Exact at recorded steps, linearly interpolated between them (shortest-arc
    for heading), and hold-last beyond the final sample.  ``time_step`` is
    accepted for interface symmetry with other per-step queries; the track is
    indexed purely by step.
    """
    del time_step
    track = agent.track
    first = track[0][0]
    if step < first:
        raise ValueError(
            f"agent '{agent.id}': step {step} precedes first recorded step {first}")
    if step >= track[-1][0]:
        return track[-1][1]
    # locate the surrounding samples; tracks are short, linear scan is fine
    for i in range(len(track) - 1):
        s0, st0 = track[i]
        s1, st1 = track[i + 1]
        if s0 <= step <= s1:
            if step == s0:
                return st0
            if step == s1:
                return st1
            return interpolate_states(st0, st1, (step - s0) / (s1 - s0))
    return track[-1][1]


def track_history_states(agent: Agent, step: int, time_step: float,
                         length: int) -> tuple[list[AgentState], list[bool]]:
    """States at steps step-length+1 .. step, front-padded at the track start.

    Returns the states and a mask marking which entries are real samples
    (True) versus front padding (False).
    """
    states: list[AgentState] = []
    mask: list[bool] = []
    first = agent.first_step()
    for k in range(step - length + 1, step + 1):
        if k < first:
            states.append(agent_state_at(agent, first, time_step))
            mask.append(False)
        else:
            states.append(agent_state_at(agent, k, time_step))
            mask.append(True)
    return states, mask
