import json
import math

import pytest


def minimal_scenario_doc() -> dict:
    """Schema-conformant scenario document used as the base fixture."""
    return {
        "id": "fixture",
        "time_step": 0.5,
        "duration_steps": 4,
        "lanelets": [
            {
                "id": "lane",
                "left": [[-10.0, 4.0], [60.0, 4.0]],
                "right": [[-10.0, -4.0], [60.0, -4.0]],
            }
        ],
        "reference_path": [[-10.0, 0.0], [60.0, 0.0]],
        "ego_start": {"x": 0.0, "y": 0.0, "v": 5.0, "heading": 0.0},
        "ego_shape": {"length": 4.5, "width": 1.8},
        "goal": {"center": [20.0, 0.0], "radius": 3.0, "deadline_step": 4},
        "agents": [
            {
                "id": "a1",
                "cls": "car",
                "shape": {"length": 4.0, "width": 1.8},
                "track": [
                    {"step": 0, "x": 10.0, "y": 2.0, "v": 4.0, "heading": 0.0},
                    {"step": 1, "x": 12.0, "y": 2.0, "v": 4.0, "heading": 0.0},
                    {"step": 2, "x": 14.0, "y": 2.0, "v": 4.0, "heading": 0.0},
                    {"step": 3, "x": 16.0, "y": 2.0, "v": 4.0, "heading": 0.0},
                ],
            }
        ],
    }


@pytest.fixture
def scenario_doc():
    return minimal_scenario_doc()


@pytest.fixture
def scenario_file(tmp_path, scenario_doc):
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps(scenario_doc))
    return path
