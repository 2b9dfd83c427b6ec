"""Delimited outputs and the figures rendered alongside them.

Every CSV is comma-separated with a header row, '.' decimals at full repr
precision, and line-feed terminated so repeated runs compare byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenario import Scenario, agent_state_at
from .simulation import SimResult, SuiteMetrics

COMPARISON_COLUMNS = ("variant", "completed_rate", "total_harm",
                      "harm_ego", "harm_third_party", "harm_vru")

SWEEP_COLUMNS = ("omega_u", "omega_o", "completed_rate", "total_harm",
                 "harm_ego", "harm_third_party", "harm_vru")

PLANNER_LOG_COLUMNS = ("step", "candidate_id", "d_target", "v_target", "horizon",
                       "feasible", "violations", "j_origin", "j", "j_mean",
                       "j_utility", "j_risk", "chosen")

TRACE_COLUMNS = ("step", "actor", "x", "y", "heading", "v")


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_comparison_csv(path, metrics: dict[str, SuiteMetrics]) -> None:
    rows = [
        (name, m.completed_rate, m.total_harm, m.harm_ego,
         m.harm_third_party, m.harm_vru)
        for name, m in metrics.items()
    ]
    _write_csv(path, COMPARISON_COLUMNS, rows)


def write_sweep_csv(path, rows: list[dict]) -> None:
    _write_csv(path, SWEEP_COLUMNS,
               [tuple(row[c] for c in SWEEP_COLUMNS) for row in rows])


def write_result_json(path, result: SimResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=1)
        fh.write("\n")


def write_trace_csv(path, scenario: Scenario, result: SimResult) -> None:
    """Per-step world states of the ego and every replayed agent."""
    rows = []
    for step, state in enumerate(result.ego_states):
        rows.append((step, "ego", state.x, state.y, state.heading, state.v))
    for agent in scenario.agents:
        for step in range(result.steps_executed + 1):
            state = agent_state_at(agent, step, scenario.time_step)
            rows.append((step, agent.id, state.x, state.y, state.heading, state.v))
    _write_csv(path, TRACE_COLUMNS, rows)


def write_planner_log_csv(path, log_rows) -> None:
    """One row per planning step per candidate."""
    rows = []
    for step, cand, breakdown, chosen in log_rows:
        if breakdown is None:
            costs = ("", "", "", "", "")
        else:
            costs = (fmt(breakdown.j_origin), fmt(breakdown.j),
                     fmt(breakdown.j_mean), fmt(breakdown.j_utility),
                     fmt(breakdown.j_risk))
        rows.append((step, cand.id, cand.d_target, cand.v_target, cand.horizon,
                     cand.feasible, ";".join(cand.violations), *costs, chosen))
    _write_csv(path, PLANNER_LOG_COLUMNS, rows)


def read_comparison_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# --- figures ---------------------------------------------------------------

def save_comparison_figure(path, metrics: dict[str, SuiteMetrics]) -> None:
    """Completion rate plus harm-by-group bars, one cluster per variant."""
    names = list(metrics)
    fig, (ax_rate, ax_harm) = plt.subplots(1, 2, figsize=(9, 3.6))

    rates = [metrics[n].completed_rate for n in names]
    ax_rate.bar(names, rates, color="tab:blue")
    ax_rate.set_ylabel("completed rate [%]")
    ax_rate.set_ylim(0, 100)
    ax_rate.set_title("Completion")

    groups = ("harm_ego", "harm_third_party", "harm_vru")
    labels = ("Ego-AV", "Third party", "VRUs")
    x = np.arange(len(names))
    width = 0.25
    for i, (attr, label) in enumerate(zip(groups, labels)):
        ax_harm.bar(x + (i - 1) * width,
                    [getattr(metrics[n], attr) for n in names],
                    width, label=label)
    ax_harm.set_xticks(x, names)
    ax_harm.set_ylabel("summed harm")
    ax_harm.set_title("Harm distribution")
    ax_harm.legend(fontsize=8)

    for ax in (ax_rate, ax_harm):
        ax.tick_params(axis="x", rotation=15)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_trajectory_figure(path, scenario: Scenario, result: SimResult) -> None:
    """Road geometry, agent replays, the executed ego path, and the goal."""
    fig, ax = plt.subplots(figsize=(9, 3.2))
    for lanelet in scenario.lanelets:
        poly = np.asarray(lanelet.polygon())
        ax.fill(poly[:, 0], poly[:, 1], color="0.92", zorder=0)
        left = np.asarray(lanelet.left)
        right = np.asarray(lanelet.right)
        ax.plot(left[:, 0], left[:, 1], color="0.6", lw=0.8)
        ax.plot(right[:, 0], right[:, 1], color="0.6", lw=0.8)

    ref = np.asarray(scenario.reference_path)
    ax.plot(ref[:, 0], ref[:, 1], "--", color="0.5", lw=0.8, label="reference")

    for agent in scenario.agents:
        pts = np.array([
            (agent_state_at(agent, k, scenario.time_step).x,
             agent_state_at(agent, k, scenario.time_step).y)
            for k in range(result.steps_executed + 1)
        ])
        style = "tab:red" if agent.is_vru else "tab:orange"
        ax.plot(pts[:, 0], pts[:, 1], color=style, lw=1.2, label=agent.id)

    ego = np.array([(s.x, s.y) for s in result.ego_states])
    ax.plot(ego[:, 0], ego[:, 1], color="tab:blue", lw=1.8, label="ego")
    goal = plt.Circle(scenario.goal.center, scenario.goal.radius,
                      color="tab:green", alpha=0.4)
    ax.add_patch(goal)
    for event in result.collision_events:
        state = result.ego_states[event.step]
        ax.plot(state.x, state.y, "x", color="black", markersize=9)

    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    title = f"{scenario.id}: {'completed' if result.completed else 'failed'}"
    ax.set_title(title)
    ax.legend(fontsize=7, loc="upper right", ncols=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_figure(path, rows: list[dict]) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    xs = [row["omega_u"] for row in rows]
    ax1.plot(xs, [row["total_harm"] for row in rows], "o-", color="tab:red")
    ax1.set_xlabel("omega_u")
    ax1.set_ylabel("total harm")
    ax2.plot(xs, [row["completed_rate"] for row in rows], "o-", color="tab:blue")
    ax2.set_xlabel("omega_u")
    ax2.set_ylabel("completed rate [%]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_figure(path, losses: list[float]) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.plot(losses, lw=1.2)
    ax.set_xlabel("training step")
    ax.set_ylabel("mean NLL")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
