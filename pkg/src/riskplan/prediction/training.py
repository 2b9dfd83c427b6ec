"""Training loop for the forecasting network: plain full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scenario import Scenario, agent_state_at
from .backprop import loss_and_gradients, nll_terms
from .network import NetConfig, NetworkParams, SceneInputs, scene_from_histories
from .types import PredictedDistribution, TrackHistory


class TrainingDivergence(Exception):
    def __init__(self, step: int, blocks: list[str]):
        detail = ", ".join(blocks) if blocks else "loss"
        super().__init__(f"non-finite loss at training step {step} (affected: {detail})")
        self.step = step
        self.blocks = blocks


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    steps: int = 500
    seed: int = 0


def nll_loss(pred: PredictedDistribution, truth) -> float:
    """Mean negative log-likelihood of the truth points under the prediction."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (len(pred), 2):
        raise ValueError(
            f"truth shape {truth.shape} does not match prediction length {len(pred)}")
    return float(np.mean(nll_terms(pred.mu, pred.sigma, pred.rho, truth)))


def dataset_from_scenarios(scenarios: list[Scenario],
                           samples: list,
                           cfg: NetConfig) -> list[tuple[SceneInputs, np.ndarray]]:
    """Build (scene, truth) pairs from scenario recordings.

    Each sample is (scenario index, agent id, anchor step): the named agent's
    history ending at the anchor becomes the prediction target, every other
    agent in the scenario is a neighbor, and the truth is the target's next
    h_f recorded positions (hold-last beyond the track end).
    """
    dataset = []
    for entry in samples:
        scen_idx, agent_id, anchor = entry
        scenario = scenarios[scen_idx]
        dt = scenario.time_step
        by_id = {a.id: a for a in scenario.agents}
        if agent_id not in by_id:
            raise ValueError(
                f"sample references unknown agent '{agent_id}' "
                f"in scenario '{scenario.id}'")
        target = by_id[agent_id]
        history = TrackHistory.from_agent(target, anchor, dt, cfg.h_p)
        neighbors = [TrackHistory.from_agent(a, anchor, dt, cfg.h_p)
                     for a in scenario.agents if a.id != agent_id]
        scene = scene_from_histories(history, neighbors, cfg)
        truth = np.array([
            (agent_state_at(target, anchor + t, dt).x,
             agent_state_at(target, anchor + t, dt).y)
            for t in range(1, cfg.h_f + 1)
        ])
        dataset.append((scene, truth))
    return dataset


def train(params: NetworkParams,
          dataset: list[tuple[SceneInputs, np.ndarray]],
          config: TrainConfig) -> tuple[NetworkParams, list[float]]:
    """Full-batch gradient descent on the mean NLL over the dataset.

    Deterministic: the update order is the dataset order and no randomness is
    drawn inside the loop.  Returns the trained parameters and the loss at
    the start of every step.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    params = params.copy()
    n = len(dataset)
    losses: list[float] = []
    for step in range(config.steps):
        acc = params.zero_grads()
        total = 0.0
        for scene, truth in dataset:
            loss, grads = loss_and_gradients(params, scene, truth)
            total += loss
            for name in acc:
                acc[name] += grads[name]
        mean_loss = total / n
        losses.append(mean_loss)
        if not np.isfinite(mean_loss):
            bad = [name for name, g in acc.items() if not np.all(np.isfinite(g))]
            raise TrainingDivergence(step, bad)
        for name in params.blocks:
            params.blocks[name] -= config.lr * (acc[name] / n)
    return params, losses
