"""Shared forecast data types."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scenario import Agent, AgentState, track_history_states

SIGMA_FLOOR = 1e-3
RHO_BOUND = 0.999


@dataclass(frozen=True)
class TrackHistory:
    """Fixed-length window of past states for one agent.

    ``states`` has exactly the configured history length; short histories are
    front-padded by repeating the earliest real state, with ``mask`` marking
    real entries True.
    """
    agent_id: str
    states: tuple[AgentState, ...]
    mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.states) != len(self.mask):
            raise ValueError("history states and mask lengths differ")
        if not any(self.mask):
            raise ValueError("history must contain at least one real state")

    @property
    def last(self) -> AgentState:
        return self.states[-1]

    @classmethod
    def from_agent(cls, agent: Agent, step: int, time_step: float,
                   length: int) -> "TrackHistory":
        states, mask = track_history_states(agent, step, time_step, length)
        return cls(agent_id=agent.id, states=tuple(states), mask=tuple(mask))


class PredictedDistribution:
    """Per-step bivariate Gaussians over a road user's future position.

    mu: (h, 2) means in world frame; sigma: (h, 2) standard deviations
    (> 0); rho: (h,) correlations with |rho| <= 0.999.
    """

    def __init__(self, mu, sigma, rho) -> None:
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        rho = np.asarray(rho, dtype=float)
        if mu.ndim != 2 or mu.shape[1] != 2 or sigma.shape != mu.shape \
                or rho.shape != (mu.shape[0],):
            raise ValueError("inconsistent prediction array shapes")
        if np.any(sigma <= 0):
            raise ValueError("prediction sigma must be > 0")
        if np.any(np.abs(rho) > RHO_BOUND):
            raise ValueError(f"prediction |rho| must be <= {RHO_BOUND}")
        self.mu = mu
        self.sigma = sigma
        self.rho = rho

    def __len__(self) -> int:
        return self.mu.shape[0]

    def truncated(self, n: int) -> "PredictedDistribution":
        if n > len(self):
            raise ValueError("cannot truncate a prediction to a longer horizon")
        return PredictedDistribution(self.mu[:n], self.sigma[:n], self.rho[:n])
