"""Constant-velocity baseline predictor with linearly growing uncertainty."""

from __future__ import annotations

import math

import numpy as np

from .types import PredictedDistribution, TrackHistory


def constant_velocity_predict(history: TrackHistory, h_f: int, dt: float,
                              sigma0: float = 0.35,
                              sigma_growth: float = 0.15) -> PredictedDistribution:
    """Extrapolate the last state at its recorded speed and heading.

    sigma grows linearly with lookahead time: sigma(t) = sigma0 +
    sigma_growth * t * dt for step t = 1..h_f; the axes are uncorrelated.
    """
    last = history.last
    vx = last.v * math.cos(last.heading)
    vy = last.v * math.sin(last.heading)
    t = np.arange(1, h_f + 1, dtype=float)
    mu = np.stack([last.x + vx * t * dt, last.y + vy * t * dt], axis=1)
    sig = sigma0 + sigma_growth * t * dt
    sigma = np.stack([sig, sig], axis=1)
    return PredictedDistribution(mu, sigma, np.zeros(h_f))
