"""Independent reference computations for the union probability.

Neither function shares code with :mod:`pecwe.metric`; they exist to check it.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import TooLarge

MAX_ENUMERATION = 20


def pecwe_bruteforce_oracle(scores: Iterable[float]) -> float:
    """Sum the mass of every joint outcome with at least one exploit.

    Builds the full table of ``2**n`` outcome probabilities; outcome 0 is
    the one where nothing is exploited.
    """
    scores = [float(p) for p in scores]
    if len(scores) > MAX_ENUMERATION:
        raise TooLarge(f"enumeration limited to {MAX_ENUMERATION} scores, got {len(scores)}")
    masses = np.ones(1)
    for p in scores:
        masses = np.concatenate((masses * (1.0 - p), masses * p))
    return min(1.0, math.fsum(masses[1:]))


def pecwe_montecarlo_oracle(scores: Iterable[float], trials: int, seed: int) -> tuple:
    """Estimate P(at least one success) from simulated Bernoulli draws.

    Each trial draws every score independently; a trial stops mattering once
    it has a success, so only still-unexploited trials are drawn for later
    scores. Returns ``(estimate, binomial standard error)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    alive = trials
    for p in sorted((float(s) for s in scores), reverse=True):
        if alive == 0:
            break
        alive -= int(np.count_nonzero(rng.random(alive) < p))
    estimate = (trials - alive) / trials
    return estimate, math.sqrt(estimate * (1.0 - estimate) / trials)
