"""Group-relative advantage estimators for training-batch export.

``mean_baseline`` (default): A_i = r_i - mean(r).  ``grpo_std``:
A_i = (r_i - mean(r)) / population_std(r), all zeros when the group is
uniform.  The mean_baseline path is computed over exact rationals so the
within-group sum is identically zero before float conversion.
"""
from __future__ import annotations

from fractions import Fraction
from math import fsum, sqrt
from typing import Sequence

ESTIMATORS = ("mean_baseline", "grpo_std")


class GroupTooSmall(Exception):
    pass


def mean_baseline_exact(rewards: Sequence[float]) -> list[Fraction]:
    """Exact-rational A_i = r_i - mean(r); sums to Fraction(0) identically."""
    if len(rewards) < 2:
        raise GroupTooSmall(f"group size {len(rewards)} < 2")
    exact = [Fraction(r) for r in rewards]  # Fraction(float) is exact
    mu = sum(exact, Fraction(0)) / len(exact)
    return [r - mu for r in exact]


def compute_advantages(rewards: Sequence[float], estimator: str = "mean_baseline") -> list[float]:
    """Advantages for one group; broadcast unchanged to every valid turn."""
    G = len(rewards)
    if G < 2:
        raise GroupTooSmall(f"group size {G} < 2")
    if estimator == "mean_baseline":
        return [float(a) for a in mean_baseline_exact(rewards)]
    if estimator == "grpo_std":
        mu = fsum(rewards) / G
        variance = fsum((r - mu) ** 2 for r in rewards) / G
        sigma = sqrt(variance)
        if sigma == 0.0:
            return [0.0] * G
        return [(r - mu) / sigma for r in rewards]
    raise ValueError(f"unknown estimator {estimator!r}; choose one of {ESTIMATORS}")
