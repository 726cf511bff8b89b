"""Differential-privacy accounting for channel-noise-based aggregation.

Each round a scheduled device discloses a Gaussian-mechanism output whose
sensitivity is at most ``2 * alpha * ell``. The per-round loss
``2 (alpha ell)^2 / N0`` accumulates over rounds and must stay below the
scalar budget ``R_dp(eps, delta)`` for (eps, delta)-DP.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

_SQRT_PI = math.sqrt(math.pi)


def c_function(x):
    """``C(x) = sqrt(pi) * x * exp(x^2)``."""
    return _SQRT_PI * x * math.exp(x * x)


def c_inverse(y, max_iter=200, xtol=1e-14):
    """Solve ``C(x) = y`` for ``x >= 0`` by bisection.

    ``C`` is strictly increasing on ``[0, inf)`` with ``C(0) = 0``, so the
    bracket ``[0, max(1, sqrt(log(1 + y))) + 2]`` always contains the root.
    """
    if y < 0 or not math.isfinite(y):
        raise ValueError(f"c_inverse needs a finite y >= 0, got {y}")
    if y == 0:
        return 0.0
    lo, hi = 0.0, max(1.0, math.sqrt(math.log1p(y))) + 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= xtol:
            break
        if c_function(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dp_budget(epsilon, delta):
    """``R_dp = (sqrt(eps + c^2) - c)^2`` with ``c = C^{-1}(1 / delta)``."""
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be finite and >= 0, got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    c = c_inverse(1.0 / delta)
    # (sqrt(eps + c^2) - c)^2 without cancellation for small eps
    root = epsilon / (math.sqrt(epsilon + c * c) + c)
    return root * root


@dataclass(frozen=True)
class DpBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        dp_budget(self.epsilon, self.delta)

    @property
    def r_dp(self):
        return dp_budget(self.epsilon, self.delta)


def sensitivity_bound(alpha, threshold, gain, ell):
    """``1[gain >= threshold] * 2 * alpha * ell``."""
    return 2.0 * alpha * ell if gain >= threshold else 0.0


def per_round_loss(policy, channel, ell):
    """Privacy loss of every device in every round, shape (K, S).

    Policies that add noise at the devices over an ideal channel (field
    ``device_noise`` set) disclose the noisy sum of all ``K`` gradients; the
    equivalent loss is ``2 ell^2 / (K sigma)``.
    """
    K, S = channel.gains.shape
    alphas = np.asarray(policy.alphas, dtype=float)
    if alphas.shape != (S,):
        raise ValueError(f"policy covers {alphas.shape[0]} rounds, channel has {S}")
    sigma = getattr(policy, "device_noise", None)
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        with np.errstate(divide="ignore"):
            loss = np.where(sigma > 0, 2.0 * ell ** 2 / (K * sigma), np.inf)
        return np.broadcast_to(loss, (K, S)).copy()
    thresholds = np.asarray(policy.thresholds, dtype=float)
    active = channel.gains >= thresholds[None, :]
    N0 = channel.noise_power
    sq = 2.0 * (alphas * ell) ** 2
    if N0 > 0:
        loss = sq / N0
    else:
        loss = np.where(sq > 0, np.inf, 0.0)
    return np.where(active, loss[None, :], 0.0)


@dataclass(frozen=True)
class PrivacyLedger:
    """Per-device, per-round privacy loss checked against a budget."""

    per_round: np.ndarray
    budget: DpBudget

    @property
    def cumulative(self):
        return np.cumsum(self.per_round, axis=1)

    @property
    def loss(self):
        return self.per_round.sum(axis=1)

    @property
    def slack(self):
        return self.budget.r_dp - self.loss

    @property
    def passed(self):
        return self.loss <= self.budget.r_dp

    @property
    def all_passed(self):
        return bool(np.all(self.passed))

    def rows(self):
        r_dp = self.budget.r_dp
        cum = self.cumulative
        K, S = self.per_round.shape
        for k in range(K):
            for s in range(S):
                yield (k, s + 1, float(self.per_round[k, s]), float(cum[k, s]), r_dp, r_dp - float(cum[k, s]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["device", "round", "loss", "cumulative", "budget", "slack"])
            for row in self.rows():
                w.writerow([row[0], row[1]] + [repr(x) for x in row[2:]])


def verify_dp(policy, channel, ell, budget):
    """Account the loss of ``policy`` on ``channel`` and compare with ``budget``."""
    if not isinstance(budget, DpBudget):
        budget = DpBudget(*budget)
    return PrivacyLedger(per_round_loss(policy, channel, ell), budget)
