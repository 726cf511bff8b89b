"""Upper bounds on the squared 2-Wasserstein distance of the federated sampler.

With contraction factor ``gamma`` and ``rho = (1 + gamma) / 2`` the bound
after ``s'`` rounds is

    rho^(2 s') W0 + kappa * sum_{s <= s'} rho^(2 (s' - s)) e_s

where ``W0`` is the squared distance of the initial law to the posterior,
``kappa = 2 (1 + gamma) / (1 - gamma)`` and

    e_s = eta^4 L^3 m / 3 + eta^3 L^2 m + 4 eta^2 ell^2 (K - K_a^[s])^2 + eta^2 beta_tilde^[s].

The one-step recursion behind it has the tighter factor
``2 (1 + gamma)^2 / ((1 - gamma)(1 + 3 gamma))``; ``tight=True`` selects it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


def gamma(eta, mu, L):
    """Contraction factor of one gradient step on a ``(mu, L)`` cost.

    Requires ``0 < eta < 2 / L``; at ``eta = 2 / L`` the factor reaches 1 and
    the bound is infinite.
    """
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if not 0 < eta < 2.0 / L:
        raise ValueError(f"learning rate {eta} outside (0, 2/L) = (0, {2.0 / L})")
    if eta <= 2.0 / (mu + L):
        return 1.0 - eta * mu
    return eta * L - 1.0


def gradient_error_bound(ell, K, K_a, beta_tilde):
    """``4 ell^2 (K - K_a)^2 + beta_tilde``."""
    if np.any(np.asarray(K_a) < 0) or np.any(np.asarray(K_a) > K):
        raise ValueError(f"need 0 <= K_a <= K, got K_a={K_a}, K={K}")
    return 4.0 * ell ** 2 * (K - K_a) ** 2 + beta_tilde


def discretization_error_bound(eta, L, m):
    """``eta^4 L^3 m / 3 + eta^3 L^2 m``."""
    return eta ** 4 * L ** 3 * m / 3.0 + eta ** 3 * L ** 2 * m


def error_factor(g, tight=False):
    """Multiplier of the per-round error terms in the bound."""
    if tight:
        return 2.0 * (1.0 + g) ** 2 / ((1.0 - g) * (1.0 + 3.0 * g))
    return 2.0 * (1.0 + g) / (1.0 - g)


@dataclass(frozen=True)
class BoundInputs:
    """Everything the Wasserstein bound depends on.

    ``active_counts`` and ``beta_tildes`` are per-round sequences of equal
    length (round 1 first).
    """

    eta: float
    mu: float
    L: float
    ell: float
    dim: int
    K: int
    w2_init_sq: float
    active_counts: np.ndarray
    beta_tildes: np.ndarray
    tight: bool = False

    def __post_init__(self):
        ka = np.asarray(self.active_counts, dtype=float)
        bt = np.asarray(self.beta_tildes, dtype=float)
        if ka.shape != bt.shape or ka.ndim != 1:
            raise ValueError("active_counts and beta_tildes must be vectors of equal length")
        if self.w2_init_sq < 0:
            raise ValueError("w2_init_sq must be nonnegative")
        if np.any(bt < 0):
            raise ValueError("beta_tilde must be nonnegative")
        object.__setattr__(self, "active_counts", ka)
        object.__setattr__(self, "beta_tildes", bt)
        gamma(self.eta, self.mu, self.L)

    @property
    def gamma(self):
        return gamma(self.eta, self.mu, self.L)

    @property
    def rounds(self):
        return self.active_counts.shape[0]

    def round_errors(self):
        """Per-round bracket ``e_s`` (discretization + gradient error, scaled by eta^2)."""
        eta = self.eta
        disc = discretization_error_bound(eta, self.L, self.dim)
        grad = gradient_error_bound(self.ell, self.K, self.active_counts, 0.0)
        return disc + eta ** 2 * grad + eta ** 2 * self.beta_tildes


def w2_bound(inputs, s_prime):
    """Bound on ``W2(p^[s'], posterior)^2`` evaluated as an explicit sum."""
    if not 0 <= s_prime <= inputs.rounds:
        raise ValueError(f"s' = {s_prime} outside [0, {inputs.rounds}]")
    g = inputs.gamma
    rho2 = ((1.0 + g) / 2.0) ** 2
    head = rho2 ** s_prime * inputs.w2_init_sq
    if s_prime == 0:
        return head
    e = inputs.round_errors()[:s_prime]
    weights = rho2 ** (s_prime - np.arange(1, s_prime + 1))
    return head + error_factor(g, inputs.tight) * float(weights @ e)


def w2_bound_curve(inputs):
    """Bound for every ``s' = 0 .. S`` via the one-step recursion."""
    g = inputs.gamma
    rho2 = ((1.0 + g) / 2.0) ** 2
    return _kernels.bound_curve(inputs.round_errors(), rho2, error_factor(g, inputs.tight), inputs.w2_init_sq)


def w2_bound_recursive(inputs, s_prime):
    """Bound at ``s'`` by iterating the one-step recursion in plain Python."""
    g = inputs.gamma
    rho2 = ((1.0 + g) / 2.0) ** 2
    kappa = error_factor(g, inputs.tight)
    v = inputs.w2_init_sq
    for e in inputs.round_errors()[:s_prime]:
        v = rho2 * v + kappa * e
    return v
