"""Langevin samplers: centralized LMC, the over-the-air federated update, and
an exact Ornstein-Uhlenbeck oracle for quadratic costs.

The federated server update is

    theta' = theta - eta K / (alpha K_a) * y + sqrt(beta) * q

with ``y = alpha * sum_{k active} grad_k + z`` and ``z ~ N(0, N0 I)``. The
channel noise contributes variance ``eta^2 N0 K^2 / (alpha K_a)^2`` per
coordinate; the server tops it up to ``2 eta`` with ``beta`` or, when the
channel noise already exceeds ``2 eta``, the surplus ``eta^2 beta_tilde``
acts as gradient noise.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import PowerViolationError, SchedulingError, aircomp_round, check_power
from .model import GaussianLinRegModel, clip_gradient


@dataclass(frozen=True)
class SamplerConfig:
    """Step size, burn-in length ``S_b``, retained samples ``S_u`` and seed."""

    eta: float
    burn_in: int
    samples: int
    seed: int = 0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.burn_in < 0 or self.samples < 1:
            raise ValueError("need burn_in >= 0 and samples >= 1")

    @property
    def rounds(self):
        return self.burn_in + self.samples


@dataclass(frozen=True)
class RoundDiagnostics:
    active_count: int
    beta: float
    beta_tilde: float


@dataclass(frozen=True)
class RunTrace:
    """Iterates and per-round diagnostics of one sampler run.

    ``theta[s]`` is the iterate after round ``s`` (``theta[0]`` is the
    initial draw). Diagnostic arrays have one entry per round ``1 .. S``.
    """

    theta: np.ndarray
    active_count: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    beta_tilde: np.ndarray
    burn_in: int
    rep: int = 0

    @property
    def rounds(self):
        return self.theta.shape[0] - 1

    @property
    def samples(self):
        """Retained iterates, rounds ``S_b + 1 .. S``."""
        return self.theta[self.burn_in + 1:]

    def rows(self):
        m = self.theta.shape[1]
        yield [self.rep, 0, "", "", "", ""] + [repr(float(x)) for x in self.theta[0]]
        for s in range(1, self.rounds + 1):
            i = s - 1
            yield ([self.rep, s, int(self.active_count[i]), repr(float(self.alpha[i])),
                    repr(float(self.beta[i])), repr(float(self.beta_tilde[i]))]
                   + [repr(float(self.theta[s, j])) for j in range(m)])

    @staticmethod
    def header(m):
        return ["rep", "s", "K_a", "alpha", "beta", "beta_tilde"] + [f"theta_{j}" for j in range(m)]

    def to_csv(self, path):
        write_traces(path, [self])


def write_traces(path, traces):
    """Write several traces to one CSV, in the given order."""
    traces = list(traces)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RunTrace.header(traces[0].theta.shape[1]))
        for tr in traces:
            w.writerows(tr.rows())


def lmc_step(theta, grad, eta, rng):
    """``theta - eta * grad + sqrt(2 eta) * xi`` with ``xi ~ N(0, I)``."""
    theta = np.asarray(theta, dtype=float)
    return theta - eta * np.asarray(grad, dtype=float) + math.sqrt(2.0 * eta) * rng.standard_normal(theta.shape)


def _cap_ratio_sq(eta, N0, K, K_a, alpha):
    # (cap / alpha)^2 with cap = (K / K_a) sqrt(eta N0 / 2); the channel noise
    # variance on theta equals 2 eta times this ratio
    if K_a < 1:
        raise SchedulingError("K_a must be at least 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    cap = (K / K_a) * math.sqrt(eta * N0 / 2.0)
    return (cap / alpha) ** 2


def beta_variance(eta, N0, K, K_a, alpha):
    """Server noise variance ``max(0, 2 eta - eta^2 N0 K^2 / (alpha K_a)^2)``."""
    r = _cap_ratio_sq(eta, N0, K, K_a, alpha)
    return max(0.0, 2.0 * eta * (1.0 - r))


def excess_variance(eta, N0, K, K_a, alpha):
    """Surplus gradient-noise variance ``max(0, N0 K^2 / (alpha K_a)^2 - 2 / eta)``.

    Evaluated as ``(2 / eta) ((cap / alpha)^2 - 1)`` so that it is exactly
    zero at ``alpha = cap``.
    """
    r = _cap_ratio_sq(eta, N0, K, K_a, alpha)
    return max(0.0, (2.0 / eta) * (r - 1.0))


def device_noise_variances(eta, K, sigma):
    """``(beta, beta_tilde)`` when devices add ``N(0, sigma)`` over an ideal channel.

    The aggregate noise has variance ``K sigma`` before scaling by ``eta``.
    """
    total = K * sigma
    return max(0.0, 2.0 * eta - eta ** 2 * total), max(0.0, total - 2.0 / eta)


def wflmc_round(theta, model, gains, alpha, threshold, eta, ell, N0, rng, power_budget=None,
                z=None, q=None):
    """One federated round over the multiple-access channel.

    Parameters
    ----------
    theta : ndarray, shape (m,)
    model : GaussianLinRegModel or MultinomialLogRegModel
    gains : ndarray, shape (K,)
        Channel magnitudes of this round.
    alpha, threshold : float
        Power gain and scheduling threshold.
    eta, ell, N0 : float
    rng : numpy.random.Generator
        Used only for the noise vectors not supplied through ``z``, ``q``.
    power_budget : float, optional
        When given, every scheduled device is power-checked.

    Returns
    -------
    theta_new : ndarray
    diag : RoundDiagnostics
    """
    theta = np.asarray(theta, dtype=float)
    K = model.num_devices
    grads = clip_gradient(model.local_gradients(theta), ell)
    y, decision = aircomp_round(grads, alpha, gains, threshold, N0, rng, ell=ell,
                                power_budget=power_budget, noise=z)
    K_a = decision.active_count
    if K_a == 0:
        raise SchedulingError(f"no device reaches threshold {threshold}")
    beta = beta_variance(eta, N0, K, K_a, alpha)
    bt = excess_variance(eta, N0, K, K_a, alpha)
    if q is None:
        q = rng.standard_normal(theta.shape)
    new = theta - eta * K / (alpha * K_a) * y + math.sqrt(beta) * q
    return new, RoundDiagnostics(K_a, beta, bt)


def noiseless_round(theta, model, sigma, eta, ell, rng, z=None, q=None):
    """Federated round over an ideal channel where each device adds ``N(0, sigma I)``."""
    theta = np.asarray(theta, dtype=float)
    K = model.num_devices
    grads = clip_gradient(model.local_gradients(theta), ell)
    if z is None:
        z = rng.standard_normal(theta.shape)
    if q is None:
        q = rng.standard_normal(theta.shape)
    beta, bt = device_noise_variances(eta, K, sigma)
    new = theta - eta * (grads.sum(axis=0) + math.sqrt(K * sigma) * z) + math.sqrt(beta) * q
    return new, RoundDiagnostics(K, beta, bt)


# ---------------------------------------------------------------------------
# Exact Langevin diffusion for quadratic costs
# ---------------------------------------------------------------------------


def _spd_eigh(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("A must be symmetric")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    if w[0] <= 0:
        raise ValueError(f"A must be positive definite, smallest eigenvalue {w[0]:.3g}")
    return w, V


def ou_transition(A, b, t):
    """Transition of ``d theta = -(A theta - b) dt + sqrt(2) dB`` over time ``t``.

    Returns ``(mode, M, C)`` such that
    ``theta_t | theta_0 ~ N(mode + M (theta_0 - mode), C)``.
    """
    if t < 0:
        raise ValueError("duration must be nonnegative")
    w, V = _spd_eigh(A)
    mode = V @ ((V.T @ np.asarray(b, dtype=float)) / w)
    M = (V * np.exp(-w * t)) @ V.T
    C = (V * (-np.expm1(-2.0 * w * t) / w)) @ V.T
    return mode, M, 0.5 * (C + C.T)


def ou_exact_step(A, b, theta, t, rng):
    """Sample the Langevin diffusion of ``0.5 theta^T A theta - b^T theta`` after time ``t``.

    ``theta`` may be a single vector or an (n, m) batch.
    """
    w, V = _spd_eigh(A)
    theta = np.asarray(theta, dtype=float)
    mode = V @ ((V.T @ np.asarray(b, dtype=float)) / w)
    decay = np.exp(-w * t)
    sd = np.sqrt(-np.expm1(-2.0 * w * t) / w)
    xi = rng.standard_normal(theta.shape)
    # work in the eigenbasis where the coordinates decouple
    x = (theta - mode) @ V
    x = decay * x + sd * xi
    return mode + x @ V.T


def estimate_discretization_error(A, b, eta, n_traj, rng, n_fine=256):
    """Monte Carlo estimate of ``E || int_0^eta grad f(theta_t) - grad f(theta_0) dt ||^2``.

    The diffusion starts from its stationary law ``N(A^-1 b, A^-1)`` and is
    sampled exactly on a grid of ``n_fine`` sub-steps; the time integral uses
    the trapezoid rule.

    Returns
    -------
    mean, stderr : float
    """
    w, V = _spd_eigh(A)
    m = w.shape[0]
    h = eta / n_fine
    decay = np.exp(-w * h)
    sd = np.sqrt(-np.expm1(-2.0 * w * h) / w)
    # eigen-coordinates of theta - mode; grad f = A theta - b = V diag(w) x
    x = rng.standard_normal((n_traj, m)) / np.sqrt(w)
    x0 = x.copy()
    integral = 0.5 * x
    for i in range(n_fine):
        x = decay * x + sd * rng.standard_normal((n_traj, m))
        integral += x if i < n_fine - 1 else 0.5 * x
    integral *= h
    nd = w * (integral - eta * x0)
    sq = np.einsum("ij,ij->i", nd, nd)
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_traj))


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def rep_streams(seed, rep, count=3):
    """Independent generators for repetition ``rep`` (initial draw, channel noise, server noise)."""
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2, rep, i))))
            for i in range(count)]


def draw_noise(seed, rep, rounds, model):
    """Common random numbers ``(theta0, z, q)`` for one repetition.

    Every policy run on the same ``(seed, rep)`` consumes these same arrays,
    which pairs policy comparisons.
    """
    g0, gz, gq = rep_streams(seed, rep)
    prior = model.prior()
    chol = np.linalg.cholesky(prior.cov)
    theta0 = prior.mean + chol @ g0.standard_normal(model.dim)
    z = gz.standard_normal((rounds, model.dim))
    q = gq.standard_normal((rounds, model.dim))
    return theta0, z, q


def _round_schedule(policy, channel, model, eta, ell):
    """Per-round scalars ``(active, grad_scale, noise_scale, sqrt_beta, K_a, beta, beta_tilde)``."""
    S = channel.rounds
    K = model.num_devices
    alphas = np.asarray(policy.alphas, dtype=float)
    if alphas.shape != (S,):
        raise ValueError(f"policy has {alphas.shape[0]} rounds, channel has {S}")
    N0 = channel.noise_power
    sigma = getattr(policy, "device_noise", None)
    grad_scale = np.full(S, eta)
    noise_scale = np.zeros(S)
    beta = np.zeros(S)
    bt = np.zeros(S)
    if sigma is not None:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (S,))
        active = np.ones((S, K), dtype=bool)
        K_a = np.full(S, K)
        for s in range(S):
            noise_scale[s] = eta * math.sqrt(K * sigma[s])
            beta[s], bt[s] = device_noise_variances(eta, K, sigma[s])
        return active, grad_scale, noise_scale, np.sqrt(beta), K_a, beta, bt
    thresholds = np.asarray(policy.thresholds, dtype=float)
    active = (channel.gains >= thresholds[None, :]).T
    K_a = active.sum(axis=1)
    P = channel.power_budget
    for s in range(S):
        if K_a[s] == 0:
            raise SchedulingError(f"round {s + 1}: no device reaches threshold {thresholds[s]}")
        if not alphas[s] > 0:
            raise ValueError(f"round {s + 1}: alpha must be positive")
        if math.isfinite(P):
            g_min = channel.gains[active[s], s].min()
            if not check_power(alphas[s], ell, g_min, P):
                raise PowerViolationError(f"round {s + 1}: alpha = {alphas[s]!r} exceeds the power budget")
        grad_scale[s] = eta * K / K_a[s]
        noise_scale[s] = eta * K * math.sqrt(N0) / (alphas[s] * K_a[s])
        beta[s] = beta_variance(eta, N0, K, K_a[s], alphas[s])
        bt[s] = excess_variance(eta, N0, K, K_a[s], alphas[s])
    return active, grad_scale, noise_scale, np.sqrt(beta), K_a, beta, bt


def run_wflmc(config, policy, channel, model, ell, rep=0, noise=None):
    """Run ``S = S_b + S_u`` rounds of the federated sampler.

    Parameters
    ----------
    config : SamplerConfig
    policy
        Object with ``alphas`` and ``thresholds`` (over-the-air policy) or
        ``device_noise`` (ideal channel with device-side noise).
    channel : ChannelTrace
    model : GaussianLinRegModel or MultinomialLogRegModel
    ell : float
        Clipping radius.
    rep : int
        Repetition index; selects the random substreams.
    noise : tuple, optional
        Pre-drawn ``(theta0, z, q)``; defaults to ``draw_noise(config.seed, rep, ...)``.

    Returns
    -------
    RunTrace
    """
    S = config.rounds
    if channel.rounds != S:
        raise ValueError(f"channel covers {channel.rounds} rounds, config needs {S}")
    active, gs, ns, sb, K_a, beta, bt = _round_schedule(policy, channel, model, config.eta, ell)
    if noise is None:
        noise = draw_noise(config.seed, rep, S, model)
    theta0, z, q = noise
    alphas = np.asarray(policy.alphas, dtype=float)
    if isinstance(model, GaussianLinRegModel):
        A, b = model.quadratic_terms()
        theta = _kernels.run_chain(A, b, active, gs, ns, sb, ell, theta0, z, q)
    else:
        theta = np.empty((S + 1, model.dim))
        theta[0] = theta0
        for s in range(S):
            G = clip_gradient(model.local_gradients(theta[s]), ell)
            agg = G[active[s]].sum(axis=0)
            theta[s + 1] = theta[s] - gs[s] * agg - ns[s] * z[s] + sb[s] * q[s]
            if not np.all(np.isfinite(theta[s + 1])):
                raise FloatingPointError(f"round {s + 1}: iterate is not finite")
    return RunTrace(theta, K_a, alphas, beta, bt, config.burn_in, rep)


def _run_one(args):
    return run_wflmc(*args)


def run_repetitions(config, policy, channel, model, ell, reps, jobs=1):
    """Run ``reps`` independent repetitions, in parallel when ``jobs > 1``.

    Results are returned in repetition order, so the output does not depend
    on ``jobs``.
    """
    tasks = [(config, policy, channel, model, ell, r) for r in range(reps)]
    if jobs <= 1 or reps <= 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_one, tasks))
