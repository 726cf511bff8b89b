"""Power control and scheduling for the over-the-air federated sampler.

Working with ``a_s = alpha_s^2`` every piece of the Wasserstein bound is
affine in ``1 / a_s`` once ``a_s`` is kept below the noise-repurposing cap
``a_lmc = eta N0 K^2 / (2 K_a^2)``:

    eta^2 beta_tilde_s = c_s / a_s - 2 eta,   c_s = eta^2 N0 K^2 / K_a^2.

The privacy constraint of device ``k`` reads
``sum_{s: k active} a_s <= N0 R_dp / (2 ell^2)``, the power constraint is a
per-round upper bound ``a_s <= P h_min^2 / ell^2``. The resulting program is
convex; its single-sample, constant-channel case has the closed form
implemented in :func:`single_sample_policy`.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds
from .channel import ChannelTrace, SchedulingError
from .privacy import DpBudget, per_round_loss
from .sampler import device_noise_variances, excess_variance

log = logging.getLogger(__name__)

LMC_LIMITED = "LMC-limited"
POWER_LIMITED = "power-limited"
DP_LIMITED = "DP-limited"
BASELINE = "baseline"

BASELINE_KINDS = ("equal", "no_dp", "noiseless_dp", "noiseless_no_dp")


class OptimizationError(RuntimeError):
    """The solver did not reach the requested accuracy.

    Attributes
    ----------
    best : ndarray or None
        Best feasible iterate found (as ``alpha``).
    residual : float
    """

    def __init__(self, msg, best=None, residual=float("nan")):
        super().__init__(f"{msg} (residual {residual:.3g})")
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class PowerPolicy:
    """Per-round power gains ``alpha`` and scheduling thresholds ``g``.

    ``device_noise`` is set only for the ideal-channel baselines, where each
    device adds ``N(0, sigma_s I)`` and ``alphas`` holds the equivalent gain
    ``sqrt(N0 / (K sigma_s))``.
    """

    alphas: np.ndarray
    thresholds: np.ndarray
    regimes: tuple
    kind: str = "optimized"
    device_noise: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        g = np.asarray(self.thresholds, dtype=float)
        if a.ndim != 1 or a.shape != g.shape or len(self.regimes) != a.shape[0]:
            raise ValueError("alphas, thresholds and regimes must have one entry per round")
        if np.any(a < 0) or np.any(g < 0):
            raise ValueError("alphas and thresholds must be nonnegative")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "thresholds", g)
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if self.device_noise is not None:
            object.__setattr__(self, "device_noise", np.asarray(self.device_noise, dtype=float))

    @property
    def rounds(self):
        return self.alphas.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "alpha", "g", "regime", "kind", "sigma"])
            for s in range(self.rounds):
                sig = "" if self.device_noise is None else repr(float(self.device_noise[s]))
                w.writerow([s + 1, repr(float(self.alphas[s])), repr(float(self.thresholds[s])),
                            self.regimes[s], self.kind, sig])

    @classmethod
    def from_csv(cls, path):
        alphas, gs, regimes, sig = [], [], [], []
        kind = "optimized"
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                alphas.append(float(row["alpha"]))
                gs.append(float(row["g"]))
                regimes.append(row["regime"])
                kind = row.get("kind") or kind
                if row.get("sigma"):
                    sig.append(float(row["sigma"]))
        noise = np.array(sig) if sig else None
        return cls(np.array(alphas), np.array(gs), tuple(regimes), kind, noise)


@dataclass(frozen=True)
class OptProblem:
    """One instance of the power-allocation program.

    ``budget`` is a :class:`DpBudget` or directly the scalar ``R_dp`` (which
    may be ``inf`` to drop the privacy constraint).
    """

    channel: ChannelTrace
    budget: object
    eta: float
    mu: float
    L: float
    ell: float
    dim: int
    w2_init_sq: float
    burn_in: int
    samples: int
    tight: bool = False
    objective: str = "max"

    def __post_init__(self):
        if self.burn_in + self.samples != self.channel.rounds:
            raise ValueError(f"S_b + S_u = {self.burn_in + self.samples} but channel has {self.channel.rounds} rounds")
        if self.samples < 1:
            raise ValueError("need at least one retained sample")
        if self.objective not in ("max", "mean"):
            raise ValueError("objective must be 'max' or 'mean'")
        if not self.ell > 0:
            raise ValueError("ell must be positive")
        bounds.gamma(self.eta, self.mu, self.L)

    @property
    def K(self):
        return self.channel.num_devices

    @property
    def rounds(self):
        return self.channel.rounds

    @property
    def N0(self):
        return self.channel.noise_power

    @property
    def P(self):
        return self.channel.power_budget

    @property
    def r_dp(self):
        if isinstance(self.budget, DpBudget):
            return self.budget.r_dp
        return float(self.budget)

    @property
    def dp_energy(self):
        """Budget on ``sum_s a_s`` per device, ``N0 R_dp / (2 ell^2)``."""
        return self.N0 * self.r_dp / (2.0 * self.ell ** 2)

    @property
    def gamma(self):
        return bounds.gamma(self.eta, self.mu, self.L)


@dataclass
class SolverInfo:
    """Diagnostics of :func:`multi_sample_policy`."""

    method: str
    iterations: int = 0
    residual: float = 0.0
    objective: float = float("nan")
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Caps and regimes
# ---------------------------------------------------------------------------


def lmc_cap(eta, N0, K, K_a):
    """Largest gain whose channel noise still fits into the LMC noise, ``(K / K_a) sqrt(eta N0 / 2)``."""
    if K_a < 1:
        raise SchedulingError("K_a must be at least 1")
    return (K / K_a) * math.sqrt(eta * N0 / 2.0)


def power_cap(P, h_min, ell):
    """``sqrt(P) h_min / ell``; infinite without a power budget."""
    if math.isinf(P):
        return math.inf
    return math.sqrt(P) * h_min / ell


def classify_regime(P, eta, h_min, r_dp, S, K, K_a, ell, N0):
    """Which constraint pins the optimal gain for a static channel.

    Parameters
    ----------
    P, eta : float
    h_min : float
        Smallest magnitude among the scheduled devices.
    r_dp : float
    S : int
        Number of rounds that matter, ``S_b + 1``.
    K, K_a : int
    ell, N0 : float

    Returns
    -------
    str
        ``"LMC-limited"``, ``"power-limited"`` or ``"DP-limited"``. A point on
        the LMC/power boundary (both caps equal) is reported as LMC-limited.
    """
    a_lmc = eta * N0 * K ** 2 / (2.0 * K_a ** 2)
    a_pow = math.inf if math.isinf(P) else P * h_min ** 2 / ell ** 2
    budget = N0 * r_dp / (2.0 * ell ** 2)
    if S * a_lmc <= budget and a_lmc <= a_pow:
        return LMC_LIMITED
    if S * a_pow <= budget and a_pow <= a_lmc:
        return POWER_LIMITED
    return DP_LIMITED


def _static_instance(problem, threshold):
    ch = problem.channel
    if not ch.is_constant():
        raise ValueError("the closed-form policy needs a channel that is constant over rounds")
    gains = ch.column(0)
    mask = gains >= threshold
    K_a = int(mask.sum())
    if K_a == 0:
        raise SchedulingError(f"no device reaches threshold {threshold}")
    return K_a, float(gains[mask].min())


def classify_problem(problem, threshold=None):
    """:func:`classify_regime` for a constant-channel :class:`OptProblem`."""
    if threshold is None:
        threshold = _default_thresholds(problem)[0]
    K_a, h_min = _static_instance(problem, threshold)
    return classify_regime(problem.P, problem.eta, h_min, problem.r_dp, problem.burn_in + 1,
                           problem.K, K_a, problem.ell, problem.N0)


# ---------------------------------------------------------------------------
# Threshold search
# ---------------------------------------------------------------------------


def threshold_objective(gains, g, P, ell, eta, N0, K):
    """Per-round error of scheduling with threshold ``g`` at full power."""
    gains = np.asarray(gains, dtype=float)
    mask = gains >= g
    K_a = int(mask.sum())
    if K_a == 0:
        return math.inf, 0
    h_min = float(gains[mask].min())
    bias = 4.0 * ell ** 2 * (K - K_a) ** 2
    if math.isinf(P):
        return bias, K_a
    if h_min == 0:
        return math.inf, K_a
    excess = N0 * K ** 2 * ell ** 2 / (P * K_a ** 2 * h_min ** 2) - 2.0 / eta
    return bias + max(0.0, excess), K_a


def threshold_search(gains, P, ell, eta, N0, K=None):
    """Threshold among the positive magnitudes minimizing the full-power round error.

    Ties go to the candidate with more scheduled devices.
    """
    gains = np.asarray(gains, dtype=float)
    if K is None:
        K = gains.shape[0]
    cands = np.unique(gains[gains > 0])
    if cands.size == 0:
        raise SchedulingError("all channel gains are zero")
    best_g, best_val, best_ka = None, math.inf, -1
    for g in cands:
        val, K_a = threshold_objective(gains, g, P, ell, eta, N0, K)
        if val < best_val or (val == best_val and K_a > best_ka):
            best_g, best_val, best_ka = float(g), val, K_a
    return best_g


def _default_thresholds(problem):
    ch = problem.channel
    return np.array([threshold_search(ch.column(s), problem.P, problem.ell, problem.eta, problem.N0, problem.K)
                     for s in range(problem.rounds)])


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _schedule(problem, thresholds):
    """Active mask (K, S), ``K_a`` (S,) and per-round cap on ``a`` for LMC and power."""
    ch = problem.channel
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.shape != (problem.rounds,):
        raise ValueError("need one threshold per round")
    mask = ch.gains >= thresholds[None, :]
    K_a = mask.sum(axis=0)
    if np.any(K_a == 0):
        s = int(np.flatnonzero(K_a == 0)[0])
        raise SchedulingError(f"round {s + 1}: no device reaches threshold {thresholds[s]}")
    K = problem.K
    a_lmc = problem.eta * problem.N0 * K ** 2 / (2.0 * K_a.astype(float) ** 2)
    if math.isinf(problem.P):
        a_pow = np.full(problem.rounds, math.inf)
    else:
        h_min = np.where(mask, ch.gains, np.inf).min(axis=0)
        a_pow = problem.P * h_min ** 2 / problem.ell ** 2
    return mask, K_a, a_lmc, a_pow


def policy_bound_inputs(problem, policy):
    """:class:`bounds.BoundInputs` describing ``policy`` on ``problem``."""
    S, K = problem.rounds, problem.K
    if policy.device_noise is not None:
        sig = np.broadcast_to(policy.device_noise, (S,))
        K_a = np.full(S, K)
        bt = np.array([device_noise_variances(problem.eta, K, x)[1] for x in sig])
    else:
        _, K_a, _, _ = _schedule(problem, policy.thresholds)
        bt = np.array([excess_variance(problem.eta, problem.N0, K, int(K_a[s]), policy.alphas[s])
                       for s in range(S)])
    return bounds.BoundInputs(problem.eta, problem.mu, problem.L, problem.ell, problem.dim, K,
                              problem.w2_init_sq, K_a, bt, problem.tight)


def bound_curve(problem, policy):
    """Wasserstein bound at every round ``0 .. S`` under ``policy``."""
    return bounds.w2_bound_curve(policy_bound_inputs(problem, policy))


def policy_objective(problem, policy):
    """Worst (or mean) bound over the retained rounds ``S_b + 1 .. S``."""
    curve = bound_curve(problem, policy)[problem.burn_in + 1:]
    return float(curve.max() if problem.objective == "max" else curve.mean())


def _pack(problem, thresholds, alphas, regimes, kind="optimized"):
    return PowerPolicy(np.asarray(alphas, dtype=float), np.asarray(thresholds, dtype=float), tuple(regimes), kind)


def _fit_budget(problem, thresholds, alphas, free):
    """Shrink the gains of the ``free`` rounds until the accounted loss is within budget.

    The solvers meet the budget in ``a = alpha^2``; squaring the square root
    and summing can overshoot by a few ulps, which this removes.
    """
    alphas = alphas.copy()
    r_dp = problem.r_dp
    if not math.isfinite(r_dp):
        return alphas
    probe = PowerPolicy(alphas, thresholds, ("",) * len(alphas))
    for _ in range(64):
        loss = per_round_loss(probe, problem.channel, problem.ell).sum(axis=1).max()
        if loss <= r_dp:
            return alphas
        sel = free if np.any(free) else np.ones_like(free)
        alphas[sel] *= min(1.0 - 2.0 ** -50, math.sqrt(r_dp / loss))
        probe = PowerPolicy(alphas, thresholds, probe.regimes)
    raise OptimizationError("could not meet the privacy budget", best=alphas, residual=loss / r_dp - 1.0)


# ---------------------------------------------------------------------------
# Single retained sample over a static channel
# ---------------------------------------------------------------------------


def _waterfill(r, cap, budget):
    """Solve ``sum_s min(r_s t, cap) = budget`` for ``t > 0``.

    Requires ``len(r) * cap > budget``. Exact up to round-off: the left side
    is piecewise linear in ``t`` with breakpoints ``cap / r_s``.
    """
    order = np.argsort(-r, kind="stable")
    rs = r[order]
    tail = np.cumsum(rs[::-1])[::-1]
    for n in range(len(r)):
        # n largest r are capped
        t = (budget - n * cap) / tail[n]
        if t <= 0:
            continue
        if (n == 0 or rs[n - 1] * t >= cap) and rs[n] * t <= cap:
            return t
    raise OptimizationError("water-filling found no consistent breakpoint", residual=math.nan)


def single_sample_policy(problem, threshold=None):
    """Closed-form optimal gains for one retained sample on a constant channel.

    Returns
    -------
    PowerPolicy
        Gains for all ``S`` rounds; the regime label is the same for every
        round.
    """
    if problem.samples != 1:
        raise ValueError("single_sample_policy needs S_u = 1")
    if not problem.N0 > 0:
        raise ValueError("the channel noise power must be positive")
    if threshold is None:
        threshold = _default_thresholds(problem)[0]
    K_a, h_min = _static_instance(problem, threshold)
    S, K, eta, N0, ell = problem.rounds, problem.K, problem.eta, problem.N0, problem.ell
    regime = classify_regime(problem.P, eta, h_min, problem.r_dp, S, K, K_a, ell, N0)
    alpha_lmc = lmc_cap(eta, N0, K, K_a)
    alpha_pow = power_cap(problem.P, h_min, ell)
    thresholds = np.full(S, float(threshold))
    if regime == LMC_LIMITED:
        alphas = np.full(S, alpha_lmc)
    elif regime == POWER_LIMITED:
        alphas = np.full(S, alpha_pow)
    else:
        rho = (1.0 + problem.gamma) / 2.0
        s = np.arange(1, S + 1)
        # a_s = min(r_s / sqrt(lambda), cap) with r_s proportional to rho^-s
        r = rho ** (S - s)
        a_cap = min(alpha_lmc, alpha_pow) ** 2
        t = _waterfill(r, a_cap, problem.dp_energy)
        a = np.minimum(r * t, a_cap)
        # rescale the uncapped part so the budget holds to round-off
        free = a < a_cap
        if np.any(free):
            a[free] *= (problem.dp_energy - a_cap * (~free).sum()) / a[free].sum()
        alphas = np.sqrt(a)
        alphas[~free] = min(alpha_lmc, alpha_pow)
        alphas = _fit_budget(problem, thresholds, alphas, free)
    return _pack(problem, thresholds, alphas, [regime] * S)


# ---------------------------------------------------------------------------
# General multi-round program
# ---------------------------------------------------------------------------


def _program(problem, thresholds):
    """Coefficients of the program in ``x_s = a_s / cap_s``.

    Returns ``(const, A, cap, M, B, regime_cap)`` with the bound rows
    ``F_j(x) = const_j + sum_s A_js / x_s`` and device constraints
    ``M @ (cap * x) <= B``.
    """
    mask, K_a, a_lmc, a_pow = _schedule(problem, thresholds)
    S, K, eta = problem.rounds, problem.K, problem.eta
    g = problem.gamma
    rho2 = ((1.0 + g) / 2.0) ** 2
    kappa = bounds.error_factor(g, problem.tight)
    cap = np.minimum(a_lmc, a_pow)
    c = eta ** 2 * problem.N0 * K ** 2 / K_a.astype(float) ** 2
    base = (bounds.discretization_error_bound(eta, problem.L, problem.dim)
            + eta ** 2 * 4.0 * problem.ell ** 2 * (K - K_a.astype(float)) ** 2 - 2.0 * eta)
    rows = np.arange(problem.burn_in + 1, S + 1)
    s = np.arange(1, S + 1)
    expo = rows[:, None] - s[None, :]
    W = np.where(expo >= 0, kappa * rho2 ** np.clip(expo, 0, None), 0.0)
    const = rho2 ** rows * problem.w2_init_sq + W @ base
    A = W * (c / cap)[None, :]
    if problem.objective == "mean":
        const = np.array([const.mean()])
        A = A.mean(axis=0, keepdims=True)
    # one constraint per distinct activity pattern
    M = np.unique(mask.astype(float), axis=0)
    M = M[M.sum(axis=1) > 0]
    regime_cap = np.where(a_lmc <= a_pow, LMC_LIMITED, POWER_LIMITED)
    return const, A, cap, M, problem.dp_energy, regime_cap


def _barrier_solve(const, A, cap, M, B, tol=1e-12, max_newton=2000):
    """Minimize ``max_j F_j(x)`` over ``M @ (cap x) <= B``, ``0 < x <= 1``.

    Log-barrier interior-point method on the epigraph variables ``(x, nu)``
    with damped Newton centering steps.
    """
    J, S = A.shape
    scale = max(float(np.max(const + A.sum(axis=1))), 1e-300)
    const = const / scale
    A = A / scale
    Mc = M * cap[None, :]
    # strictly feasible start
    load = Mc.sum(axis=1)
    x = np.full(S, 0.5 * min(1.0, float(np.min(B / load))) if load.size else 0.5)
    F = const + A @ (1.0 / x)
    nu = F.max() + 0.1 * abs(F.max()) + 1e-3
    n_barrier = J + Mc.shape[0] + 2 * S
    t = 1.0
    history = []
    newton = 0

    def phi(x, nu, t):
        d = nu - (const + A @ (1.0 / x))
        e = B - Mc @ x
        if np.any(d <= 0) or np.any(e <= 0) or np.any(x <= 0) or np.any(x >= 1):
            return math.inf
        return t * nu - np.log(d).sum() - np.log(e).sum() - np.log(x).sum() - np.log1p(-x).sum()

    while True:
        for _ in range(200):
            inv = 1.0 / x
            F = const + A @ inv
            d = nu - F
            e = B - Mc @ x
            gF = -A * inv ** 2                      # (J, S) gradients of F_j
            gx = (gF / d[:, None]).sum(axis=0) + (Mc / e[:, None]).sum(axis=0) - inv + 1.0 / (1.0 - x)
            gnu = t - (1.0 / d).sum()
            H = np.empty((S + 1, S + 1))
            Hxx = (gF.T / d ** 2) @ gF + (Mc.T / e ** 2) @ Mc
            Hxx[np.diag_indices(S)] += (2.0 * A * inv ** 3 / d[:, None]).sum(axis=0) + inv ** 2 + 1.0 / (1.0 - x) ** 2
            H[:S, :S] = Hxx
            H[:S, S] = H[S, :S] = -(gF / d[:, None] ** 2).sum(axis=0)
            H[S, S] = (1.0 / d ** 2).sum()
            grad = np.append(gx, gnu)
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(-grad @ step)
            newton += 1
            if dec / 2.0 <= 1e-12:
                break
            f0 = phi(x, nu, t)
            h = 1.0
            while h > 1e-20:
                xn, nun = x + h * step[:S], nu + h * step[S]
                fn = phi(xn, nun, t)
                if fn <= f0 - 0.25 * h * dec:
                    break
                h *= 0.5
            else:
                break
            x, nu = xn, nun
            if newton >= max_newton:
                break
        gap = n_barrier / t
        F = const + A @ (1.0 / x)
        viol = max(0.0, float(np.max(Mc @ x - B)) if Mc.size else 0.0)
        history.append((newton, float(F.max() * scale), viol))
        log.debug("barrier t=%.3g newton=%d objective=%.12g violation=%.3g", t, newton, F.max() * scale, viol)
        if gap <= tol * max(abs(F.max()), 1e-300) or newton >= max_newton:
            break
        t *= 20.0
    residual = gap / max(abs(F.max()), 1e-300)
    return x, residual, newton, history


def _polish(x, cap, M, B, A):
    """Use leftover slack: raise ``x`` toward 1, most valuable rounds first, then restore feasibility."""
    x = x.copy()
    Mc = M * cap[None, :]
    value = A.sum(axis=0)
    for s in np.argsort(-value, kind="stable"):
        slack = B - Mc @ x
        rows = Mc[:, s] > 0
        room = np.min(slack[rows] / Mc[rows, s]) if np.any(rows) else math.inf
        if room > 0:
            x[s] = min(1.0, x[s] + room)
    used = Mc @ x
    over = used > B
    if np.any(over):
        x *= float(np.min(B / used[over]))
    return x


def multi_sample_policy(problem, thresholds=None, return_info=False, tol=1e-12):
    """Gains minimizing the worst (or mean) bound over the retained rounds.

    Parameters
    ----------
    problem : OptProblem
    thresholds : array_like, optional
        One per round; defaults to :func:`threshold_search` on each round.
    return_info : bool
        Also return a :class:`SolverInfo`.
    tol : float
        Target relative duality gap of the barrier method.
    """
    if not problem.N0 > 0:
        raise ValueError("the channel noise power must be positive")
    if thresholds is None:
        thresholds = _default_thresholds(problem)
    thresholds = np.asarray(thresholds, dtype=float)
    const, A, cap, M, B, regime_cap = _program(problem, thresholds)
    S = problem.rounds
    if M.size == 0 or np.all(M @ cap <= B):
        # every cap is affordable and the objective decreases in each a_s
        x = np.ones(S)
        info = SolverInfo("caps")
    else:
        x, residual, iters, hist = _barrier_solve(const, A, cap, M, B, tol=tol)
        if not residual <= 1e-6:
            raise OptimizationError("barrier method stalled", best=np.sqrt(cap * x), residual=residual)
        x = _polish(x, cap, M, B, A)
        info = SolverInfo("barrier", iters, residual, history=hist)
    alphas = np.sqrt(cap * x)
    capped = x >= 1.0
    # the LMC cap is computed in closed form so that beta_tilde vanishes exactly there
    mask, K_a, _, _ = _schedule(problem, thresholds)
    for s in np.flatnonzero(capped):
        if regime_cap[s] == LMC_LIMITED:
            alphas[s] = lmc_cap(problem.eta, problem.N0, problem.K, int(K_a[s]))
        else:
            h_min = problem.channel.gains[mask[:, s], s].min()
            alphas[s] = power_cap(problem.P, h_min, problem.ell)
    alphas = _fit_budget(problem, thresholds, alphas, ~capped)
    regimes = [str(regime_cap[s]) if capped[s] else DP_LIMITED for s in range(S)]
    policy = _pack(problem, thresholds, alphas, regimes)
    info.objective = policy_objective(problem, policy)
    return (policy, info) if return_info else policy


def optimize(problem, thresholds=None):
    """Closed form when it applies (one sample, static channel), else the convex program."""
    if problem.samples == 1 and problem.channel.is_constant() and problem.objective == "max":
        g = None if thresholds is None else float(np.asarray(thresholds)[0])
        return single_sample_policy(problem, g)
    return multi_sample_policy(problem, thresholds)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def baseline_policy(kind, problem, thresholds=None):
    """Reference schemes.

    ``equal``
        The privacy budget split evenly over each device's scheduled rounds.
    ``no_dp``
        Largest gain allowed by power and noise repurposing, ignoring privacy.
    ``noiseless_dp``
        Ideal channel; devices add noise matching the gains that are optimal
        without the power constraint.
    ``noiseless_no_dp``
        Ideal channel; devices add exactly the Langevin noise, ``2 / (K eta)``.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINE_KINDS}")
    S, K, N0, eta, ell = problem.rounds, problem.K, problem.N0, problem.eta, problem.ell
    if kind == "noiseless_no_dp":
        sigma = np.full(S, 2.0 / (K * eta))
        return PowerPolicy(np.full(S, math.sqrt(N0 * eta / 2.0)), np.zeros(S), (BASELINE,) * S, kind, sigma)
    if kind == "noiseless_dp":
        ideal = replace(problem, channel=ChannelTrace(np.ones((K, S)), N0, math.inf))
        a = optimize(ideal, np.zeros(S)).alphas
        sigma = N0 / (K * a ** 2)
        return PowerPolicy(a, np.zeros(S), (BASELINE,) * S, kind, sigma)
    if thresholds is None:
        thresholds = _default_thresholds(problem)
    thresholds = np.asarray(thresholds, dtype=float)
    mask, K_a, _, _ = _schedule(problem, thresholds)
    gains = problem.channel.gains
    alphas = np.empty(S)
    counts = mask.sum(axis=1)
    for s in range(S):
        h_min = gains[mask[:, s], s].min()
        a = min(lmc_cap(eta, N0, K, int(K_a[s])), power_cap(problem.P, h_min, ell))
        if kind == "equal":
            n = counts[mask[:, s]].max()
            a = min(a, math.sqrt(N0 * problem.r_dp / (2.0 * n)) / ell)
        alphas[s] = a
    return PowerPolicy(alphas, thresholds, (BASELINE,) * S, kind)
