"""Acceptance suite: one test per criterion, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary (see
``conftest.py``). Run alone with ``pytest tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest
from scipy import ndimage

from helpers import make_problem
from wflmc.channel import ChannelTrace, aircomp_round
from wflmc.experiments import scenarios
from wflmc.experiments.cli import main as cli_main
from wflmc.experiments.config import ScenarioConfig
from wflmc.experiments.data import generate_synthetic
from wflmc.metrics import empirical_moments, gaussian_w2_sq
from wflmc.model import GaussianDist, GaussianLinRegModel, clip_gradient
from wflmc.optimizer import (DP_LIMITED, LMC_LIMITED, POWER_LIMITED, OptProblem, baseline_policy, classify_problem,
                             multi_sample_policy, optimize, policy_bound_inputs, policy_objective,
                             single_sample_policy, threshold_objective, threshold_search)
from wflmc.privacy import c_function, c_inverse, dp_budget, per_round_loss, verify_dp
from wflmc.sampler import SamplerConfig, draw_noise, estimate_discretization_error, excess_variance, run_repetitions

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def _random_static_problem(rng, S, samples):
    """Constant-channel instance whose budget and power are scaled around the LMC cap."""
    K = int(rng.integers(2, 11))
    gains = rng.uniform(0.2, 1.0, K)
    mu = rng.uniform(0.5, 2.0)
    L = mu * rng.uniform(1.0, 8.0)
    eta = rng.uniform(0.05, 0.95) * 2.0 / (mu + L)
    ell = rng.uniform(0.5, 3.0)
    N0 = rng.uniform(0.5, 2.0)
    a_lmc = eta * N0 / 2.0
    P = a_lmc * ell ** 2 / gains.min() ** 2 * 10 ** rng.uniform(-1.5, 1.0)
    energy = S * a_lmc * 10 ** rng.uniform(-2.0, 0.5)
    ch = ChannelTrace(np.tile(gains[:, None], (1, S)), N0, P)
    return OptProblem(ch, 2 * ell ** 2 * energy / N0, eta, mu, L, ell, int(rng.integers(1, 6)),
                      rng.uniform(0.1, 10.0), S - samples, samples)


def _oracle_objective(p, g, a):
    """Worst bound over retained rounds for squared gains ``a[..., S]``, evaluated from scratch."""
    gains = p.channel.gains[:, 0]
    K, K_a = p.K, int((gains >= g).sum())
    eta, L, m = p.eta, p.L, p.dim
    gam = 1 - eta * p.mu if eta <= 2 / (p.mu + L) else eta * L - 1
    rho2 = ((1 + gam) / 2) ** 2
    kap = 2 * (1 + gam) / (1 - gam)
    e = (eta ** 4 * L ** 3 * m / 3 + eta ** 3 * L ** 2 * m + eta ** 2 * 4 * p.ell ** 2 * (K - K_a) ** 2
         + eta ** 2 * np.maximum(0.0, p.N0 * K ** 2 / (a * K_a ** 2) - 2 / eta))
    v = np.full(a.shape[:-1], p.w2_init_sq)
    worst = np.full(a.shape[:-1], -np.inf)
    for s in range(p.rounds):
        v = rho2 * v + kap * e[..., s]
        if s >= p.burn_in:
            worst = np.maximum(worst, v)
    return worst


def _grid_oracle(p, g, n, zooms):
    """Brute-force minimum over ``0 < a_s <= P h_min^2 / ell^2`` with ``sum_s a_s <= DP energy``.

    Starts from a geometric grid and zooms into the best cell.
    """
    gains = p.channel.gains[:, 0]
    h_min = gains[gains >= g].min()
    B = p.dp_energy
    hi = min(p.P * h_min ** 2 / p.ell ** 2, B)
    axes = [np.geomspace(hi * 1e-9, hi, n)] * p.rounds
    best = math.inf
    for _ in range(zooms + 1):
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = np.where(mesh.sum(axis=-1) <= B, _oracle_objective(p, g, mesh), np.inf)
        i = np.unravel_index(np.argmin(vals), vals.shape)
        best = min(best, float(vals[i]))
        axes = [np.linspace(ax[max(j - 2, 0)], min(ax[min(j + 2, n - 1)], hi), n) for ax, j in zip(axes, i)]
    return best


def _bisect_c_inverse(y):
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.sqrt(math.pi) * mid * math.exp(mid * mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def test_c01_closed_form_matches_grid_oracle():
    """Single- and multi-sample solvers reach the brute-force optimum."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for _ in range(20):
        p = _random_static_problem(rng, 2, 1)
        g = threshold_search(p.channel.gains[:, 0], p.P, p.ell, p.eta, p.N0)
        pol = single_sample_policy(p, g)
        got = policy_objective(p, pol)
        assert got == pytest.approx(float(_oracle_objective(p, g, pol.alphas ** 2)), rel=1e-12)
        want = _grid_oracle(p, g, 801, 8)
        assert abs(got - want) <= 1e-4 * want
    for _ in range(10):
        p = _random_static_problem(rng, 3, 2)
        g = threshold_search(p.channel.gains[:, 0], p.P, p.ell, p.eta, p.N0)
        got = policy_objective(p, multi_sample_policy(p, np.full(3, g)))
        want = _grid_oracle(p, g, 101, 10)
        assert abs(got - want) <= 1e-3 * want
    assert time.perf_counter() - t0 < 120


def test_c02_regime_equalities():
    """LMC-limited: bit-equal to the ideal no-DP bound; power-limited: full-power gain."""
    rng = np.random.default_rng(7)
    n_lmc = n_pow = 0
    for _ in range(200):
        p = _random_static_problem(rng, int(rng.integers(2, 30)), 1)
        regime = classify_problem(p)
        if regime == LMC_LIMITED:
            pol = optimize(p)
            assert np.all(policy_bound_inputs(p, pol).beta_tildes == 0.0)
            assert np.all(p.channel.gains[:, 0] >= pol.thresholds[0])
            assert policy_objective(p, pol) == policy_objective(p, baseline_policy("noiseless_no_dp", p))
            n_lmc += 1
        elif regime == POWER_LIMITED:
            pol = optimize(p)
            act = p.channel.gains[:, 0] >= pol.thresholds[0]
            want = math.sqrt(p.P) * p.channel.gains[act, 0].min() / p.ell
            assert np.all(pol.alphas == want)
            n_pow += 1
    for P in (1e4, 1e6, math.inf):
        p = make_problem(P=P)
        assert classify_problem(p) == LMC_LIMITED
        pol = optimize(p)
        assert np.all(policy_bound_inputs(p, pol).beta_tildes == 0.0)
        assert policy_objective(p, pol) == policy_objective(p, baseline_policy("noiseless_no_dp", p))
    assert n_lmc >= 5 and n_pow >= 5


def test_c03_privacy_accountant():
    """C^-1 round trips, the budget value, and every emitted policy within budget."""
    for y in (1.0, 1e3, 1e6, 1e12):
        assert abs(c_function(c_inverse(y)) - y) <= 1e-10 * y
    c = _bisect_c_inverse(1 / 0.01)
    oracle = (math.sqrt(8 + c * c) - c) ** 2
    assert abs(dp_budget(8.0, 0.01) - 2.341) <= 0.01
    assert dp_budget(8.0, 0.01) == pytest.approx(oracle, rel=1e-12)

    rng = np.random.default_rng(3)
    checked = 0
    for i in range(30):
        p = _random_static_problem(rng, int(rng.integers(2, 40)), 1)
        for pol in (optimize(p), baseline_policy("equal", p), baseline_policy("noiseless_dp", p)):
            loss = per_round_loss(pol, p.channel, p.ell).sum(axis=1)
            assert np.all(p.r_dp - loss >= -1e-8)
            checked += 1
    for seed in range(5):
        ch = ChannelTrace.rayleigh(10, 30, 0.01, 1.0, 500.0, np.random.default_rng(seed))
        p = make_problem(K=10, burn_in=25, samples=5, gains=ch.gains, epsilon=2.0)
        pol = multi_sample_policy(p)
        assert verify_dp(pol, p.channel, p.ell, p.budget).slack.min() >= -1e-8
    # closed form in the DP-limited regime spends the budget exactly
    for eps in (0.5, 2.0, 8.0):
        p = make_problem(P=1e4, epsilon=eps, burn_in=50)
        assert classify_problem(p) == DP_LIMITED
        led = verify_dp(single_sample_policy(p), p.channel, p.ell, p.budget)
        assert np.all(np.abs(led.slack) <= 1e-8)
    assert checked == 90


def test_c04_discretization_error_against_exact_diffusion():
    """Monte Carlo discretization error from exact diffusion paths stays below its bound."""
    t0 = time.perf_counter()
    model = GaussianLinRegModel(generate_synthetic(40, 2, (0.5, -0.3), seed=0, K=4))
    A, b = model.precision(), model.quadratic_terms()[1].sum(axis=0)
    L, eta, m = model.smoothness_constants().L, 0.01, 2
    assert eta < 2 / L
    est, se = estimate_discretization_error(A, b, eta, 10_000, np.random.default_rng(0))
    bound = eta ** 4 * L ** 3 * m / 3 + eta ** 3 * L ** 2 * m
    assert est <= bound
    assert time.perf_counter() - t0 < 60


@pytest.mark.parametrize("case", ["aligned", "random"])
def test_c05_gradient_error_monte_carlo(case):
    """Aggregation error through the channel versus ``4 ell^2 (K - K_a)^2 + beta_tilde``.

    One-dimensional gradients. The received signal is inverted as the server
    does; the Langevin share ``2 / eta`` of the channel noise is removed from
    the second moment, leaving the gradient-error part.
    """
    K, eta, N0, ell = 3, 0.5, 1.0, 1.0
    gains = np.array([1.0, 0.8, 0.1])
    thr = 0.5  # K_a = 2
    rng = np.random.default_rng(11)
    if case == "aligned":
        grads = np.array([[-ell], [-ell], [ell]])  # worst case: the dropped device opposes the others
    else:
        grads = clip_gradient(rng.standard_normal((K, 1)) * 2.0, ell)
    cap = (K / 2) * math.sqrt(eta * N0 / 2)
    alpha = 0.7 * cap
    bt = excess_variance(eta, N0, K, 2, alpha)
    assert bt > 0
    n = 100_000
    Z = rng.standard_normal((n, 1))
    full = grads.sum(axis=0)
    sq = np.empty(n)
    for i in range(n):
        y, dec = aircomp_round(grads, alpha, gains, thr, N0, None, noise=Z[i])
        err = full - K / (alpha * dec.active_count) * y
        sq[i] = err @ err
    sq -= 2 / eta
    mean, se = sq.mean(), sq.std(ddof=1) / math.sqrt(n)
    assert mean <= 4 * ell ** 2 * (K - 2) ** 2 + bt + 3 * se


def test_c06_posterior_recovery():
    """Ideal-channel Langevin baseline approaches the exact posterior."""
    cfg = ScenarioConfig(burn_in=99, samples=1, reps=100, eta_frac=0.2, policies=("noiseless_no_dp",),
                         axis="none")
    inst = scenarios.build_instance(cfg)
    pol = baseline_policy("noiseless_no_dp", inst.problem)
    trs = run_repetitions(SamplerConfig(inst.eta, 99, 1, cfg.seed), pol, inst.channel, inst.model, cfg.ell, 100)
    th = np.stack([t.theta for t in trs])
    post = inst.model.exact_posterior()
    init = gaussian_w2_sq(inst.model.prior(), post)
    checkpoints = (10, 25, 50, 100)

    def curve(idx):
        return np.array([gaussian_w2_sq(empirical_moments(th[idx, s]).as_gaussian(), post) for s in checkpoints])

    w = curve(np.arange(100))
    rng = np.random.default_rng(0)
    boot = np.array([curve(rng.integers(0, 100, 100)) for _ in range(200)])
    assert w[-1] < 0.1 * init
    for j in range(len(checkpoints) - 1):
        se = (boot[:, j + 1] - boot[:, j]).std(ddof=1)
        assert w[j + 1] <= w[j] + 2 * se


def _sweep_table(name, **changes):
    _, cfg = scenarios.PRESETS[name]
    cfg = cfg.replace(**changes) if changes else cfg
    res = scenarios.bound_sweep(cfg)
    assert not [r for r in res.rows if r[-1]]
    vals = list(dict.fromkeys(r[1] for r in res.rows))
    table = {k: np.array([next(r[3] for r in res.rows if r[1] == v and r[2] == k) for v in vals])
             for k in cfg.policies}
    regimes = [next(r[4] for r in res.rows if r[1] == v and r[2] == "optimized") for v in vals]
    return np.array(vals), table, regimes


def test_c07_qualitative_figures():
    """Bound-versus-SNR, step-size and privacy sweeps, and the regime map."""
    # (a) non-increasing in SNR; optimized never above equal power
    for name in ("fig3a", "fig3b"):
        snr, T, reg = _sweep_table(name, values=tuple(np.arange(0.0, 41.0, 1.0)))
        for curve in T.values():
            assert np.all(np.diff(curve) <= 0)
        assert np.all(T["optimized"] <= T["equal"] + 1e-9)
        # power-limited at low SNR, where optimized and no-DP coincide
        low = np.array(reg) == POWER_LIMITED
        assert low[0] and np.all(T["optimized"][low] == T["no_dp"][low])
        assert reg[-1] == DP_LIMITED and T["optimized"][-1] > T["no_dp"][-1]
    # (b) all policies coincide for small step sizes
    eta, T, reg = _sweep_table("fig4")
    small = np.array(reg) == LMC_LIMITED
    assert small.sum() >= 5 and small[0]
    stack = np.stack(list(T.values()))
    assert np.all(np.ptp(stack[:, small], axis=0) <= 1e-12 * stack[:, small].min(axis=0))
    assert np.all(np.ptp(stack[:, ~small], axis=0) > 0)
    # (c) optimized becomes independent of epsilon beyond some eps*, always <= equal power
    eps, T, _ = _sweep_table("fig5")
    opt = T["optimized"]
    assert np.all(opt <= T["equal"] + 1e-9)
    flat = np.flatnonzero(opt == opt[-1])
    star = flat[0]
    assert np.array_equal(flat, np.arange(star, len(eps))) and 0 < star < len(eps) - 1
    assert np.all(np.diff(opt[:star + 1]) < 0)
    # (d) three connected regions on a 50 x 50 grid
    etas = np.logspace(-6, -3, 50)
    powers = 10 ** (np.linspace(-10, 40, 50) / 10) * 5
    grid = scenarios.regime_grid(scenarios.regime_map(ScenarioConfig(), etas, powers), 50, 50)
    for name in (LMC_LIMITED, POWER_LIMITED, DP_LIMITED):
        _, n = ndimage.label(grid == name)
        assert n == 1, name
    assert grid[0, -1] == LMC_LIMITED     # small eta, large P
    assert grid[-1, 0] == POWER_LIMITED   # large eta, small P
    assert grid[-1, -1] == DP_LIMITED     # large eta, large P
    ii, jj = np.indices(grid.shape)
    assert ii[grid == LMC_LIMITED].mean() < ii[grid == DP_LIMITED].mean()
    assert jj[grid == POWER_LIMITED].mean() < jj[grid == DP_LIMITED].mean()


def test_c08_threshold_search_against_dense_grid():
    """Best candidate threshold equals the best of 10^6 grid thresholds."""
    rng = np.random.default_rng(5)
    K = 8
    for _ in range(100):
        gains = np.abs(rng.standard_normal(K) + 1j * rng.standard_normal(K)) * math.sqrt(0.5)
        eta, N0, ell = 10 ** rng.uniform(-4, -1), 1.0, rng.uniform(0.5, 5)
        P = 10 ** rng.uniform(-1, 5)
        g = threshold_search(gains, P, ell, eta, N0)
        best, _ = threshold_objective(gains, g, P, ell, eta, N0, K)
        grid = np.linspace(0.0, gains.max(), 1_000_000)
        srt = np.sort(gains)
        idx = np.searchsorted(srt, grid, side="left")
        K_a = (K - idx).astype(float)
        h = srt[np.minimum(idx, K - 1)]
        vals = 4.0 * ell ** 2 * (K - K_a) ** 2 + np.maximum(0.0, N0 * K ** 2 * ell ** 2 / (P * K_a ** 2 * h ** 2)
                                                            - 2.0 / eta)
        assert vals.min() == best


def test_c09_metrics():
    """Gaussian W2 reference values, rotation invariance, and moment consistency."""
    rng = np.random.default_rng(9)
    B = rng.standard_normal((4, 4))
    p = GaussianDist(rng.standard_normal(4), B @ B.T + np.eye(4))
    assert abs(gaussian_w2_sq(p, p)) <= 1e-9
    assert gaussian_w2_sq(GaussianDist(np.zeros(1), np.eye(1)), GaussianDist(np.ones(1), 4 * np.eye(1))) == 2.0
    d = gaussian_w2_sq(GaussianDist(np.zeros(2), np.diag([1.0, 4.0])), GaussianDist(np.array([1.0, 0.0]),
                                                                                    np.diag([4.0, 1.0])))
    assert abs(d - 3.0) <= 1e-12
    for _ in range(10):
        C1, C2 = (lambda X: X @ X.T)(rng.standard_normal((5, 5))), (lambda X: X @ X.T)(rng.standard_normal((5, 5)))
        m1, m2 = rng.standard_normal(5), rng.standard_normal(5)
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        a = gaussian_w2_sq(GaussianDist(m1, C1), GaussianDist(m2, C2))
        r = gaussian_w2_sq(GaussianDist(Q @ m1, Q @ C1 @ Q.T), GaussianDist(Q @ m2, Q @ C2 @ Q.T))
        assert abs(a - r) <= 1e-8
    mean = np.array([1.0, -2.0, 0.5])
    X = rng.standard_normal((3, 3))
    C = X @ X.T + 0.5 * np.eye(3)
    R = 10_000
    est = empirical_moments(rng.multivariate_normal(mean, C, R))
    se_mean = np.sqrt(np.diag(C) / R)
    se_cov = np.sqrt((np.outer(np.diag(C), np.diag(C)) + C ** 2) / R)
    assert np.all(np.abs(est.mean - mean) <= 4 * se_mean)
    assert np.all(np.abs(est.cov - C) <= 4 * se_cov)


def test_c10_determinism_and_pairing(tmp_path):
    """Same seed gives identical CSVs for any worker count; policies share noise streams."""
    args = ["reproduce", "fig6", "--reps", "4", "--set", "values=5,30", "--set", "burn_in=5",
            "--set", "samples=3", "--seed", "21"]
    outs = []
    for jobs in (1, 2, 3, 1):
        d = tmp_path / f"j{jobs}_{len(outs)}"
        assert cli_main(args + ["--out-dir", str(d), "--jobs", str(jobs)]) == 0
        outs.append(d)
    for name in ("fig6.csv", "fig6_policies.csv", "fig6_ledger.csv"):
        ref = (outs[0] / name).read_bytes()
        assert all((d / name).read_bytes() == ref for d in outs[1:])

    # recover the channel-noise draws from two policies whose server noise is zero
    cfg = ScenarioConfig(channel="rayleigh", snr_db=40.0, burn_in=5, samples=3, reps=2, seed=21, axis="none",
                         policies=("no_dp", "noiseless_no_dp"))
    _, traces, pols = scenarios.empirical_point(cfg, keep_traces=True)
    inst = scenarios.build_instance(cfg)
    model, eta, K = inst.model, inst.eta, cfg.K
    pol = dict((k, p) for k, p, _ in pols)
    for rep in range(2):
        _, z_ref, _ = draw_noise(cfg.seed, rep, cfg.rounds, model)
        recovered = {}
        for kind in ("no_dp", "noiseless_no_dp"):
            tr = traces[kind][rep]
            assert np.all(tr.beta == 0.0)
            z = np.empty((cfg.rounds, model.dim))
            for s in range(cfg.rounds):
                G = clip_gradient(model.local_gradients(tr.theta[s]), cfg.ell)
                if kind == "noiseless_no_dp":
                    drift, scale = eta * G.sum(axis=0), math.sqrt(2 * eta)
                else:
                    act = inst.channel.gains[:, s] >= pol[kind].thresholds[s]
                    k_a = int(act.sum())
                    drift = eta * K / k_a * G[act].sum(axis=0)
                    scale = eta * K * math.sqrt(cfg.N0) / (tr.alpha[s] * k_a)
                z[s] = (tr.theta[s] - drift - tr.theta[s + 1]) / scale
            recovered[kind] = z
        np.testing.assert_allclose(recovered["no_dp"], recovered["noiseless_no_dp"], rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(recovered["no_dp"], z_ref, rtol=1e-6, atol=1e-6)
        np.testing.assert_array_equal(traces["no_dp"][rep].theta[0], traces["noiseless_no_dp"][rep].theta[0])


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
