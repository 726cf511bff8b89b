"""Scenario runners: analytic bound sweeps, empirical sweeps, regime maps.

Every runner returns plain row lists and leaves file writing to
:func:`write_rows`, so results can be compared in memory. Randomness comes
from the scenario seed only:

* channel gains: ``SeedSequence(seed, spawn_key=(0,))``, drawn once per
  scenario and shared by every sweep point and policy;
* sampler noise: per repetition, see :func:`wflmc.sampler.draw_noise`,
  shared by every policy.
"""

from __future__ import annotations

import csv
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..channel import ChannelTrace, check_power, db_to_linear, snr_to_power
from ..metrics import empirical_w2_curve, ensemble_predictive, expected_calibration_error, gaussian_w2_sq
from ..model import GaussianLinRegModel, MultinomialLogRegModel
from ..optimizer import OptProblem, baseline_policy, classify_regime, optimize, policy_objective
from ..privacy import DpBudget, verify_dp
from ..sampler import SamplerConfig, run_repetitions
from .config import ScenarioConfig
from .data import IMAGE_MAGIC, LABEL_MAGIC, generate_synthetic, load_idx_and_pca, read_idx

# policies that must meet the privacy budget
DP_POLICIES = ("optimized", "equal", "noiseless_dp")


class DpViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _data(model, data, N, m, theta_star, noise, data_seed, K, idx_images, idx_labels, pca_dim, per_class,
          classes, projection_out):
    if data == "synthetic":
        ds = generate_synthetic(N, m, theta_star, data_seed, K, noise)
        proj = None
    else:
        ds, proj = load_idx_and_pca(idx_images, idx_labels, pca_dim, per_class, classes, K, data_seed,
                                    projection_out or None)
    if model == "gauss_linreg":
        return GaussianLinRegModel(ds), proj
    return MultinomialLogRegModel(ds, classes), proj


def build_model(cfg):
    """Model of the scenario; cached on the data-defining fields."""
    return _data(cfg.model, cfg.data, cfg.N, cfg.m, tuple(cfg.theta_star), cfg.label_noise, cfg.data_seed, cfg.K,
                 cfg.idx_images, cfg.idx_labels, cfg.pca_dim, cfg.per_class, cfg.classes, cfg.projection_out)


def resolve_power(cfg, dim):
    if cfg.power is not None:
        return float(cfg.power)
    return float(snr_to_power(db_to_linear(cfg.snr_db), dim, cfg.N0))


def build_channel(cfg, dim, rounds=None):
    """Gains for ``rounds`` rounds (default ``S_b + S_u``) with the scenario's noise and power."""
    S = cfg.rounds if rounds is None else rounds
    P = resolve_power(cfg, dim)
    if cfg.channel == "constant":
        return ChannelTrace.constant(cfg.K, S, cfg.gain, cfg.N0, P)
    if cfg.channel == "rayleigh":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(0,))))
        return ChannelTrace.rayleigh(cfg.K, S, cfg.variance, cfg.N0, P, rng)
    tr = ChannelTrace.from_csv(cfg.channel_file, noise_power=cfg.N0, power_budget=P)
    if tr.num_devices != cfg.K or tr.rounds < S:
        raise ValueError(f"channel file has shape {tr.gains.shape}, need ({cfg.K}, >= {S})")
    return ChannelTrace(tr.gains[:, :S], cfg.N0, P)


@dataclass(frozen=True)
class Instance:
    cfg: ScenarioConfig
    model: object
    eta: float
    mu: float
    L: float
    w2_init: float
    channel: ChannelTrace
    problem: OptProblem


def build_instance(cfg, rounds=None):
    """Model, step size, channel and optimization problem of one sweep point.

    ``rounds`` lets a burn-in sweep draw the channel at its full length so
    that every point sees the same gains.
    """
    model, _ = build_model(cfg)
    sc = model.smoothness_constants()
    eta = cfg.eta if cfg.eta is not None else cfg.eta_frac * 2.0 / (sc.mu + sc.L)
    if cfg.w2_init is not None:
        w2 = cfg.w2_init
    elif isinstance(model, GaussianLinRegModel):
        w2 = gaussian_w2_sq(model.prior(), model.exact_posterior())
    else:
        raise ValueError("w2_init must be set for models without a closed-form posterior")
    ch = build_channel(cfg, model.dim, rounds)
    if ch.rounds != cfg.rounds:
        ch = ChannelTrace(ch.gains[:, :cfg.rounds], ch.noise_power, ch.power_budget)
    problem = OptProblem(ch, DpBudget(cfg.epsilon, cfg.delta), eta, sc.mu, sc.L, cfg.ell, model.dim, w2,
                         cfg.burn_in, cfg.samples, cfg.tight, cfg.objective)
    return Instance(cfg, model, eta, sc.mu, sc.L, w2, ch, problem)


def make_policy(kind, problem):
    if kind == "optimized":
        return optimize(problem)
    return baseline_policy(kind, problem)


def audit_policy(kind, policy, problem):
    """Re-check privacy and power; raises for privacy-bound policies that fail.

    Returns the privacy ledger.
    """
    ledger = verify_dp(policy, problem.channel, problem.ell, problem.budget)
    if kind in DP_POLICIES and not np.all(ledger.slack >= -1e-8):
        raise DpViolation(f"{kind} policy exceeds the privacy budget by {-ledger.slack.min():.3g}")
    if policy.device_noise is None and math.isfinite(problem.P):
        gains = problem.channel.gains
        for s in range(problem.rounds):
            act = gains[:, s] >= policy.thresholds[s]
            if not check_power(policy.alphas[s], problem.ell, gains[act, s].min(), problem.P):
                raise RuntimeError(f"{kind} policy violates the power budget in round {s + 1}")
    return ledger


def _label(policy):
    counts = Counter(policy.regimes)
    return policy.regimes[0] if len(counts) == 1 else "mixed"


def _sweep_rounds(cfg):
    return cfg.rounds if cfg.axis == "burn_in" else None


def _points(cfg):
    return list(cfg.values) if cfg.axis != "none" else [float("nan")]


def _point_cfg(cfg, value):
    return cfg if cfg.axis == "none" else cfg.at(value)


def _policies_at(pcfg, rounds):
    inst = build_instance(pcfg, rounds)
    out = []
    for kind in pcfg.policies:
        pol = make_policy(kind, inst.problem)
        ledger = audit_policy(kind, pol, inst.problem)
        out.append((kind, pol, ledger))
    return inst, out


def _error_text(exc):
    return f"{type(exc).__name__}: {exc}".replace("\n", " ")


# ---------------------------------------------------------------------------
# Analytic bound sweep
# ---------------------------------------------------------------------------

BOUND_HEADER = ["axis", "value", "policy", "bound", "regime", "dp_pass", "error"]
POLICY_HEADER = ["axis", "value", "policy", "round", "alpha", "g", "regime", "sigma"]
LEDGER_HEADER = ["axis", "value", "policy", "device", "round", "loss", "cumulative", "budget", "slack"]


def _bound_point(args):
    cfg, value, rounds = args
    rows, prow, lrow = [], [], []
    try:
        pcfg = _point_cfg(cfg, value)
        inst, pols = _policies_at(pcfg, rounds)
        for kind, pol, ledger in pols:
            bound = policy_objective(inst.problem, pol)
            rows.append([cfg.axis, value, kind, bound, _label(pol), ledger.all_passed, ""])
            prow.extend(_policy_rows(cfg.axis, value, kind, pol))
            lrow.extend([cfg.axis, value, kind] + list(r) for r in ledger.rows())
    except Exception as exc:  # recorded, the sweep goes on
        rows = [[cfg.axis, value, kind, float("nan"), "", False, _error_text(exc)] for kind in cfg.policies]
    return rows, prow, lrow


def _policy_rows(axis, value, kind, pol):
    for s in range(pol.rounds):
        sig = "" if pol.device_noise is None else float(pol.device_noise[s])
        yield [axis, value, kind, s + 1, float(pol.alphas[s]), float(pol.thresholds[s]), pol.regimes[s], sig]


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


@dataclass
class SweepResult:
    rows: list
    policies: list
    ledger: list
    header: list


def bound_sweep(cfg, jobs=1):
    """Bound of every policy at every sweep point.

    The bound is the worst (or mean) over the retained rounds.
    """
    tasks = [(cfg, v, _sweep_rounds(cfg)) for v in _points(cfg)]
    res = _map(_bound_point, tasks, jobs)
    rows, prow, lrow = [], [], []
    for r, p, lr in res:
        rows.extend(r)
        prow.extend(p)
        lrow.extend(lr)
    return SweepResult(rows, prow, lrow, BOUND_HEADER)


# ---------------------------------------------------------------------------
# Empirical sweep
# ---------------------------------------------------------------------------

EMPIRICAL_HEADER = ["axis", "value", "policy", "w2_worst", "w2_mean", "bound", "w2_init", "metric", "error"]


def _load_test(cfg, proj):
    if not (cfg.test_images and cfg.test_labels):
        return None
    X = read_idx(cfg.test_images, IMAGE_MAGIC)
    y = read_idx(cfg.test_labels, LABEL_MAGIC).astype(int)
    X = X.reshape(X.shape[0], -1).astype(float) / 255.0
    return proj.transform(X).T, y


def empirical_point(pcfg, rounds=None, jobs=1, keep_traces=False):
    """Run every policy ``reps`` times with paired noise and summarize.

    Returns
    -------
    rows : list
        One row per policy (see ``EMPIRICAL_HEADER``) without the axis/value prefix.
    traces : dict
        Policy kind to list of :class:`RunTrace` when ``keep_traces``.
    extras : tuple
        ``(policies, ledgers)`` as in :func:`_policies_at`.
    """
    inst, pols = _policies_at(pcfg, rounds)
    sc = SamplerConfig(inst.eta, pcfg.burn_in, pcfg.samples, pcfg.seed)
    rows, traces = [], {}
    for kind, pol, _ in pols:
        trs = run_repetitions(sc, pol, inst.channel, inst.model, pcfg.ell, pcfg.reps, jobs)
        if keep_traces:
            traces[kind] = trs
        bound = policy_objective(inst.problem, pol)
        checkpoints = {}
        metric = ""
        if isinstance(inst.model, GaussianLinRegModel) and pcfg.reps >= 2:
            thetas = np.stack([t.theta for t in trs])
            curve = empirical_w2_curve(thetas, inst.model.exact_posterior())
            ret = curve[pcfg.burn_in + 1:]
            worst, mean = float(ret.max()), float(ret.mean())
            checkpoints = {s: float(curve[s]) for s in pcfg.checkpoints if 0 <= s < len(curve)}
            metric = ";".join(f"w2@{s}={v!r}" for s, v in checkpoints.items())
        else:
            worst = mean = float("nan")
            if isinstance(inst.model, MultinomialLogRegModel):
                _, proj = build_model(pcfg)
                test = _load_test(pcfg, proj) if proj is not None else None
                U, y = test if test is not None else (inst.model.dataset.covariates,
                                                      inst.model.dataset.labels.astype(int))
                probs = ensemble_predictive(inst.model, trs[0].samples, U)
                metric = f"ece={expected_calibration_error(probs, y)!r}"
        rows.append([kind, worst, mean, bound, inst.w2_init, metric, ""])
    return rows, traces, pols


def _empirical_task(args):
    cfg, value, rounds, jobs = args
    try:
        pcfg = _point_cfg(cfg, value)
        rows, _, pols = empirical_point(pcfg, rounds, jobs)
        prow, lrow = [], []
        for kind, pol, ledger in pols:
            prow.extend(_policy_rows(cfg.axis, value, kind, pol))
            lrow.extend([cfg.axis, value, kind] + list(r) for r in ledger.rows())
        return [[cfg.axis, value] + r for r in rows], prow, lrow
    except Exception as exc:
        return ([[cfg.axis, value, kind, float("nan"), float("nan"), float("nan"), float("nan"), "",
                  _error_text(exc)] for kind in cfg.policies], [], [])


def empirical_sweep(cfg, jobs=1):
    """Worst-case (over retained rounds) empirical W2^2 of every policy at every sweep point.

    Parallelism goes over sweep points; repetitions within a point run serially
    in a fixed order, so the output does not depend on ``jobs``.
    """
    tasks = [(cfg, v, _sweep_rounds(cfg), 1) for v in _points(cfg)]
    res = _map(_empirical_task, tasks, jobs)
    rows, prow, lrow = [], [], []
    for r, p, lr in res:
        rows.extend(r)
        prow.extend(p)
        lrow.extend(lr)
    return SweepResult(rows, prow, lrow, EMPIRICAL_HEADER)


# ---------------------------------------------------------------------------
# Regime map
# ---------------------------------------------------------------------------

REGIME_HEADER = ["eta", "power", "snr_db", "regime"]


def regime_map(cfg, etas, powers):
    """Regime of the single-sample closed form over an ``(eta, P)`` grid.

    Uses a constant channel with magnitude ``cfg.gain`` on all devices, and
    ``S_b + 1`` rounds.
    """
    model, _ = build_model(cfg)
    m = model.dim
    r_dp = DpBudget(cfg.epsilon, cfg.delta).r_dp
    S = cfg.burn_in + 1
    rows = []
    for eta in etas:
        for P in powers:
            reg = classify_regime(P, eta, cfg.gain, r_dp, S, cfg.K, cfg.K, cfg.ell, cfg.N0)
            rows.append([float(eta), float(P), 10.0 * math.log10(P / (m * cfg.N0)), reg])
    return rows


def regime_grid(rows, n_eta, n_p):
    """Regime labels of :func:`regime_map` rows as an (n_eta, n_p) array."""
    return np.array([r[3] for r in rows], dtype=object).reshape(n_eta, n_p)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_rows(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_sweep(result, out_dir, stem):
    """Write the main, policy and ledger CSVs of a sweep; returns the paths."""
    paths = [os.path.join(out_dir, f"{stem}.csv"), os.path.join(out_dir, f"{stem}_policies.csv"),
             os.path.join(out_dir, f"{stem}_ledger.csv")]
    write_rows(paths[0], result.header, result.rows)
    write_rows(paths[1], POLICY_HEADER, result.policies)
    write_rows(paths[2], LEDGER_HEADER, result.ledger)
    return paths


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_ALL = ("optimized", "equal", "no_dp", "noiseless_dp", "noiseless_no_dp")

PRESETS = {
    # bound versus SNR, constant channel, one retained sample
    "fig3a": ("bound", ScenarioConfig(name="fig3a", channel="constant", gain=0.01, burn_in=50, samples=1,
                                      epsilon=8.0, delta=0.01, eta_frac=0.2, axis="snr_db",
                                      values=tuple(float(x) for x in range(0, 41, 2)), policies=_ALL)),
    "fig3b": ("bound", ScenarioConfig(name="fig3b", channel="constant", gain=0.01, burn_in=50, samples=1,
                                      epsilon=8.0, delta=0.01, eta_frac=0.065, axis="snr_db",
                                      values=tuple(float(x) for x in range(0, 41, 2)), policies=_ALL)),
    # bound versus step size
    "fig4": ("bound", ScenarioConfig(name="fig4", channel="constant", gain=0.01, burn_in=50, samples=1,
                                     epsilon=8.0, delta=0.01, snr_db=18.0, eta=1e-4, eta_frac=None, axis="eta",
                                     values=tuple(float(x) for x in np.logspace(-6, math.log10(7e-4), 25)),
                                     policies=_ALL)),
    # bound versus privacy level
    "fig5": ("bound", ScenarioConfig(name="fig5", channel="constant", gain=0.01, burn_in=50, samples=1,
                                     epsilon=8.0, delta=0.01, snr_db=20.0, eta_frac=0.2, axis="epsilon",
                                     values=tuple(float(x) for x in np.arange(1.0, 41.0, 1.0)), policies=_ALL)),
    # empirical distance versus SNR, Rayleigh fading
    "fig6": ("empirical", ScenarioConfig(name="fig6", channel="rayleigh", variance=0.01, burn_in=50, samples=50,
                                         epsilon=15.0, delta=0.01, eta_frac=0.2, reps=100, axis="snr_db",
                                         values=tuple(float(x) for x in range(0, 41, 5)), policies=_ALL)),
    # empirical distance versus burn-in, S = 100 fixed
    "fig7": ("empirical", ScenarioConfig(name="fig7", channel="rayleigh", variance=0.01, burn_in=50, samples=50,
                                         epsilon=15.0, delta=0.01, snr_db=30.0, eta_frac=0.2, reps=100,
                                         axis="burn_in", values=tuple(float(x) for x in range(10, 91, 10)),
                                         policies=_ALL)),
}


def run_scenario(kind, cfg, out_dir, jobs=1, stem=None):
    """Run a bound or empirical sweep and write its CSVs."""
    stem = stem or cfg.name
    if kind == "bound":
        res = bound_sweep(cfg, jobs)
    elif kind == "empirical":
        res = empirical_sweep(cfg, jobs)
    else:
        raise ValueError(f"unknown scenario kind {kind!r}")
    return res, write_sweep(res, out_dir, stem)

