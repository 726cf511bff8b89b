"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure, 4 privacy audit failed, 5 malformed input file, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from ..channel import ChannelTrace, SchedulingError
from ..optimizer import OptimizationError, PowerPolicy, policy_objective
from ..privacy import DpBudget, verify_dp
from ..sampler import write_traces
from . import scenarios
from .config import ConfigError, ScenarioConfig, config_from_mapping, load_config, parse_overrides
from .data import IdxFormatError

EXIT_INVALID = 2
EXIT_NUMERIC = 3
EXIT_DP = 4
EXIT_FORMAT = 5

log = logging.getLogger("wflmc")


class DpAuditFailed(RuntimeError):
    pass


def _config(args, base=None):
    cfg = base or ScenarioConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    items = parse_overrides(getattr(args, "set", None))
    if args.seed is not None:
        items["seed"] = str(args.seed)
    if getattr(args, "reps", None) is not None:
        items["reps"] = str(args.reps)
    return config_from_mapping(items, cfg) if items else cfg


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def cmd_optimize(args):
    cfg = _config(args)
    inst = scenarios.build_instance(cfg)
    pol = scenarios.make_policy(args.policy, inst.problem)
    ledger = scenarios.audit_policy(args.policy, pol, inst.problem)
    pol.to_csv(_out(args, "policy.csv"))
    inst.channel.to_csv(_out(args, "channel.csv"))
    ledger.to_csv(_out(args, "ledger.csv"))
    print(f"{args.policy}: bound {policy_objective(inst.problem, pol)!r}, "
          f"regimes {sorted(set(pol.regimes))}, privacy {'pass' if ledger.all_passed else 'FAIL'}")
    return 0


def cmd_simulate(args):
    cfg = _config(args)
    if cfg.axis != "none":
        res = scenarios.empirical_sweep(cfg, args.jobs)
        paths = scenarios.write_sweep(res, args.out_dir, "empirical")
    else:
        rows, traces, pols = scenarios.empirical_point(cfg, jobs=args.jobs, keep_traces=True)
        res = scenarios.SweepResult([["none", float("nan")] + r for r in rows], [], [],
                                    scenarios.EMPIRICAL_HEADER)
        for kind, pol, ledger in pols:
            res.policies.extend(scenarios._policy_rows("none", float("nan"), kind, pol))
            res.ledger.extend(["none", float("nan"), kind] + list(r) for r in ledger.rows())
        paths = scenarios.write_sweep(res, args.out_dir, "empirical")
        for kind, trs in traces.items():
            p = _out(args, f"trace_{kind}.csv")
            write_traces(p, trs)
            paths.append(p)
    _report(res)
    print("\n".join(paths))
    return 0


def cmd_bound_sweep(args):
    cfg = _config(args)
    res = scenarios.bound_sweep(cfg, args.jobs)
    paths = scenarios.write_sweep(res, args.out_dir, "bound")
    _report(res)
    print("\n".join(paths))
    return 0


def cmd_regime_map(args):
    cfg = _config(args)
    model, _ = scenarios.build_model(cfg)
    etas = np.logspace(math.log10(args.eta_min), math.log10(args.eta_max), args.n)
    snrs = np.linspace(args.snr_min, args.snr_max, args.n)
    powers = 10.0 ** (snrs / 10.0) * model.dim * cfg.N0
    rows = scenarios.regime_map(cfg, etas, powers)
    path = _out(args, "regime_map.csv")
    scenarios.write_rows(path, scenarios.REGIME_HEADER, rows)
    print(path)
    return 0


def cmd_verify_dp(args):
    pol = PowerPolicy.from_csv(args.policy)
    ch = ChannelTrace.from_csv(args.channel)
    ledger = verify_dp(pol, ch, args.ell, DpBudget(args.epsilon, args.delta))
    ledger.to_csv(_out(args, "ledger.csv"))
    worst = int(np.argmin(ledger.slack))
    print(f"budget {ledger.budget.r_dp!r}; worst device {worst} loss {ledger.loss[worst]!r} "
          f"slack {ledger.slack[worst]!r}")
    if not ledger.all_passed:
        raise DpAuditFailed(f"{int((~ledger.passed).sum())} device(s) exceed the privacy budget")
    return 0


def cmd_reproduce(args):
    kind, preset = scenarios.PRESETS[args.name]
    cfg = _config(args, preset)
    res, paths = scenarios.run_scenario(kind, cfg, args.out_dir, args.jobs, stem=args.name)
    _report(res)
    print("\n".join(paths))
    return 0


def _report(res):
    errs = [r for r in res.rows if r[-1]]
    for r in errs:
        print(f"error at {r[0]}={r[1]!r} ({r[2]}): {r[-1]}", file=sys.stderr)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="scenario seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--out-dir", default="out", help="directory for CSV outputs")
    common.add_argument("--config", default=None, help="INI scenario file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wflmc", description="Wireless federated Langevin Monte Carlo toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("optimize", parents=[common], help="compute a power policy")
    s.add_argument("--policy", default="optimized", choices=("optimized",) + scenarios.DP_POLICIES[1:]
                   + ("no_dp", "noiseless_no_dp"))
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate", parents=[common], help="run the sampler and measure W2")
    s.add_argument("--reps", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bound-sweep", parents=[common], help="analytic bound over a sweep")
    s.set_defaults(func=cmd_bound_sweep)

    s = sub.add_parser("regime-map", parents=[common], help="classify an (eta, SNR) grid")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--eta-min", type=float, default=1e-6)
    s.add_argument("--eta-max", type=float, default=1e-3)
    s.add_argument("--snr-min", type=float, default=-10.0)
    s.add_argument("--snr-max", type=float, default=40.0)
    s.set_defaults(func=cmd_regime_map)

    s = sub.add_parser("verify-dp", parents=[common], help="audit a policy file against a channel file")
    s.add_argument("--policy", required=True)
    s.add_argument("--channel", required=True)
    s.add_argument("--ell", type=float, required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.set_defaults(func=cmd_verify_dp)

    s = sub.add_parser("reproduce", parents=[common], help="run a preset figure scenario")
    s.add_argument("name", choices=sorted(scenarios.PRESETS))
    s.add_argument("--reps", type=int, default=None)
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DpAuditFailed as exc:
        print(f"privacy audit failed: {exc}", file=sys.stderr)
        return EXIT_DP
    except IdxFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (OptimizationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SchedulingError, ValueError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except scenarios.DpViolation as exc:
        print(f"privacy audit failed: {exc}", file=sys.stderr)
        return EXIT_DP


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
