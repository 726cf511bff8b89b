"""Time the compiled kernels against their numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--rounds 100] [--devices 30] [--dim 5] [--reps 20]

The first compiled call is excluded from the timing (it triggers JIT
compilation). Both backends are also checked to agree to round-off.
"""

import argparse
import time

import numpy as np

from wflmc import _kernels


def _chain_inputs(rng, S, K, m):
    B = rng.standard_normal((K, m, m))
    A = np.einsum("kij,klj->kil", B, B) / m + np.eye(m)
    b = rng.standard_normal((K, m))
    active = rng.random((S, K)) < 0.8
    active[:, 0] = True
    return (A, b, active, np.full(S, 1e-3), np.full(S, 0.03), np.full(S, 0.01), 30.0,
            rng.standard_normal(m), rng.standard_normal((S, m)), rng.standard_normal((S, m)))


def _best_of(fn, args, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=100)
    ap.add_argument("--devices", type=int, default=30)
    ap.add_argument("--dim", type=int, default=5)
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args(argv)
    if not _kernels.HAS_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    chain = _chain_inputs(rng, args.rounds, args.devices, args.dim)
    errors = rng.exponential(size=args.rounds)
    curve = (errors, 0.98, 5.0, 6.7)

    rows = []
    for name, fast, slow, inputs in (("chain", _kernels.chain_numba, _kernels.chain_numpy, chain),
                                     ("bound_curve", _kernels.bound_curve_numba, _kernels.bound_curve_numpy, curve)):
        t0 = time.perf_counter()
        ref = fast(*inputs)
        compile_s = time.perf_counter() - t0
        np.testing.assert_allclose(ref, slow(*inputs), rtol=1e-10, atol=1e-12)
        t_fast = _best_of(fast, inputs, args.reps)
        t_slow = _best_of(slow, inputs, args.reps)
        rows.append((name, compile_s, t_fast, t_slow))

    print(f"S={args.rounds} K={args.devices} m={args.dim}, best of {args.reps}")
    print(f"{'kernel':<12} {'first call':>11} {'numba':>11} {'numpy':>11} {'speed-up':>9}")
    for name, c, f, s in rows:
        print(f"{name:<12} {c * 1e3:>9.1f}ms {f * 1e6:>9.1f}us {s * 1e6:>9.1f}us {s / f:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
