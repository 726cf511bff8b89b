"""Hot inner loops, compiled with numba when available.

Every kernel has two implementations with identical semantics: a loop-style
version that numba compiles, and a vectorised numpy version. The numpy path
is used when numba is missing or when the environment variable
``WFLMC_DISABLE_NUMBA`` is set to a truthy value. The two paths agree to
floating-point round-off, not bit-for-bit (summation order differs).
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_DISABLED = os.environ.get("WFLMC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAS_NUMBA and not _DISABLED


def backend():
    """Name of the backend used by the dispatching wrappers."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Quadratic-cost federated Langevin chain
# ---------------------------------------------------------------------------


def _chain_loop(A, b, active, grad_scale, noise_scale, sqrt_beta, ell, theta0, z, q):
    S, K = active.shape
    m = theta0.shape[0]
    out = np.empty((S + 1, m))
    theta = theta0.copy()
    out[0] = theta
    g = np.empty(m)
    acc = np.empty(m)
    for s in range(S):
        for i in range(m):
            acc[i] = 0.0
        for k in range(K):
            if not active[s, k]:
                continue
            sq = 0.0
            for i in range(m):
                v = -b[k, i]
                for j in range(m):
                    v += A[k, i, j] * theta[j]
                g[i] = v
                sq += v * v
            nrm = np.sqrt(sq)
            c = 1.0
            if nrm > ell:
                c = ell / nrm
            for i in range(m):
                acc[i] += c * g[i]
        for i in range(m):
            theta[i] = (theta[i] - grad_scale[s] * acc[i]
                        - noise_scale[s] * z[s, i] + sqrt_beta[s] * q[s, i])
        out[s + 1] = theta
    return out


def chain_numpy(A, b, active, grad_scale, noise_scale, sqrt_beta, ell, theta0, z, q):
    """Run ``S`` rounds of the federated update for a quadratic cost.

    Device ``k`` holds the local gradient ``A[k] @ theta - b[k]``. At round
    ``s`` the clipped gradients of the devices flagged in ``active[s]`` are
    summed and the iterate moves by
    ``-grad_scale[s] * sum - noise_scale[s] * z[s] + sqrt_beta[s] * q[s]``.

    Parameters
    ----------
    A : ndarray, shape (K, m, m)
    b : ndarray, shape (K, m)
    active : ndarray of bool, shape (S, K)
    grad_scale, noise_scale, sqrt_beta : ndarray, shape (S,)
    ell : float
        Clipping radius.
    theta0 : ndarray, shape (m,)
    z, q : ndarray, shape (S, m)
        Standard normal draws for the channel and server noise.

    Returns
    -------
    ndarray, shape (S + 1, m)
        Iterates, starting with ``theta0``.
    """
    S = active.shape[0]
    out = np.empty((S + 1, theta0.shape[0]))
    theta = np.array(theta0, dtype=float)
    out[0] = theta
    for s in range(S):
        idx = active[s]
        G = np.einsum("kij,j->ki", A[idx], theta) - b[idx]
        norms = np.sqrt(np.einsum("ki,ki->k", G, G))
        scale = np.ones_like(norms)
        big = norms > ell
        scale[big] = ell / norms[big]
        acc = scale @ G
        theta = theta - grad_scale[s] * acc - noise_scale[s] * z[s] + sqrt_beta[s] * q[s]
        out[s + 1] = theta
    return out


# ---------------------------------------------------------------------------
# Contraction recursion behind the Wasserstein bound
# ---------------------------------------------------------------------------


def _bound_curve_loop(errors, rho2, kappa, w0):
    S = errors.shape[0]
    out = np.empty(S + 1)
    v = w0
    out[0] = v
    for s in range(S):
        v = rho2 * v + kappa * errors[s]
        out[s + 1] = v
    return out


def bound_curve_numpy(errors, rho2, kappa, w0):
    """Iterate ``v_s = rho2 * v_{s-1} + kappa * errors[s-1]`` from ``v_0 = w0``."""
    errors = np.asarray(errors, dtype=float)
    out = np.empty(errors.shape[0] + 1)
    out[0] = w0
    # blockwise closed form keeps rho2**-j from overflowing
    v = float(w0)
    block = 64
    for start in range(0, errors.shape[0], block):
        e = errors[start:start + block]
        n = e.shape[0]
        j = np.arange(1, n + 1)
        decay = rho2 ** j
        # v_{start+j} = rho2^j v + kappa * sum_{i<=j} rho2^(j-i) e_i
        W = np.tril(rho2 ** (j[:, None] - j[None, :]).clip(min=0))
        vals = decay * v + kappa * (W @ e)
        out[start + 1:start + n + 1] = vals
        v = vals[-1]
    return out


if HAS_NUMBA:
    chain_numba = njit(cache=True)(_chain_loop)
    bound_curve_numba = njit(cache=True)(_bound_curve_loop)
else:  # pragma: no cover
    chain_numba = None
    bound_curve_numba = None


def run_chain(A, b, active, grad_scale, noise_scale, sqrt_beta, ell, theta0, z, q):
    """Dispatch to the compiled chain kernel or its numpy fallback."""
    args = (
        np.ascontiguousarray(A, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(active, dtype=np.bool_),
        np.ascontiguousarray(grad_scale, dtype=np.float64),
        np.ascontiguousarray(noise_scale, dtype=np.float64),
        np.ascontiguousarray(sqrt_beta, dtype=np.float64),
        float(ell),
        np.ascontiguousarray(theta0, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(q, dtype=np.float64),
    )
    if USE_NUMBA:
        return chain_numba(*args)
    return chain_numpy(*args)


def bound_curve(errors, rho2, kappa, w0):
    """Dispatch to the compiled bound recursion or its numpy fallback."""
    errors = np.ascontiguousarray(errors, dtype=np.float64)
    if USE_NUMBA:
        return bound_curve_numba(errors, float(rho2), float(kappa), float(w0))
    return bound_curve_numpy(errors, float(rho2), float(kappa), float(w0))
