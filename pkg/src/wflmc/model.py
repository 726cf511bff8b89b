"""Federated datasets, likelihood models and their gradients.

Two models are supported:

* Gaussian linear regression with a standard normal prior, whose posterior is
  available in closed form and serves as ground truth.
* Multinomial logistic regression with a standard normal prior.

Local costs drop additive constants of the log densities, so
``sum_k local_cost(k, theta)`` equals ``-log p(theta | D)`` up to a constant
that does not depend on ``theta``. The split follows
``f_k(theta) = -log p(D_k | theta) - log p(theta) / K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FederatedDataset:
    """Covariates, labels and a partition of the samples into ``K`` shards.

    Parameters
    ----------
    covariates : ndarray, shape (m, N)
        Column ``n`` is the covariate vector ``u_n``.
    labels : ndarray, shape (N,)
        Real targets for regression, or integer classes ``0 .. C-1``.
    shard_index : tuple of ndarray
        ``shard_index[k]`` holds the sample columns owned by device ``k``.
    """

    covariates: np.ndarray
    labels: np.ndarray
    shard_index: tuple

    def __post_init__(self):
        U = np.asarray(self.covariates, dtype=float)
        if U.ndim != 2 or U.shape[0] < 1:
            raise ValueError("covariates must be an (m, N) matrix with m >= 1")
        v = np.asarray(self.labels)
        if v.shape != (U.shape[1],):
            raise ValueError(f"labels must have shape ({U.shape[1]},), got {v.shape}")
        shards = tuple(np.asarray(ix, dtype=np.intp) for ix in self.shard_index)
        if len(shards) < 1:
            raise ValueError("need at least one device")
        joined = np.concatenate(shards) if shards else np.empty(0, dtype=np.intp)
        if joined.size != U.shape[1] or not np.array_equal(np.sort(joined), np.arange(U.shape[1])):
            raise ValueError("shards must be disjoint and cover every sample exactly once")
        object.__setattr__(self, "covariates", U)
        object.__setattr__(self, "labels", v)
        object.__setattr__(self, "shard_index", shards)

    @classmethod
    def equal_split(cls, covariates, labels, K):
        """Contiguous split into ``K`` shards whose sizes differ by at most one."""
        N = np.asarray(covariates).shape[1]
        if K < 1:
            raise ValueError("K must be >= 1")
        return cls(covariates, labels, tuple(np.array_split(np.arange(N), K)))

    @classmethod
    def random_split(cls, covariates, labels, K, seed):
        """Seeded random partition with equal shard sizes (up to one)."""
        N = np.asarray(covariates).shape[1]
        if K < 1:
            raise ValueError("K must be >= 1")
        perm = np.random.default_rng(seed).permutation(N)
        return cls(covariates, labels, tuple(np.sort(p) for p in np.array_split(perm, K)))

    @property
    def dim(self):
        return self.covariates.shape[0]

    @property
    def num_samples(self):
        return self.covariates.shape[1]

    @property
    def num_devices(self):
        return len(self.shard_index)

    @property
    def shard_sizes(self):
        return tuple(int(ix.size) for ix in self.shard_index)

    def shard(self, k):
        """Return ``(U_k, v_k)`` for device ``k``."""
        ix = self.shard_index[k]
        return self.covariates[:, ix], self.labels[ix]

    def save_text(self, path):
        """Write the dataset as text.

        The first line holds ``m N K``. Each following line is one sample:
        the owning device index, the ``m`` covariates, then the label.
        """
        owner = np.empty(self.num_samples, dtype=int)
        for k, ix in enumerate(self.shard_index):
            owner[ix] = k
        rows = np.column_stack([owner, self.covariates.T, self.labels])
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {self.num_samples} {self.num_devices}\n")
            np.savetxt(fh, rows, fmt="%.17g")

    @classmethod
    def load_text(cls, path):
        """Inverse of :meth:`save_text`."""
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 3:
                raise ValueError(f"{path}: header must be 'm N K'")
            m, N, K = (int(x) for x in header)
            rows = np.loadtxt(fh, ndmin=2)
        if rows.shape != (N, m + 2):
            raise ValueError(f"{path}: expected {N} rows of {m + 2} columns, got {rows.shape}")
        owner = rows[:, 0].astype(int)
        if owner.min() < 0 or owner.max() >= K:
            raise ValueError(f"{path}: device index out of range")
        shards = tuple(np.flatnonzero(owner == k) for k in range(K))
        return cls(rows[:, 1:m + 1].T.copy(), rows[:, m + 1].copy(), shards)


@dataclass(frozen=True)
class SmoothnessConstants:
    """Strong convexity ``mu`` and smoothness ``L`` of the global cost."""

    mu: float
    L: float

    def __post_init__(self):
        if not (0 < self.mu <= self.L):
            raise ValueError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")


@dataclass(frozen=True)
class GaussianDist:
    """Multivariate normal with a symmetric PSD covariance.

    Tiny negative eigenvalues (above ``-1e-10`` times the largest) are
    clamped to zero; anything more negative is rejected.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        m = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (m, m):
            raise ValueError(f"mean shape {mean.shape} and cov shape {cov.shape} do not match")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        w, V = np.linalg.eigh(cov)
        top = max(w.max(), 0.0)
        if w.min() < -1e-10 * top or (top == 0.0 and w.min() < 0.0):
            raise ValueError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
        if w.min() < 0.0:
            cov = (V * np.clip(w, 0.0, None)) @ V.T
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.shape[0]


def clip_gradient(g, ell):
    """Scale ``g`` by ``min(1, ell / ||g||)`` along the last axis."""
    if ell <= 0:
        raise ValueError("clipping radius must be positive")
    g = np.asarray(g, dtype=float)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        factor = np.where(norm > ell, ell / np.where(norm > 0, norm, 1.0), 1.0)
    return g * factor


def _check_theta(theta, dim):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != dim:
        raise ValueError(f"theta must be a vector of length {dim}, got shape {theta.shape}")
    return theta


@dataclass(frozen=True)
class GaussianLinRegModel:
    """Linear-Gaussian likelihood ``v ~ N(theta^T u, 1)`` with prior ``N(0, I)``.

    The local cost of device ``k`` is quadratic,
    ``f_k(theta) = 0.5 theta^T A_k theta - b_k^T theta`` (+ const) with
    ``A_k = U_k U_k^T + I / K`` and ``b_k = U_k v_k``.
    """

    dataset: FederatedDataset
    _A: np.ndarray = field(init=False, repr=False, compare=False)
    _b: np.ndarray = field(init=False, repr=False, compare=False)
    _c: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ds = self.dataset
        m, K = ds.dim, ds.num_devices
        A = np.empty((K, m, m))
        b = np.empty((K, m))
        c = np.empty(K)
        for k in range(K):
            U_k, v_k = ds.shard(k)
            v_k = np.asarray(v_k, dtype=float)
            A[k] = U_k @ U_k.T + np.eye(m) / K
            b[k] = U_k @ v_k
            c[k] = 0.5 * v_k @ v_k
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "_c", c)

    @property
    def dim(self):
        return self.dataset.dim

    @property
    def num_devices(self):
        return self.dataset.num_devices

    def quadratic_terms(self):
        """Per-device ``(A_k, b_k)`` stacked as arrays of shape (K, m, m), (K, m)."""
        return self._A, self._b

    def precision(self):
        """Global Hessian ``U U^T + I``."""
        return self._A.sum(axis=0)

    def local_cost(self, k, theta):
        theta = _check_theta(theta, self.dim)
        return 0.5 * theta @ self._A[k] @ theta - self._b[k] @ theta + self._c[k]

    def local_gradient(self, k, theta):
        theta = _check_theta(theta, self.dim)
        return self._A[k] @ theta - self._b[k]

    def local_gradients(self, theta):
        """All ``K`` local gradients as a (K, m) array."""
        theta = _check_theta(theta, self.dim)
        return self._A @ theta - self._b

    def global_gradient(self, theta):
        theta = _check_theta(theta, self.dim)
        return self.precision() @ theta - self._b.sum(axis=0)

    def exact_posterior(self):
        """``N((UU^T + I)^-1 U v, (UU^T + I)^-1)``."""
        prec = self.precision()
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + cov.T)
        mean = np.linalg.solve(prec, self._b.sum(axis=0))
        return GaussianDist(mean, cov)

    def prior(self):
        return GaussianDist(np.zeros(self.dim), np.eye(self.dim))

    def smoothness_constants(self):
        """Extreme eigenvalues of ``U U^T + I``."""
        w = np.linalg.eigvalsh(self.precision())
        return SmoothnessConstants(float(w[0]), float(w[-1]))


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class MultinomialLogRegModel:
    """Softmax regression with ``C`` classes and prior ``N(0, I_{C d})``.

    ``theta`` is the row-major flattening of a ``(C, d)`` weight matrix
    whose row ``c`` scores class ``c``; labels are integers ``0 .. C-1``.
    """

    dataset: FederatedDataset
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        v = self.dataset.labels
        if not np.all(np.equal(np.mod(v, 1), 0)) or v.min() < 0 or v.max() >= self.num_classes:
            raise ValueError(f"labels must be integers in [0, {self.num_classes - 1}]")

    @property
    def input_dim(self):
        return self.dataset.dim

    @property
    def dim(self):
        return self.num_classes * self.dataset.dim

    @property
    def num_devices(self):
        return self.dataset.num_devices

    def _weights(self, theta):
        return _check_theta(theta, self.dim).reshape(self.num_classes, self.input_dim)

    def _onehot(self, labels):
        return np.eye(self.num_classes)[np.asarray(labels).astype(int)]

    def local_cost(self, k, theta):
        W = self._weights(theta)
        U_k, v_k = self.dataset.shard(k)
        Z = W @ U_k
        zmax = Z.max(axis=0)
        lse = zmax + np.log(np.exp(Z - zmax).sum(axis=0))
        picked = Z[v_k.astype(int), np.arange(Z.shape[1])]
        K = self.num_devices
        return float(np.sum(lse - picked) + 0.5 * (W * W).sum() / K)

    def local_gradient(self, k, theta):
        W = self._weights(theta)
        U_k, v_k = self.dataset.shard(k)
        P = softmax(W @ U_k, axis=0)
        P -= self._onehot(v_k).T
        return (P @ U_k.T + W / self.num_devices).ravel()

    def local_gradients(self, theta):
        return np.stack([self.local_gradient(k, theta) for k in range(self.num_devices)])

    def global_gradient(self, theta):
        W = self._weights(theta)
        U, v = self.dataset.covariates, self.dataset.labels
        P = softmax(W @ U, axis=0) - self._onehot(v).T
        return (P @ U.T + W).ravel()

    def predictive_probs(self, theta, u):
        """Class probabilities for one covariate vector or a (d, n) batch."""
        W = self._weights(theta)
        u = np.asarray(u, dtype=float)
        return softmax(W @ u, axis=0)

    def prior(self):
        return GaussianDist(np.zeros(self.dim), np.eye(self.dim))

    def smoothness_constants(self):
        """``mu = 1`` from the prior; ``L = lambda_max(U U^T) / 2 + 1``.

        The Hessian upper bound is ``0.5 (I_C - 11^T / C) kron UU^T + I``; the
        centering matrix has top eigenvalue 1, so the Kronecker product's top
        eigenvalue is that of ``U U^T``.
        """
        U = self.dataset.covariates
        top = float(np.linalg.eigvalsh(U @ U.T)[-1])
        return SmoothnessConstants(1.0, 0.5 * max(top, 0.0) + 1.0)


def local_gradient(model, k, theta):
    """Gradient of device ``k``'s local cost at ``theta``."""
    if not 0 <= k < model.num_devices:
        raise ValueError(f"device index {k} out of range")
    return model.local_gradient(k, theta)


def exact_posterior(model):
    return model.exact_posterior()


def smoothness_constants(model):
    return model.smoothness_constants()


def predictive_probs(model, theta, u):
    return model.predictive_probs(theta, u)
