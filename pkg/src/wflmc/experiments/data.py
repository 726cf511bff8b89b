"""Synthetic regression data and IDX image ingestion with PCA."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..model import FederatedDataset
from .config import THETA_STAR

# IDX type codes
_IDX_DTYPES = {0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
               0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8")}
IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; ``offset`` is the byte position of the problem."""

    def __init__(self, path, offset, msg):
        super().__init__(f"{path}: byte {offset}: {msg}")
        self.path = path
        self.offset = offset


def generate_synthetic(N=1200, m=5, theta_star=THETA_STAR, seed=0, K=30, noise=1.0):
    """Linear-Gaussian data ``v = theta_star^T u + noise * e`` with ``u, e`` standard normal.

    ``noise = 0`` gives noiseless labels. Shards are a contiguous equal split.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (m,):
        raise ValueError(f"theta_star must have length m = {m}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1,))))
    U = rng.standard_normal((m, N))
    v = theta_star @ U + noise * rng.standard_normal(N)
    return FederatedDataset.equal_split(U, v, K)


def read_idx(path, expected_magic=None):
    """Read an IDX file into an array of its stored shape."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxFormatError(path, len(raw), "file shorter than the 4-byte magic number")
    magic = struct.unpack(">I", raw[:4])[0]
    if raw[0] != 0 or raw[1] != 0:
        raise IdxFormatError(path, 0, f"bad magic number 0x{magic:08x}")
    if expected_magic is not None and magic != expected_magic:
        raise IdxFormatError(path, 0, f"magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_DTYPES:
        raise IdxFormatError(path, 2, f"unknown data type code 0x{code:02x}")
    if ndim == 0:
        raise IdxFormatError(path, 3, "zero dimensions")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxFormatError(path, len(raw), f"truncated header, need {head} bytes")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    dt = _IDX_DTYPES[code]
    need = head + int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(raw) < need:
        raise IdxFormatError(path, len(raw), f"truncated data, need {need} bytes")
    return np.frombuffer(raw[head:need], dtype=dt).reshape(dims)


def write_idx(path, array):
    """Write an unsigned-byte array as IDX (used for fixtures and round trips)."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, 0x08, a.ndim]))
        fh.write(struct.pack(f">{a.ndim}I", *a.shape))
        fh.write(a.tobytes())


@dataclass(frozen=True)
class PcaProjection:
    """Centering vector and orthonormal rows mapping pixels to scores."""

    mean: np.ndarray
    components: np.ndarray

    def transform(self, X):
        """Scores of the rows of ``X``, shape (n, target_dim)."""
        return (np.asarray(X, dtype=float) - self.mean) @ self.components.T

    def inverse(self, scores):
        return scores @ self.components + self.mean

    def save(self, path):
        np.savez(path, mean=self.mean, components=self.components)

    @classmethod
    def load(cls, path):
        with np.load(path) as f:
            return cls(f["mean"], f["components"])


def fit_pca(X, target_dim):
    X = np.asarray(X, dtype=float)
    if not 1 <= target_dim <= X.shape[1]:
        raise ValueError(f"target_dim must lie in [1, {X.shape[1]}]")
    mean = X.mean(axis=0)
    _, _, Vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = Vt[:target_dim]
    if comps.shape[0] < target_dim:
        # fewer samples than pixels: complete the basis
        q, _ = np.linalg.qr(np.vstack([comps, np.eye(X.shape[1])]).T)
        comps = q.T[:target_dim]
    return PcaProjection(mean, comps)


def balanced_indices(labels, per_class, classes, seed=0):
    """``per_class`` indices of each class, drawn without replacement."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(3,))))
    out = []
    for c in range(classes):
        idx = np.flatnonzero(labels == c)
        if idx.size < per_class:
            raise ValueError(f"class {c} has {idx.size} samples, need {per_class}")
        out.append(np.sort(rng.choice(idx, per_class, replace=False)))
    return np.concatenate(out)


def load_idx_and_pca(image_path, label_path, target_dim=30, per_class=1200, classes=10, K=30, seed=0,
                     projection_path=None, projection=None):
    """Balanced subsample of an IDX image set, projected onto its top principal components.

    Pixels are scaled to ``[0, 1]``. The projection is fitted on the subsample
    unless ``projection`` is given, and saved to ``projection_path`` if set.

    Returns
    -------
    dataset : FederatedDataset
        Covariates are the PCA scores (target_dim, N); labels are 0-based.
    projection : PcaProjection
    """
    images = read_idx(image_path, IMAGE_MAGIC)
    labels = read_idx(label_path, LABEL_MAGIC).astype(int)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    idx = balanced_indices(labels, per_class, classes, seed)
    X, y = X[idx], labels[idx]
    if projection is None:
        projection = fit_pca(X, target_dim)
    if projection_path:
        projection.save(projection_path)
    scores = projection.transform(X)
    # shuffle so that each shard holds every class
    perm = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(4,)))).permutation(len(y))
    return FederatedDataset.equal_split(scores[perm].T, y[perm].astype(float), K), projection
