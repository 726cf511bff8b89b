"""Gaussian 2-Wasserstein distance, moment estimates and calibration error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GaussianDist


def matrix_sqrt_psd(M):
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues down to ``-1e-10 * lambda_max`` are treated as round-off and
    clamped to zero; anything more negative is rejected.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.abs(M).max(), 1e-300)
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    top = max(w[-1], 0.0)
    if w[0] < -1e-10 * top or (top == 0 and w[0] < 0):
        raise ValueError(f"matrix is not PSD (smallest eigenvalue {w[0]:.3g})")
    w = np.clip(w, 0.0, None)
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def gaussian_w2_sq(p1, p2):
    """Squared 2-Wasserstein distance between two Gaussians.

    ``|m1 - m2|^2 + tr(C1 + C2 - 2 (C2^1/2 C1 C2^1/2)^1/2)``, clipped at 0.
    """
    m1, m2 = np.asarray(p1.mean, dtype=float), np.asarray(p2.mean, dtype=float)
    if m1.shape != m2.shape:
        raise ValueError("dimension mismatch")
    C1, C2 = np.asarray(p1.cov, dtype=float), np.asarray(p2.cov, dtype=float)
    r2 = matrix_sqrt_psd(C2)
    cross = matrix_sqrt_psd(r2 @ C1 @ r2)
    val = float(np.sum((m1 - m2) ** 2) + np.trace(C1) + np.trace(C2) - 2.0 * np.trace(cross))
    return max(val, 0.0)


@dataclass(frozen=True)
class MomentEstimate:
    mean: np.ndarray
    cov: np.ndarray
    rep_count: int

    def as_gaussian(self):
        return GaussianDist(self.mean, self.cov)


def empirical_moments(samples):
    """Sample mean and unbiased covariance of ``R`` vectors (rows of ``samples``)."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    R = X.shape[0]
    if R < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    D = X - mean
    cov = D.T @ D / (R - 1)
    return MomentEstimate(mean, 0.5 * (cov + cov.T), R)


def empirical_w2_curve(thetas, target):
    """W2^2 from the Gaussian fit across repetitions to ``target``, per round.

    Parameters
    ----------
    thetas : ndarray, shape (R, S + 1, m)
        Iterates of ``R`` repetitions.
    target : GaussianDist

    Returns
    -------
    ndarray, shape (S + 1,)
    """
    thetas = np.asarray(thetas, dtype=float)
    return np.array([gaussian_w2_sq(empirical_moments(thetas[:, s]).as_gaussian(), target)
                     for s in range(thetas.shape[1])])


def calibration_error_from_confidence(confidence, correct, bins=15):
    """Binned gap ``sum_b (n_b / n) |acc_b - conf_b|`` over equal-width confidence bins."""
    conf = np.asarray(confidence, dtype=float).ravel()
    corr = np.asarray(correct, dtype=float).ravel()
    if conf.size == 0:
        raise ValueError("empty input")
    if conf.shape != corr.shape:
        raise ValueError("confidence and correctness must have the same length")
    if bins < 1:
        raise ValueError("need at least one bin")
    if np.any(conf < 0) or np.any(conf > 1):
        raise ValueError("confidences must lie in [0, 1]")
    # bins are (lo, hi]; confidence 0 goes to the first bin
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    n = conf.size
    ece = 0.0
    for b in range(bins):
        sel = idx == b
        nb = sel.sum()
        if nb:
            ece += nb / n * abs(corr[sel].mean() - conf[sel].mean())
    return float(ece)


def expected_calibration_error(probs, labels, bins=15):
    """Top-label ECE of predictive probabilities.

    Parameters
    ----------
    probs : ndarray, shape (n, C)
    labels : ndarray, shape (n,)
        Integer class labels.
    bins : int
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels).astype(int)
    if probs.shape[0] == 0:
        raise ValueError("empty input")
    pred = probs.argmax(axis=1)
    return calibration_error_from_confidence(probs.max(axis=1), pred == labels, bins)


def ensemble_predictive(model, samples, U):
    """Average class probabilities over posterior samples.

    Parameters
    ----------
    model : MultinomialLogRegModel
    samples : ndarray, shape (n_samples, m)
    U : ndarray, shape (d, n)

    Returns
    -------
    ndarray, shape (n, C)
    """
    acc = None
    for theta in samples:
        p = model.predictive_probs(theta, U)
        acc = p if acc is None else acc + p
    return (acc / len(samples)).T
