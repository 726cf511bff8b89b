"""Block flat-fading multiple-access channel with truncated channel inversion.

Channels are represented by their magnitudes ``|h_k^[s]|``; phase is assumed
pre-compensated by the transmitters. A device is scheduled in round ``s``
when its magnitude reaches the threshold ``g^[s]``, and then transmits
``(alpha / h_k) * grad_k`` so that the received superposition is
``alpha * sum(grad_k) + z`` with ``z ~ N(0, N0 I)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

# relative slack on the power check, so that the full-power gain passes
POWER_RTOL = 1e-12


class SchedulingError(RuntimeError):
    """No device is scheduled, so the round cannot be inverted."""


class PowerViolationError(RuntimeError):
    """A scheduled device would exceed its per-block power budget."""


@dataclass(frozen=True)
class ChannelTrace:
    """Channel magnitudes for ``K`` devices over ``S`` rounds.

    Parameters
    ----------
    gains : ndarray, shape (K, S)
        Nonnegative magnitudes ``|h_k^[s]|``.
    noise_power : float
        ``N0``, the per-channel-use noise variance.
    power_budget : float
        ``P``, the per-block transmit energy bound. ``inf`` disables it.
    """

    gains: np.ndarray
    noise_power: float
    power_budget: float

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.gains, dtype=float))
        if G.ndim != 2 or G.shape[1] < 1 or G.shape[0] < 1:
            raise ValueError("gains must be a (K, S) matrix with K, S >= 1")
        if np.any(G < 0) or not np.all(np.isfinite(G)):
            raise ValueError("gains must be finite and nonnegative")
        if self.noise_power < 0:
            raise ValueError("noise power must be nonnegative")
        if not self.power_budget > 0:
            raise ValueError("power budget must be positive")
        G.setflags(write=False)
        object.__setattr__(self, "gains", G)
        object.__setattr__(self, "noise_power", float(self.noise_power))
        object.__setattr__(self, "power_budget", float(self.power_budget))

    @property
    def num_devices(self):
        return self.gains.shape[0]

    @property
    def rounds(self):
        return self.gains.shape[1]

    def column(self, s):
        """Gains of round ``s`` (0-based)."""
        return self.gains[:, s]

    def is_constant(self):
        return bool(np.all(self.gains == self.gains[:, :1]))

    @classmethod
    def constant(cls, K, S, gain, noise_power, power_budget):
        return cls(np.full((K, S), float(gain)), noise_power, power_budget)

    @classmethod
    def rayleigh(cls, K, S, variance, noise_power, power_budget, rng):
        """Magnitudes of ``CN(0, variance)`` draws, i.i.d. over devices and rounds."""
        h = rng.standard_normal((K, S)) + 1j * rng.standard_normal((K, S))
        return cls(np.abs(h) * np.sqrt(variance / 2.0), noise_power, power_budget)

    def with_power(self, power_budget):
        return ChannelTrace(self.gains, self.noise_power, power_budget)

    def to_csv(self, path):
        """Rows are devices, columns are rounds; ``N0`` and ``P`` go in a comment line."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# noise_power={self.noise_power!r},power_budget={self.power_budget!r}\n")
            w = csv.writer(fh)
            for row in self.gains:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, noise_power=None, power_budget=None):
        meta = {}
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for item in line[1:].split(","):
                        if "=" in item:
                            key, val = item.split("=", 1)
                            meta[key.strip()] = float(val)
                    continue
                rows.append([float(x) for x in line.split(",")])
        if noise_power is None:
            noise_power = meta.get("noise_power")
        if power_budget is None:
            power_budget = meta.get("power_budget")
        if noise_power is None or power_budget is None:
            raise ValueError(f"{path}: noise_power and power_budget must be given or stored in the file")
        return cls(np.array(rows), noise_power, power_budget)


@dataclass(frozen=True)
class SchedulingDecision:
    """Devices whose channel magnitude clears the threshold."""

    active_set: frozenset
    mask: np.ndarray

    @property
    def active_count(self):
        return len(self.active_set)


def active_set(gains, threshold):
    """Schedule exactly the devices with ``gain >= threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    mask = np.asarray(gains, dtype=float) >= threshold
    return SchedulingDecision(frozenset(np.flatnonzero(mask).tolist()), mask)


def check_power(alpha, ell, gain, P):
    """True iff the worst-case energy ``(alpha * ell / gain)^2`` fits in ``P``."""
    if alpha == 0:
        return True
    if gain <= 0:
        return False
    return (alpha * ell) ** 2 <= P * gain ** 2 * (1.0 + POWER_RTOL)


def full_power_gain(P, gains, ell):
    """Largest ``alpha`` meeting the power bound for every device in ``gains``."""
    gains = np.asarray(gains, dtype=float)
    if gains.size == 0:
        raise SchedulingError("no scheduled device")
    return float(np.sqrt(P) * gains.min() / ell)


def aircomp_round(gradients, alpha, gains, threshold, noise_power, rng, ell=None, power_budget=None,
                  noise=None):
    """Superimpose the channel-inverted gradients of the scheduled devices.

    Parameters
    ----------
    gradients : ndarray, shape (K, m)
        Local gradients of every device; only scheduled rows are sent.
    alpha : float
        Common power gain, ``> 0``.
    gains : ndarray, shape (K,)
        Channel magnitudes of this round.
    threshold : float
    noise_power : float
    rng : numpy.random.Generator or None
        Source of the channel noise; ignored when ``noise`` is given.
    ell, power_budget : float, optional
        When both are given, each scheduled device is checked against the
        worst-case energy ``(alpha * ell / |h_k|)^2 <= P``.
    noise : ndarray, shape (m,), optional
        Pre-drawn standard normal vector for the channel noise.

    Returns
    -------
    y : ndarray, shape (m,)
    decision : SchedulingDecision
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
    gains = np.asarray(gains, dtype=float)
    decision = active_set(gains, threshold)
    m = gradients.shape[1]
    if ell is not None and power_budget is not None:
        for k in sorted(decision.active_set):
            if not check_power(alpha, ell, gains[k], power_budget):
                raise PowerViolationError(
                    f"device {k}: (alpha*ell/|h|)^2 = {(alpha * ell / gains[k]) ** 2:.6g} > P = {power_budget:.6g}")
    y = np.zeros(m)
    for k in sorted(decision.active_set):
        x_k = (alpha / gains[k]) * gradients[k]
        y += gains[k] * x_k
    if noise is None:
        noise = rng.standard_normal(m) if noise_power > 0 else np.zeros(m)
    y += np.sqrt(noise_power) * np.asarray(noise, dtype=float)
    return y, decision


def snr_to_power(snr, dim, noise_power):
    """``P = SNR * m * N0``."""
    return snr * dim * noise_power


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)
