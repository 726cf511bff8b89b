"""Scenario configuration and INI loading.

A config file is an INI file whose sections only group keys for the reader;
all keys live in one flat namespace. Example::

    [data]
    model = gauss_linreg
    N = 1200
    m = 5

    [channel]
    kind = rayleigh
    variance = 0.01
    snr_db = 30

    [sampler]
    eta_frac = 0.2
    burn_in = 50
    samples = 50

    [sweep]
    axis = snr_db
    values = 0, 10, 20, 30

Every key not given keeps the default listed on :class:`ScenarioConfig`.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass

THETA_STAR = (0.071, -0.518, 0.9342, 0.7198, 0.4676)

POLICY_KINDS = ("optimized", "equal", "no_dp", "noiseless_dp", "noiseless_no_dp")
SWEEP_AXES = ("none", "snr_db", "power", "eta", "eta_frac", "epsilon", "burn_in")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one experiment.

    Attributes
    ----------
    model : {"gauss_linreg", "logistic"}
    data : {"synthetic", "idx"}
    N, m, theta_star, label_noise, data_seed
        Synthetic regression data.
    idx_images, idx_labels, pca_dim, per_class, classes, projection_out
        IDX data with PCA.
    test_images, test_labels
        Optional held-out IDX files for the calibration error.
    K : int
        Number of devices.
    channel : {"constant", "rayleigh", "file"}
    gain, variance, channel_file
        Constant magnitude, Rayleigh ``CN(0, variance)``, or CSV trace.
    eta, eta_frac
        Step size, absolute or as a fraction of ``2 / (mu + L)``. Exactly
        one must be set.
    epsilon, delta : float
    power, snr_db
        Power budget, absolute or as ``10 log10(P / (m N0))``. Exactly one
        must be set; ``power = inf`` removes the constraint.
    N0 : float
    burn_in, samples : int
    ell : float
    reps : int
    seed : int
    policies : tuple of str
    objective : {"max", "mean"}
    tight : bool
        Use the tighter error factor in the bound.
    w2_init : float or None
        Initial squared distance for models without a closed-form posterior.
    axis, values
        Sweep axis and grid.
    checkpoints : tuple of int
        Rounds at which empirical distances are reported.
    """

    name: str = "scenario"
    model: str = "gauss_linreg"
    data: str = "synthetic"
    N: int = 1200
    m: int = 5
    theta_star: tuple = THETA_STAR
    label_noise: float = 1.0
    data_seed: int = 0
    idx_images: str = ""
    idx_labels: str = ""
    pca_dim: int = 30
    per_class: int = 1200
    classes: int = 10
    projection_out: str = ""
    test_images: str = ""
    test_labels: str = ""
    K: int = 30
    channel: str = "constant"
    gain: float = 0.01
    variance: float = 0.01
    channel_file: str = ""
    eta: float | None = None
    eta_frac: float | None = 0.2
    epsilon: float = 8.0
    delta: float = 0.01
    power: float | None = None
    snr_db: float | None = 20.0
    N0: float = 1.0
    burn_in: int = 50
    samples: int = 1
    ell: float = 30.0
    reps: int = 1
    seed: int = 0
    policies: tuple = POLICY_KINDS
    objective: str = "max"
    tight: bool = False
    w2_init: float | None = None
    axis: str = "none"
    values: tuple = ()
    checkpoints: tuple = ()

    def __post_init__(self):
        if self.model not in ("gauss_linreg", "logistic"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.data not in ("synthetic", "idx"):
            raise ConfigError(f"unknown data source {self.data!r}")
        if self.channel not in ("constant", "rayleigh", "file"):
            raise ConfigError(f"unknown channel kind {self.channel!r}")
        if (self.eta is None) == (self.eta_frac is None):
            raise ConfigError("set exactly one of eta and eta_frac")
        if (self.power is None) == (self.snr_db is None):
            raise ConfigError("set exactly one of power and snr_db")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.K < 1 or self.samples < 1 or self.burn_in < 0:
            raise ConfigError("need K >= 1, samples >= 1, burn_in >= 0")
        if self.objective not in ("max", "mean"):
            raise ConfigError("objective must be max or mean")
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; choose from {SWEEP_AXES}")
        bad = [p for p in self.policies if p not in POLICY_KINDS]
        if bad:
            raise ConfigError(f"unknown policies {bad}")
        if self.data == "synthetic" and len(self.theta_star) != self.m:
            raise ConfigError(f"theta_star has {len(self.theta_star)} entries, m = {self.m}")

    @property
    def rounds(self):
        return self.burn_in + self.samples

    def replace(self, **changes):
        """Copy with some fields changed; switching eta/power form clears the other."""
        if "eta" in changes and "eta_frac" not in changes:
            changes["eta_frac"] = None
        if "eta_frac" in changes and "eta" not in changes:
            changes["eta"] = None
        if "power" in changes and "snr_db" not in changes:
            changes["snr_db"] = None
        if "snr_db" in changes and "power" not in changes:
            changes["power"] = None
        return dataclasses.replace(self, **changes)

    def at(self, value):
        """Config of one sweep point."""
        if self.axis == "none":
            return self
        if self.axis == "burn_in":
            S = self.rounds
            b = int(value)
            if not 0 <= b < S:
                raise ConfigError(f"burn-in {b} leaves no retained rounds out of {S}")
            # total rounds stay fixed; the rest are retained
            return self.replace(burn_in=b, samples=S - b)
        if self.axis in ("snr_db", "power", "eta", "eta_frac", "epsilon"):
            return self.replace(**{self.axis: float(value)})
        raise ConfigError(self.axis)


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_INT = {"N", "m", "data_seed", "pca_dim", "per_class", "classes", "K", "burn_in", "samples", "reps", "seed"}
_FLOAT = {"label_noise", "gain", "variance", "eta", "eta_frac", "epsilon", "delta", "power", "snr_db", "N0",
          "ell", "w2_init"}
_ALIASES = {"kind": "channel", "sweep_axis": "axis", "sweep_values": "values", "policy": "policies"}


def _split(text):
    return tuple(x.strip() for x in text.replace(";", ",").split(",") if x.strip())


def parse_value(key, text):
    """Convert the text of one config entry to the field's type."""
    key = _ALIASES.get(key, key)
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    text = text.strip()
    try:
        if key in _FLOAT:
            return None if text.lower() in ("", "none") else float(text)
        if key in _INT:
            return int(text)
        if key == "tight":
            return text.lower() in ("1", "true", "yes", "on")
        if key == "theta_star":
            return tuple(float(x) for x in _split(text))
        if key == "values":
            return tuple(float(x) for x in _split(text))
        if key == "checkpoints":
            return tuple(int(x) for x in _split(text))
        if key == "policies":
            return _split(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def config_from_mapping(items, base=None):
    """Build a config from ``key -> text`` pairs on top of ``base``."""
    changes = {}
    for key, text in items.items():
        k = _ALIASES.get(key, key)
        changes[k] = parse_value(k, text)
    base = base or ScenarioConfig()
    return base.replace(**changes)


def load_config(path, base=None):
    """Read an INI file; section names are ignored, duplicate keys are an error."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    items = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            if key in items:
                raise ConfigError(f"key {key!r} given twice")
            items[key] = val
    return config_from_mapping(items, base)


def parse_overrides(pairs):
    """``["key=value", ...]`` from the command line into a mapping."""
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ConfigError(f"override {p!r} is not key=value")
        k, v = p.split("=", 1)
        out[k.strip()] = v
    return out
