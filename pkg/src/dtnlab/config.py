"""Scenario configuration: JSON files with domain/coefficient/data presets,
mesh levels, cone aperture, seed, and pass/fail thresholds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError

# Documented defaults; every threshold mirrors the corresponding acceptance
# rule and can be tightened from the config without touching code.
DEFAULT_THRESHOLDS = {
    "spectrum_rel_tol": 0.05,
    "spectrum_zero_tol": 1e-6,
    "mass_symmetry": 1e-10,
    "min_quadform": -1e-10,
    "const_kernel": 1e-9,
    "skew_adjoint": 1e-10,
    "lambda_growth": 1.8,
    "commutator_drift": 0.10,
    "flux_ratio_drift": 0.15,
    "trilinear_scale": 1e-8,
    "trilinear_contraction": 1.8,
    "bilinear_drift": 0.25,
    "embedding_drift": 0.25,
    "extension_drift": 0.15,
    "ellipticity_slack": 0.02,
    "weighted_drift": 0.20,
    "graphmap_drift": 0.10,
    "max_principle_tol": 1e-12,
    "oracle_rel_err": 0.08,
}


@dataclass
class Scenario:
    """One experiment request: data presets, mesh levels, aperture, seed."""

    tag: str = "scenario"
    domain: dict = field(default_factory=lambda: {"preset": "square"})
    coefficients: dict = field(default_factory=lambda: {"preset": "identity"})
    g: dict = field(default_factory=lambda: {"kind": "cos_theta"})
    f: dict = field(default_factory=lambda: {"kind": "fourier_mode", "k": 2})
    levels: list = field(default_factory=lambda: [0.125, 0.0625])
    alpha0: float | None = None
    seed: int = 7
    thresholds: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.levels:
            raise ConfigError("levels must be a nonempty list of mesh sizes")
        lv = [float(x) for x in self.levels]
        if any(b >= a for a, b in zip(lv, lv[1:])):
            raise ConfigError("levels must be strictly decreasing")
        if any(x <= 0 for x in lv):
            raise ConfigError("levels must be positive")
        self.levels = lv
        self.seed = int(self.seed)
        if self.alpha0 is not None:
            self.alpha0 = float(self.alpha0)
            if self.alpha0 <= 1.0:
                raise ConfigError("alpha0 must exceed 1")
        merged = dict(DEFAULT_THRESHOLDS)
        merged.update(self.thresholds)
        self.thresholds = merged


_KNOWN_KEYS = {
    "tag",
    "domain",
    "coefficients",
    "g",
    "f",
    "levels",
    "alpha0",
    "seed",
    "thresholds",
    "options",
}


def scenario_from_dict(data, defaults=None):
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a JSON object")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(defaults or {})
    merged.update(data)
    try:
        return Scenario(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path, defaults=None):
    """Parse a JSON scenario file; parse errors carry line numbers."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return scenario_from_dict(data, defaults)
