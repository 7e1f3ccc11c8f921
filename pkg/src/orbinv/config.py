"""Run configuration: JSON schema, validation and the built-in presets."""

from __future__ import annotations

import copy
import json
import math

from . import bozis, families
from .dynamics import mercury_b

DEFAULTS = {
    "family": None,
    "grid": {
        "r_min": 0.5,
        "r_max": 3.0,
        "n_r": 10,
        "theta_min": 0.1,
        "theta_max": 2.0 * math.pi - 0.1,
        "n_theta": 20,
        "min_abs_x": 0.05,
        "filter": None,
        "filter_margin": 0.05,
    },
    "b_samples": [1.1, 1.5, 2.0, 2.5],
    "order": bozis.PIPELINE_ORDER,
    "tolerances": {
        "tol_zero": 1e-8,
        "tol_nonzero": 1e-6,
        "min_survival": 0.8,
        "slope_floor": 0.05,
        "straight_floor": 0.02,
        "pq_spread": 1e-7,
        "pq_integrability": 1e-7,
        "rtol": 1e-11,
        "atol": 1e-13,
        "verify_threshold": 1e-8,
    },
    "force": None,
    "derive": {"anchor": [0.6, 0.1], "X0": 1.0, "path": "xy", "stride": 1},
    "orbit": None,
}

PRESETS = {
    "precessing": {
        "family": {"kind": "precessing_cartesian", "constants": {"e": 0.3, "theta0": 0.2}},
        "grid": {"r_min": 0.5, "r_max": 3.0, "n_r": 10, "n_theta": 20, "filter": "oracle"},
        "b_samples": [1.1, 1.5, 2.0, 2.5],
        "force": {"kind": "newton", "F0": 1.0},
    },
    "kepler": {
        "family": {"kind": "precessing_by_eccentricity", "constants": {"e": 0.3, "p": 1.0, "b": 1.0}},
        "grid": {"r_min": 0.4, "r_max": 0.8, "n_r": 6, "n_theta": 12},
        "b_samples": [0.2, 0.35, 0.5, 0.65],
        "force": {"kind": "newton", "F0": 1.0},
        "derive": {"anchor": [0.6, 0.1], "X0": 1.0, "path": "xy", "stride": 3},
    },
    "sho": {
        "family": {"expression": "x^2+b*y^2", "constants": {}, "param": "b"},
        "grid": {"r_min": 0.5, "r_max": 2.0, "n_r": 6, "n_theta": 12},
        "b_samples": [0.5, 1.5, 2.0, 3.0],
        "tolerances": {"verify_threshold": 1e-10},
        "force": {"kind": "expression", "X": "-x", "Y": "-y"},
    },
    "lines": {
        "family": {"expression": "y-b*x", "constants": {}, "param": "b"},
        "grid": {"r_min": 0.5, "r_max": 2.0, "n_r": 5, "n_theta": 8},
        "b_samples": [0.5, 1.0, 2.0, 3.0],
        "force": {"kind": "expression", "X": "0", "Y": "0"},
    },
    "circle": {
        "family": {"kind": "precessing_cartesian", "constants": {"e": 0.0, "theta0": 0.0}},
        # circles have gamma = y/x: keep the angles clear of the axes
        "grid": {"r_min": 0.5, "r_max": 1.5, "n_r": 5, "theta_min": 0.2, "theta_max": 1.37, "n_theta": 8},
        "b_samples": [1.1, 1.5, 2.0, 2.5],
    },
    "manufactured": {
        "pq": {"P": "1/x", "Q": "1/y", "rho": "1"},
        "grid": {"r_min": 1.0, "r_max": 3.0, "n_r": 4, "theta_min": 0.2, "theta_max": 1.4, "n_theta": 4},
        "derive": {"anchor": [1.0, 1.0], "X0": 1.0, "path": "xy", "stride": 1},
    },
    "manev": {
        "orbit": {"F0": 1.0, "p": 1.0, "b": 1.2, "e": 0.3, "theta0": 0.0, "revolutions": 3.0,
                  "beta_mode": "binet"},
    },
    "mercury": {
        "orbit": {"F0": 1.0, "p": 1.0, "b": mercury_b(), "e": 0.2056, "theta0": 0.0, "revolutions": 51.5,
                  "beta_mode": "binet"},
        "tolerances": {"rtol": 1e-12, "atol": 1e-14},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load(path=None, preset=None) -> dict:
    """Defaults, then the preset, then the file. A ``report.json`` is accepted
    too: its echoed ``config`` is used."""
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[preset])
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        cfg = _merge(cfg, data)
    return cfg


def validate(cfg: dict, need_family=True, need_classification=True):
    g = cfg["grid"]
    if g["n_r"] < 4 or g["n_theta"] < 4:
        raise ConfigError("grid counts must be >= 4 per axis")
    if not 0 < g["r_min"] < g["r_max"]:
        raise ConfigError("grid radii must satisfy 0 < r_min < r_max")
    if g.get("filter") not in (None, "oracle"):
        raise ConfigError(f"unknown grid filter {g['filter']!r}")
    if need_family and cfg.get("family") is None:
        raise ConfigError("config has no family")
    if need_classification and len(set(cfg["b_samples"])) < 3:
        raise ConfigError("b_samples needs at least 3 distinct values")
    if cfg["order"] < bozis.PIPELINE_ORDER and need_classification:
        raise ConfigError(f"order must be >= {bozis.PIPELINE_ORDER}")


def family_from(cfg: dict) -> families.FamilySpec:
    fam = cfg["family"]
    try:
        if "expression" in fam:
            return families.user_expression(fam["expression"], fam.get("constants", {}), fam.get("param", "b"),
                                            fam.get("value", "c"))
        kind = fam["kind"]
        c = fam.get("constants", {})
        if kind == families.PRECESSING_CARTESIAN:
            return families.precessing_cartesian(c["e"], c["theta0"])
        if kind == families.PRECESSING_BY_ECCENTRICITY:
            return families.precessing_by_eccentricity(c["e"], c.get("p", 1.0), c.get("b", 1.0))
    except KeyError as err:
        raise ConfigError(f"family is missing {err}") from None
    raise ConfigError(f"unknown family kind {fam.get('kind')!r}")


def grid_from(cfg: dict, spec: families.FamilySpec | None = None):
    g = cfg["grid"]
    accept = None
    if g.get("filter") == "oracle":
        if spec is None or spec.kind != families.PRECESSING_CARTESIAN:
            raise ConfigError("the oracle grid filter needs a precessing_cartesian family")
        e, th0, m = spec.constants["e"], spec.constants["theta0"], g.get("filter_margin", 0.05)
        bs = list(cfg["b_samples"])

        def accept(t):
            return all(families.oracle_admissible(e, th0, b, t, m) for b in bs)

    return bozis.polar_grid(g["r_min"], g["r_max"], g["n_r"], g["theta_min"], g["theta_max"], g["n_theta"],
                            accept=accept, min_abs_x=g.get("min_abs_x", 0.05))


def tolerances_from(cfg: dict) -> bozis.Tolerances:
    t = cfg["tolerances"]
    keys = ("tol_zero", "tol_nonzero", "min_survival", "slope_floor", "straight_floor", "pq_spread",
            "pq_integrability")
    return bozis.Tolerances(**{k: float(t[k]) for k in keys if k in t})
