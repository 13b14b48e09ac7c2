"""Run configuration: defaults, validation, canonical hashing.

A configuration is a plain nested dict (JSON file on disk).  Validation
reports every offending field by path; the canonical hash (sha256 of the
sorted-key JSON) names the run directory, so identical configurations land
in identical places and rerunning is byte-reproducible.
"""

from __future__ import annotations

import copy
import hashlib
import json

from .grid import DomainSpec, build_grid

DEFAULTS = {
    "seed": 7,
    "domain": {
        "shape": "unit_square",
        "omega_center": [0.5, 0.5],
        "omega_radius": 0.25,
        "gamma0": "full_boundary",
    },
    "grid": {"nx": 64, "ny": 64, "nt": 64, "T": 1.0},
    "coeffs": {"b": 0.3, "c": 0.4, "r0": 0.6, "delta0": 0.1},
    "solver": {"scheme": "imex_cn", "bc": "dirichlet0", "amplitude": 1.0,
               "n_modes": 4},
    "identity": {"n_fields": 10, "lambdas": [2.0, 8.0], "mus": [1.5, 3.0],
                 "threshold": 1e-6},
    "scan": {"lambdas": [2.0, 4.0, 8.0, 16.0, 32.0, 64.0], "mus": [1.5, 2.0, 3.0],
             "variants": ["interior", "boundary", "linear_interior",
                          "linear_boundary"],
             "n_trajectories": 5},
    "stability": {"deltas": [1e-3, 1e-2, 1e-1],
                  "eps_fractions": [0.05, 0.1, 0.2],
                  "variants": ["interior", "boundary"]},
    "output_dir": None,
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError([f"{path}{key}: unknown field"])
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def load_config(path=None, overrides=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    errs = []

    def need(cond, path, msg):
        if not cond:
            errs.append(f"{path}: {msg}")

    d = cfg["domain"]
    need(d["shape"] in ("unit_square", "unit_disk"), "domain.shape",
         "must be unit_square or unit_disk")
    need(d["gamma0"] in ("full_boundary", "none"), "domain.gamma0",
         "must be full_boundary or none")
    need(isinstance(d["omega_center"], (list, tuple)) and len(d["omega_center"]) == 2,
         "domain.omega_center", "must be a pair")
    need(d["omega_radius"] > 0, "domain.omega_radius", "must be positive")

    g = cfg["grid"]
    for k in ("nx", "ny", "nt"):
        need(isinstance(g[k], int) and g[k] >= 16, f"grid.{k}", "must be an int >= 16")
    need(g["T"] > 0, "grid.T", "must be positive")

    c = cfg["coeffs"]
    need(0 < c["r0"] < 1, "coeffs.r0", "must lie in (0, 1)")
    need(0 < c["delta0"] < 0.125, "coeffs.delta0", "must lie in (0, 1/8)")

    s = cfg["solver"]
    need(s["scheme"] in ("imex_be", "imex_cn"), "solver.scheme",
         "must be imex_be or imex_cn")
    need(s["bc"] in ("dirichlet0", "neumann0"), "solver.bc",
         "must be dirichlet0 or neumann0 (data-carrying bcs are API-only)")
    need(s["amplitude"] > 0, "solver.amplitude", "must be positive")
    need(1 <= s["n_modes"] <= 8, "solver.n_modes", "must lie in 1..8")

    ident = cfg["identity"]
    need(ident["n_fields"] >= 1, "identity.n_fields", "must be >= 1")
    need(ident["threshold"] > 0, "identity.threshold", "must be positive")
    for i, lam in enumerate(ident["lambdas"]):
        need(lam > 1, f"identity.lambdas[{i}]", "must exceed 1")
    for i, mu in enumerate(ident["mus"]):
        need(mu > 1, f"identity.mus[{i}]", "must exceed 1")

    sc = cfg["scan"]
    for i, lam in enumerate(sc["lambdas"]):
        need(lam > 1, f"scan.lambdas[{i}]", "must exceed 1")
    for i, mu in enumerate(sc["mus"]):
        need(mu > 1, f"scan.mus[{i}]", "must exceed 1")
    for i, v in enumerate(sc["variants"]):
        need(v in ("interior", "boundary", "linear_interior", "linear_boundary"),
             f"scan.variants[{i}]", "unknown variant")
    need(sc["n_trajectories"] >= 1, "scan.n_trajectories", "must be >= 1")

    st = cfg["stability"]
    for i, dl in enumerate(st["deltas"]):
        need(dl > 0, f"stability.deltas[{i}]", "must be positive")
    for i, fr in enumerate(st["eps_fractions"]):
        need(0 < fr < 0.5, f"stability.eps_fractions[{i}]", "must lie in (0, 0.5)")
    for i, v in enumerate(st["variants"]):
        need(v in ("interior", "boundary"), f"stability.variants[{i}]",
             "must be interior or boundary")

    if errs:
        raise ConfigError(errs)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def build_domain(cfg: dict) -> DomainSpec:
    d = cfg["domain"]
    return DomainSpec(shape=d["shape"], omega_center=tuple(d["omega_center"]),
                      omega_radius=d["omega_radius"], gamma0=d["gamma0"])


def build_run_grid(cfg: dict):
    g = cfg["grid"]
    return build_grid(build_domain(cfg), g["nx"], g["ny"], g["nt"], g["T"])
