"""Experiment configuration: JSON documents in, validated dataclasses out."""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .ensemble import MODELS, EnsembleConfig, PotentialSpec
from .errors import ConfigError, DomainError

EXPERIMENTS = ("Sample", "Spectrum", "PoissonTest", "GapRatioSweep", "Localization",
               "DbmStability", "RpTest", "IdentityCheck", "WegnerMinami")

# experiment -> default params; every key listed here is accepted
DEFAULT_PARAMS: Dict[str, Dict[str, Any]] = {
    "Sample": {"save_matrices": True},
    "Spectrum": {"eigenvectors": False, "bulk_fraction": 0.2},
    "PoissonTest": {"B": [-2.0, 2.0], "scale": None, "pool": "mesoscopic", "bulk_fraction": 0.2,
                    "z": [[0.0, 1.0]], "truncation_m": None},
    "GapRatioSweep": {"c_values": [-1.5, -0.5, 0.5, 1.5], "bulk_fraction": 0.2},
    "Localization": {"n_values": None, "m_fraction": 0.5, "w": 0.1, "site": 1,
                     "truncated_check": True},
    "DbmStability": {"c_flow": None, "eta_factors": [4.0, 1.0, 0.25], "site": 1, "green": True,
                     "t": None},
    "RpTest": {"c": None, "bulk_fraction": 0.2, "w": 0.1, "site": 1, "localization": False},
    "IdentityCheck": {"N": None, "eta_min": 1e-3, "eta_max": 1.0, "energy_halfwidth": 2.0,
                      "drift_tol": 1e-8, "ward_tol": 1e-10, "poisson_tol": 1e-10},
    "WegnerMinami": {"width_factors": [4.0, 2.0, 1.0], "region": [-0.5, 0.5],
                     "spectral_averaging": False, "site": 1},
}


def canonical_experiment(name: str) -> Optional[str]:
    key = str(name).replace("-", "").replace("_", "").lower()
    for e in EXPERIMENTS:
        if e.lower() == key:
            return e
    return None


def default_workers() -> int:
    env = os.environ.get("HRMT_WORKERS")
    if env:
        try:
            w = int(env)
            if w >= 1:
                return w
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass
class ExperimentConfig:
    experiment: str
    ensemble: EnsembleConfig
    realizations: int = 1
    master_seed: int = 0
    energy: float = 0.0
    workers: int = field(default_factory=default_workers)
    output_dir: str = "hrmt_out"
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        merged = copy.deepcopy(DEFAULT_PARAMS.get(self.experiment, {}))
        merged.update(self.params or {})
        self.params = merged

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "ensemble": self.ensemble.to_dict(),
                "realizations": self.realizations, "master_seed": self.master_seed,
                "energy": self.energy, "workers": self.workers,
                "output_dir": str(self.output_dir), "params": self.params}

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**d)


def _is_uint(v, bits=64) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and 0 <= v < 2 ** bits


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _ensemble(doc, errors: List[str], experiment: Optional[str]) -> Optional[EnsembleConfig]:
    if doc is None:
        errors.append("ensemble: missing")
        return None
    if not isinstance(doc, dict):
        errors.append("ensemble: must be an object")
        return None
    known = {"n", "c", "normalized", "model", "m", "t", "potential"}
    for k in doc:
        if k not in known:
            errors.append(f"ensemble.{k}: unknown field")
    n = doc.get("n")
    if not _is_uint(n, 6) or n > 14:
        errors.append(f"ensemble.n: must be an integer in 0..14, got {n!r}")
        n = None
    c = doc.get("c", 1.0)
    if not _is_num(c):
        errors.append(f"ensemble.c: must be a finite number, got {c!r}")
    normalized = doc.get("normalized", True)
    if not isinstance(normalized, bool):
        errors.append(f"ensemble.normalized: must be true/false, got {normalized!r}")
    model = doc.get("model", "rosenzweig_porter" if experiment in ("RpTest", "WegnerMinami") else "ultrametric")
    if model not in MODELS:
        errors.append(f"ensemble.model: must be one of {list(MODELS)}, got {model!r}")
    m = doc.get("m")
    if model == "truncated":
        if not _is_uint(m, 8) or (n is not None and m > n):
            errors.append(f"ensemble.m: must satisfy 0 <= m <= n, got {m!r}")
    elif m is not None:
        errors.append("ensemble.m: only valid for the truncated model")
    t = doc.get("t")
    potential = PotentialSpec()
    if model == "rosenzweig_porter":
        if t is None and n is not None and _is_num(c):
            t = float(2 ** n) ** -(1.0 + c)
        if t is None or not _is_num(t) or t < 0:
            errors.append(f"ensemble.t: must be a finite number >= 0, got {t!r}")
        pot = doc.get("potential", {"kind": "uniform", "halfwidth": 1.0})
        try:
            if not isinstance(pot, dict):
                raise DomainError("must be an object")
            potential = PotentialSpec(**pot)
        except (TypeError, DomainError) as exc:
            errors.append(f"ensemble.potential: {exc}")
    elif t is not None:
        errors.append("ensemble.t: only valid for the rosenzweig_porter model")
    if errors:
        return None
    try:
        return EnsembleConfig(n=n, c=float(c), normalized=normalized, model=model,
                              m=m if model == "truncated" else None,
                              t=float(t) if model == "rosenzweig_porter" else None,
                              potential=potential)
    except DomainError as exc:
        errors.append(f"ensemble: {exc}")
        return None


def _check_params(experiment: str, params: dict, ens: Optional[EnsembleConfig], errors: List[str]):
    allowed = DEFAULT_PARAMS[experiment]
    for k in params:
        if k not in allowed:
            errors.append(f"params.{k}: unknown parameter for {experiment}")
    p = dict(allowed)
    p.update(params)

    def need(cond, name, msg):
        if not cond:
            errors.append(f"params.{name}: {msg}, got {p.get(name)!r}")

    if "bulk_fraction" in p:
        need(_is_num(p["bulk_fraction"]) and 0 < p["bulk_fraction"] <= 1, "bulk_fraction", "must be in (0, 1]")
    if "site" in p:
        size = ens.size if ens else None
        need(_is_uint(p["site"]) and p["site"] >= 1 and (size is None or p["site"] <= size),
             "site", "must be a valid 1-based index")
    if experiment == "PoissonTest":
        B = p["B"]
        need(isinstance(B, list) and len(B) == 2 and all(map(_is_num, B)) and B[0] < B[1],
             "B", "must be [a, b] with a < b")
        need(p["scale"] is None or (_is_num(p["scale"]) and p["scale"] > 0), "scale", "must be positive")
        need(p["pool"] in ("mesoscopic", "none"), "pool", "must be 'mesoscopic' or 'none'")
        need(isinstance(p["z"], list) and len(p["z"]) > 0 and all(
            isinstance(z, list) and len(z) == 2 and all(map(_is_num, z)) and z[1] > 0 for z in p["z"]),
            "z", "must be a list of [re, im] with im > 0")
        tm = p["truncation_m"]
        need(tm is None or (isinstance(tm, list) and all(
            _is_uint(m) and (ens is None or m <= ens.n) for m in tm)), "truncation_m",
            "must be a list of levels 0..n")
    if experiment == "GapRatioSweep":
        need(isinstance(p["c_values"], list) and len(p["c_values"]) > 0 and all(map(_is_num, p["c_values"])),
             "c_values", "must be a non-empty list of numbers")
    if experiment == "Localization":
        nv = p["n_values"]
        need(nv is None or (isinstance(nv, list) and len(nv) > 0 and all(_is_uint(v) and 1 <= v <= 14 for v in nv)),
             "n_values", "must be a list of integers in 1..14")
        need(_is_num(p["m_fraction"]) and 0 <= p["m_fraction"] <= 1, "m_fraction", "must be in [0, 1]")
        need(_is_num(p["w"]) and 0 < p["w"] < 1, "w", "must be in (0, 1)")
    if experiment == "DbmStability":
        need(p["c_flow"] is None or (_is_num(p["c_flow"]) and p["c_flow"] > 0), "c_flow", "must be positive")
        need(isinstance(p["eta_factors"], list) and len(p["eta_factors"]) > 0 and all(
            _is_num(e) and e > 0 for e in p["eta_factors"]), "eta_factors", "must be positive numbers")
        need(p["t"] is None or (_is_num(p["t"]) and p["t"] >= 0), "t", "must be >= 0")
    if experiment == "RpTest":
        need(p["c"] is None or _is_num(p["c"]), "c", "must be a number")
        need(_is_num(p["w"]) and 0 < p["w"] < 1, "w", "must be in (0, 1)")
        if ens is not None and ens.model != "rosenzweig_porter":
            errors.append("ensemble.model: RpTest needs the rosenzweig_porter model")
    if experiment == "IdentityCheck":
        need(p["N"] is None or (_is_uint(p["N"]) and 1 <= p["N"] <= 4096), "N", "must be in 1..4096")
        need(_is_num(p["eta_min"]) and _is_num(p["eta_max"]) and 0 < p["eta_min"] <= p["eta_max"],
             "eta_min", "must satisfy 0 < eta_min <= eta_max")
        for tol in ("drift_tol", "ward_tol", "poisson_tol"):
            need(_is_num(p[tol]) and p[tol] > 0, tol, "must be positive")
        need(_is_num(p["energy_halfwidth"]) and p["energy_halfwidth"] >= 0, "energy_halfwidth", "must be >= 0")
    if experiment == "WegnerMinami":
        need(isinstance(p["width_factors"], list) and len(p["width_factors"]) > 0 and all(
            _is_num(f) and f > 0 for f in p["width_factors"]), "width_factors", "must be positive numbers")
        r = p["region"]
        need(isinstance(r, list) and len(r) == 2 and all(map(_is_num, r)) and r[0] < r[1],
             "region", "must be [a, b] with a < b")
        if ens is not None and ens.model != "rosenzweig_porter":
            errors.append("ensemble.model: WegnerMinami needs the rosenzweig_porter model")


def validate_document(doc: Any, experiment: Optional[str] = None) -> ExperimentConfig:
    """Validate an already-parsed config document; raises :class:`ConfigError` with all failures."""
    errors: List[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    known = {"experiment", "ensemble", "realizations", "master_seed", "energy", "workers",
             "output_dir", "params"}
    for k in doc:
        if k not in known:
            errors.append(f"{k}: unknown field")
    name = experiment or doc.get("experiment")
    exp = canonical_experiment(name) if name is not None else None
    if exp is None:
        errors.append(f"experiment: must be one of {list(EXPERIMENTS)}, got {name!r}")
    elif experiment and doc.get("experiment") is not None and canonical_experiment(doc["experiment"]) != exp:
        errors.append(f"experiment: config names {doc['experiment']!r} but {exp} was requested")
    doc = dict(doc)
    rp_c = (doc.get("params") or {}).get("c") if exp == "RpTest" else None
    ens_doc = doc.get("ensemble")
    if exp == "RpTest" and isinstance(ens_doc, dict) and rp_c is not None and "t" not in ens_doc:
        ens_doc = dict(ens_doc, c=ens_doc.get("c", rp_c))
        if "n" in ens_doc and _is_uint(ens_doc["n"], 6) and _is_num(rp_c):
            ens_doc["t"] = float(2 ** ens_doc["n"]) ** -(1.0 + rp_c)
    ens = _ensemble(ens_doc, errors, exp)
    realizations = doc.get("realizations", 1)
    if not _is_uint(realizations) or realizations < 1:
        errors.append(f"realizations: must be an integer >= 1, got {realizations!r}")
    seed = doc.get("master_seed", 0)
    if not _is_uint(seed):
        errors.append(f"master_seed: must be an unsigned 64-bit integer, got {seed!r}")
    energy = doc.get("energy", 0.0)
    if not _is_num(energy):
        errors.append(f"energy: must be a finite number, got {energy!r}")
    workers = doc.get("workers", default_workers())
    if not _is_uint(workers) or workers < 1:
        errors.append(f"workers: must be an integer >= 1, got {workers!r}")
    out = doc.get("output_dir", "hrmt_out")
    if not isinstance(out, str) or not out:
        errors.append(f"output_dir: must be a non-empty path string, got {out!r}")
    params = doc.get("params", {}) or {}
    if not isinstance(params, dict):
        errors.append("params: must be an object")
        params = {}
    if exp is not None:
        _check_params(exp, params, ens, errors)
    if exp == "IdentityCheck" and ens is not None and params.get("N") is None and ens.size > 4096:
        errors.append("ensemble.n: IdentityCheck is limited to N <= 4096")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(experiment=exp, ensemble=ens, realizations=realizations,
                            master_seed=seed, energy=float(energy), workers=workers,
                            output_dir=out, params=params)


def validate_config(text: str, experiment: Optional[str] = None) -> ExperimentConfig:
    """Parse and validate a JSON config document.

    Raises :class:`ConfigError` carrying the full list of failures; a JSON
    syntax error is reported with its line and column.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    return validate_document(doc, experiment)
