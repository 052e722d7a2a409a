"""Experiment configuration files (YAML or JSON) and their validation."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigInvalid, HJLabError
from .hamiltonian import QuasiConvexHamiltonian, SpaceTimeHamiltonian, from_descriptor
from .scenario import InitialDatum, JunctionScenario, scenario_from_dict

KINDS = ("cauchy", "effective_hamiltonian", "flux_limiter", "epsilon_sweep", "traffic_checks")
CHECKS = ("n1_identity", "lower_bound", "spacing_monotone", "merging_limit", "critical_distance",
          "random_lower_bound")
DEFAULT_SEED = 20240611

_DEFAULT_NUMERICS = {
    "cauchy": {"dx": 0.02, "T": 1.0, "half_width": 3.0, "cfl_safety": 0.45},
    "effective_hamiltonian": {"dx": 0.02, "T": 20.0, "ps": [-2.0, -1.0, 0.0, 1.0, 2.0], "cfl_safety": 0.45},
    "flux_limiter": {"dx": 0.02, "T": 40.0, "tol": 0.02, "cfl_safety": 0.45},
    "epsilon_sweep": {"dx": 0.02, "T": 40.0, "tol": 0.02, "epsilons": [0.2, 0.1, 0.05], "horizon": 2.0,
                      "X": 1.0, "coarse_dx": 0.01, "noise": 0.1, "cfl_safety": 0.45},
    "traffic_checks": {"dx": 0.02, "T": 40.0, "tol": 0.03, "cfl_safety": 0.45},
}


@dataclass
class ExperimentConfig:
    kind: str
    scenario: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    output_dir: str | None = None
    initial: dict | None = None
    checks: list = field(default_factory=list)
    check_params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    jobs: int = 1
    source: str | None = None

    def as_dict(self) -> dict:
        return {"kind": self.kind, "scenario": self.scenario, "numerics": self.numerics,
                "output_dir": self.output_dir, "initial": self.initial, "checks": self.checks,
                "check_params": self.check_params, "seed": self.seed, "jobs": self.jobs}

    def junction_scenario(self) -> JunctionScenario:
        try:
            return scenario_from_dict(self.scenario)
        except HJLabError as exc:
            raise ConfigInvalid(_field_of(str(exc)), str(exc)) from exc

    def initial_datum(self) -> InitialDatum:
        return InitialDatum.from_dict(self.initial)


def _field_of(msg: str) -> str:
    for name in ("positions", "schedules", "branches", "hamiltonian"):
        if name in msg:
            return f"scenario.{name}"
    return "scenario"


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid("config", f"file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigInvalid("config", f"unparseable: {exc}") from exc
    cfg = validate_config(raw)
    cfg.source = str(path)
    return cfg


def _positive(numerics: dict, key: str, kind: str):
    v = numerics.get(key)
    if v is None:
        return
    vals = v if isinstance(v, (list, tuple)) else [v]
    for x in vals:
        if not isinstance(x, (int, float)) or isinstance(x, bool) or not math.isfinite(x) or x <= 0:
            raise ConfigInvalid(f"numerics.{key}", f"must be positive for kind {kind}, got {v!r}")


def validate_config(raw: Any, kind: str | None = None) -> ExperimentConfig:
    """Check a parsed config mapping; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("config", "top level must be a mapping")
    raw = copy.deepcopy(raw)
    k = raw.get("kind", kind)
    if kind is not None and k != kind:
        raise ConfigInvalid("kind", f"config kind {k!r} does not match subcommand {kind!r}")
    if k not in KINDS:
        raise ConfigInvalid("kind", f"must be one of {', '.join(KINDS)}; got {k!r}")
    numerics = {**_DEFAULT_NUMERICS[k], **(raw.get("numerics") or {})}
    for key in ("dx", "T", "tol", "half_width", "cfl_safety", "epsilons", "horizon", "X", "coarse_dx",
                "rho_schedule"):
        _positive(numerics, key, k)
    for key in (raw.get("tolerances") or {}):
        _positive(raw["tolerances"], key, k)
        numerics[key] = raw["tolerances"][key]
    if numerics["cfl_safety"] >= 0.5:
        raise ConfigInvalid("numerics.cfl_safety", "must be below 0.5 for a monotone scheme")
    scenario = raw.get("scenario")
    if k != "effective_hamiltonian":
        if scenario is None:
            raise ConfigInvalid("scenario", f"required for kind {k}")
        if not isinstance(scenario, dict):
            raise ConfigInvalid("scenario", "must be a mapping")
        pos = scenario.get("positions", [])
        if not isinstance(pos, list) or any(not isinstance(b, (int, float)) for b in pos):
            raise ConfigInvalid("scenario.positions", "must be a list of numbers")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ConfigInvalid("scenario.positions", "must be strictly increasing")
        if len(scenario.get("schedules", [])) != len(pos):
            raise ConfigInvalid("scenario.schedules", "need one schedule per position")
        if "branches" not in scenario and "hamiltonian" not in scenario:
            raise ConfigInvalid("scenario.branches", "missing (or give a single 'hamiltonian')")
    else:
        if scenario is None or not isinstance(scenario, dict) or "hamiltonian" not in scenario:
            raise ConfigInvalid("scenario.hamiltonian", "required for kind effective_hamiltonian")
    if k == "epsilon_sweep":
        eps = numerics["epsilons"]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigInvalid("numerics.epsilons", "must be strictly decreasing")
    checks = list(raw.get("checks") or [])
    if k == "traffic_checks":
        if not checks:
            raise ConfigInvalid("checks", "traffic_checks needs a non-empty checks list")
        for c in checks:
            if c not in CHECKS:
                raise ConfigInvalid("checks", f"unknown check {c!r}; known: {', '.join(CHECKS)}")
    seed = raw.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int):
        raise ConfigInvalid("seed", "must be an integer")
    cfg = ExperimentConfig(kind=k, scenario=scenario or {}, numerics=numerics, output_dir=raw.get("output_dir"),
                           initial=raw.get("initial"), checks=checks, check_params=raw.get("check_params") or {},
                           seed=seed, jobs=int(raw.get("jobs", 1)))
    if k != "effective_hamiltonian":
        cfg.junction_scenario()
    else:
        space_time_hamiltonian(cfg.scenario)
    try:
        cfg.initial_datum()(np.zeros(1))
    except (HJLabError, KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid("initial", str(exc)) from exc
    return cfg


def space_time_hamiltonian(desc: dict) -> SpaceTimeHamiltonian:
    """``H(t, x, p) = H0(p) - V(t, x)`` with
    ``V = mean + amplitude cos(2 pi x) + time_amplitude cos(2 pi t)``.

    ``desc = {hamiltonian: <H0 descriptor>, potential: {...}}``.
    """
    try:
        H0: QuasiConvexHamiltonian = from_descriptor(desc["hamiltonian"])
    except (HJLabError, KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid("scenario.hamiltonian", str(exc)) from exc
    pot = desc.get("potential") or {}
    mean = float(pot.get("mean", 0.0))
    amp = float(pot.get("amplitude", 0.0))
    tamp = float(pot.get("time_amplitude", 0.0))

    def func(t, x, p):
        return H0(p) - (mean + amp * np.cos(2 * np.pi * x) + tamp * np.cos(2 * np.pi * t))

    p0 = H0.p0
    return SpaceTimeHamiltonian(func, p0=lambda t, x: np.full(np.shape(x), p0), time_dependent=tamp != 0.0,
                                p_range=(H0.p_min, H0.p_max))
