"""Traffic-light scenarios: mean limiters, critical spacing and the
qualitative checks on the effective flux limiter."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cell import FluxLimiterResult, effective_flux_limiter
from .errors import ToleranceExceeded
from .hamiltonian import QuasiConvexHamiltonian, quadratic, vee
from .scenario import (InitialDatum, JunctionScenario, PhaseSchedule, mean_limiter, pointwise_max,
                       scenario_from_dict)

__all__ = ["PhaseSchedule", "JunctionScenario", "InitialDatum", "mean_limiter", "pointwise_max",
           "scenario_from_dict", "CheckRow", "CheckReport", "CriticalDistance", "critical_distance_estimate",
           "check_n1_identity", "check_lower_bound", "check_monotonicity_in_spacing", "check_merging_limit",
           "random_scenario", "evenly_spaced"]


@dataclass
class CheckRow:
    name: str
    expected: float
    computed: float
    lower: float
    upper: float
    passed: bool
    gating: bool = True
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"check": self.name, "expected": self.expected, "computed": self.computed,
                "bracket": [self.lower, self.upper], "pass": self.passed, "gating": self.gating, **self.detail}


@dataclass
class CheckReport:
    name: str
    rows: list[CheckRow] = field(default_factory=list)
    table: list[dict] = field(default_factory=list)
    runs: list[FluxLimiterResult] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows if r.gating)

    def as_dict(self) -> dict:
        return {"check": self.name, "pass": self.passed, "rows": [r.as_dict() for r in self.rows],
                "table": self.table}

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "expected", "computed", "lower", "upper", "pass"])
            for r in self.rows:
                w.writerow([r.name, repr(r.expected), repr(r.computed), repr(r.lower), repr(r.upper),
                            "PASS" if r.passed else "FAIL"])
        return path

    def _raise_if_failed(self):
        bad = [r for r in self.rows if r.gating and not r.passed]
        if bad:
            r = bad[0]
            raise ToleranceExceeded(f"{r.name}: expected {r.expected!r}, computed {r.computed!r} "
                                    f"(bracket [{r.lower!r}, {r.upper!r}])")


def _flux(scenario, flux_kw) -> FluxLimiterResult:
    kw = {"strict": False, **flux_kw}
    return effective_flux_limiter(scenario, **kw)


# -- critical spacing -----------------------------------------------------------

@dataclass(frozen=True)
class CriticalDistance:
    d0: float
    C: float
    level: float
    gaps: tuple[float, ...]
    degenerate: bool


def critical_distance_estimate(scenario: JunctionScenario) -> CriticalDistance:
    """Sufficient (not sharp) spacing ``d0`` above which ``A_bar = max <a>``.

    ``d0 = max_beta 8 C / gap_beta`` over interior branches, where
    ``gap_beta`` is the smaller distance from the minimizer interval of
    ``H_beta`` to its level-set endpoints at ``max_alpha <a_alpha>`` and
    ``C = max(max ||a||_inf, max |H_beta(0)|)``. Branches whose minimum sits at
    that level are skipped and flagged; with no usable branch ``d0 = 0``.
    """
    level = max(scenario.means(), default=0.0)
    C = scenario.barrier_constant(0.0)
    gaps = []
    degenerate = False
    for H in scenario.branches[1:-1]:
        if level <= H.min_value + 1e-12:
            degenerate = True
            continue
        lo, _ = H.level_set_endpoints(level, "decreasing")
        _, hi = H.level_set_endpoints(level, "increasing")
        gaps.append(min(hi - H.p0_right, H.p0 - lo))
    if not gaps:
        return CriticalDistance(0.0, float(C), float(level), (), degenerate)
    return CriticalDistance(float(max(8.0 * C / g for g in gaps)), float(C), float(level), tuple(gaps), degenerate)


# -- checks ----------------------------------------------------------------------

def check_n1_identity(scenario: JunctionScenario, tol: float = 0.03, *, strict: bool = True,
                      **flux_kw) -> CheckReport:
    """Single junction: ``A_bar`` equals the mean limiter."""
    if scenario.n_junctions != 1:
        raise ValueError("check_n1_identity needs exactly one junction")
    res = _flux(scenario, flux_kw)
    mean = scenario.means()[0]
    ok = abs(res.A_bar - mean) <= tol + res.width
    rep = CheckReport("n1_identity", [CheckRow("n1_identity", mean, res.A_bar, res.lower, res.upper, ok,
                                               detail={"tol": tol})], runs=[res])
    if strict:
        rep._raise_if_failed()
    return rep


def check_lower_bound(scenario: JunctionScenario, tol: float = 1e-9, *, strict: bool = True,
                      **flux_kw) -> CheckReport:
    """``A_bar >= max(A0, max_alpha <a_alpha>)`` within the bracket."""
    res = _flux(scenario, flux_kw)
    bound = max([scenario.A0, *scenario.means()])
    ok = res.upper >= bound - tol
    rep = CheckReport("lower_bound", [CheckRow("lower_bound", bound, res.A_bar, res.lower, res.upper, ok)],
                      runs=[res])
    if strict:
        rep._raise_if_failed()
    return rep


def _with_spacing(scenario: JunctionScenario, alpha: int, ell: float) -> JunctionScenario:
    pos = list(scenario.positions)
    shift = ell - (pos[alpha + 1] - pos[alpha])
    return scenario.with_positions(pos[: alpha + 1] + [b + shift for b in pos[alpha + 1:]])


def check_monotonicity_in_spacing(scenario: JunctionScenario, deltas: Sequence[float] = (0.0, 0.75, 3.75),
                                  tol: float = 1e-9, *, gaps: Sequence[int] | None = None, strict: bool = True,
                                  **flux_kw) -> CheckReport:
    """``A_bar`` non-increasing as one spacing grows (others held fixed).

    ``deltas`` are added to the base spacing; ``gaps`` selects which
    spacings to vary (default: all).
    """
    if scenario.n_junctions < 2:
        res = _flux(scenario, flux_kw)
        row = CheckRow("spacing_monotone", res.A_bar, res.A_bar, res.lower, res.upper, True,
                       detail={"note": "single junction: spacing vacuous"})
        return CheckReport("spacing_monotone", [row], runs=[res])
    deltas = sorted(float(d) for d in deltas)
    if deltas[0] < 0:
        raise ValueError("deltas must be non-negative")
    gaps = list(range(scenario.n_junctions - 1)) if gaps is None else list(gaps)
    rep = CheckReport("spacing_monotone")
    for a in gaps:
        base = scenario.spacings[a]
        prev = None
        for d in deltas:
            ell = base + d
            res = _flux(_with_spacing(scenario, a, ell), flux_kw)
            rep.runs.append(res)
            rep.table.append({"gap": a, "ell": ell, "A_bar": res.A_bar, "lower": res.lower, "upper": res.upper})
            if prev is not None:
                ok = res.A_bar <= prev.A_bar + prev.width + res.width + tol
                rep.rows.append(CheckRow(f"spacing_monotone[{a}]@{ell:g}", prev.A_bar, res.A_bar,
                                         res.lower, res.upper, ok))
            prev = res
    if strict:
        rep._raise_if_failed()
    return rep


def evenly_spaced(n: int, ell: float) -> list[float]:
    """``n`` positions with spacing ``ell`` centred on 0."""
    return [(k - (n - 1) / 2) * ell for k in range(n)]


def check_merging_limit(scenario: JunctionScenario, ells: Sequence[float] = (1.0, 0.25, 0.0625),
                        tol: float = 1e-9, *, strict: bool = True, **flux_kw) -> CheckReport:
    """As all spacings shrink, ``A_bar`` approaches ``<max_alpha a_alpha>``.

    Junctions are re-placed evenly with each spacing in ``ells`` (which
    must decrease); the distance to the limit must not grow beyond the
    brackets.
    """
    ells = [float(e) for e in ells]
    if any(b >= a for a, b in zip(ells, ells[1:])):
        raise ValueError("ells must be strictly decreasing")
    limit = mean_limiter(pointwise_max(scenario.schedules))
    rep = CheckReport("merging_limit")
    prev = None
    for ell in ells:
        res = _flux(scenario.with_positions(evenly_spaced(scenario.n_junctions, ell)), flux_kw)
        rep.runs.append(res)
        rep.table.append({"ell": ell, "A_bar": res.A_bar, "lower": res.lower, "upper": res.upper, "limit": limit})
        if prev is not None:
            ok = abs(res.A_bar - limit) <= abs(prev.A_bar - limit) + prev.width + res.width + tol
            rep.rows.append(CheckRow(f"merging_limit@{ell:g}", limit, res.A_bar, res.lower, res.upper, ok))
        prev = res
    if strict:
        rep._raise_if_failed()
    return rep


# -- random scenarios --------------------------------------------------------------

def _random_branch(rng: np.random.Generator, floor: float) -> QuasiConvexHamiltonian:
    p0 = float(rng.uniform(-0.5, 0.5))
    if rng.random() < 0.25:
        return quadratic(p0=p0, k=float(rng.uniform(0.5, 1.0)), floor=floor, p_range=(p0 - 6.0, p0 + 6.0))
    return vee(c=-floor, slope=float(rng.uniform(0.5, 2.0)), p0=p0, slope_right=float(rng.uniform(0.5, 2.0)))


def _random_schedule(rng: np.random.Generator, floor: float, k_max: int = 3) -> PhaseSchedule:
    k = int(rng.integers(0, k_max + 1))
    grid = np.arange(1, 16) / 16.0
    st = (0.0, *sorted(rng.choice(grid, size=k, replace=False).tolist()))
    vals = rng.uniform(floor, floor + 1.0, size=len(st))
    return PhaseSchedule(st, tuple(float(v) for v in vals))


def random_scenario(rng: np.random.Generator, n_max: int = 3, dx: float = 0.02,
                    spacing: tuple[float, float] = (0.25, 4.0)) -> JunctionScenario:
    """Random valid scenario with junctions on the ``dx`` lattice.

    Branches share their minimum value, so every limiter drawn from
    ``[A0, A0 + 1]`` is admissible.
    """
    n = int(rng.integers(1, n_max + 1))
    floor = float(np.round(rng.uniform(-0.5, 0.5), 3))
    branches = tuple(_random_branch(rng, floor) for _ in range(n + 1))
    ells = [round(float(rng.uniform(*spacing)) / dx) * dx for _ in range(n - 1)]
    pos = np.concatenate([[0.0], np.cumsum(ells)])
    start = round(-pos[-1] / 2 / dx) * dx
    positions = tuple(float(round((start + p) / dx) * dx) for p in pos)
    schedules = tuple(_random_schedule(rng, floor) for _ in range(n))
    return JunctionScenario(positions, branches, schedules)


def scenario_lower_bound(scenario: JunctionScenario) -> float:
    return max([scenario.A0, *scenario.means()])


def describe(scenario: JunctionScenario) -> str:
    means = ", ".join(f"{m:.3g}" for m in scenario.means())
    return f"N={scenario.n_junctions} positions={list(scenario.positions)} means=[{means}] A0={scenario.A0:.3g}"

