"""Oscillatory vs effective problems and their locally uniform distance."""

from __future__ import annotations

import csv
import functools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cell import EffectiveModel
from .errors import UnderResolved
from .parallel import pmap
from .scenario import InitialDatum, JunctionScenario, PhaseSchedule
from .solver import Grid1D, Trajectory, solve_cauchy

log = logging.getLogger(__name__)

OVERSAMPLE = 20


@dataclass
class EpsilonSweep:
    """Decreasing ``eps`` values and the error window ``[t_min, T] x [-X, X]``."""

    epsilons: tuple[float, ...] = (0.2, 0.1, 0.05)
    T: float = 2.0
    X: float = 1.0
    t_min: float | None = None
    u0: InitialDatum = field(default_factory=InitialDatum)
    n_times: int = 11
    errors: list[float] = field(default_factory=list)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be positive and strictly decreasing")
        self.epsilons = eps
        if self.t_min is None:
            self.t_min = 0.1 * self.T
        if not 0 <= self.t_min < self.T:
            raise ValueError("window needs 0 <= t_min < T")

    @property
    def window_times(self) -> np.ndarray:
        return np.linspace(self.t_min, self.T, self.n_times)


def fine_grid(coarse: Grid1D, eps: float, oversample: int = OVERSAMPLE) -> Grid1D:
    """Refinement of ``coarse`` by an integer factor with ``dx <= eps / oversample``."""
    m = max(1, int(math.ceil(coarse.dx * oversample / eps - 1e-9)))
    return Grid1D(coarse.x0, coarse.dx / m, (coarse.n_nodes - 1) * m + 1)


def solve_oscillatory(scenario: JunctionScenario, eps: float, u0, T: float, grid: Grid1D, *,
                      oversample: int = OVERSAMPLE, **kw) -> Trajectory:
    """``u^eps`` with junctions at ``eps b`` and limiters ``a(t / eps)``."""
    if grid.dx > eps / oversample * (1 + 1e-9):
        raise UnderResolved(f"dx={grid.dx:.4g} exceeds eps/{oversample} = {eps / oversample:.4g}")
    return solve_cauchy(scenario.scaled(eps), u0, T, grid.with_junctions(()), **kw)


def effective_scenario(model: EffectiveModel) -> JunctionScenario:
    # F_A only depends on max(A, A0): clamp round-off below A0
    A = max(model.A_bar, model.A0)
    return JunctionScenario((0.0,), (model.H_bar_L, model.H_bar_R), (PhaseSchedule.constant(A),))


def solve_effective(model: EffectiveModel, u0, T: float, grid: Grid1D, **kw) -> Trajectory:
    """Flux-limited problem with one junction at 0 and constant limiter ``A_bar``."""
    if model.A_bar is None or math.isnan(model.A_bar):
        raise ValueError("model has no A_bar")
    return solve_cauchy(effective_scenario(model), u0, T, grid.with_junctions(()), **kw)


@dataclass(frozen=True)
class ErrorRow:
    eps: float
    dx: float
    dt: float
    sup_error: float
    runtime_s: float
    barrier_ok: bool = True

    def csv_row(self) -> list:
        return [repr(self.eps), repr(self.dx), repr(self.dt), repr(self.sup_error), f"{self.runtime_s:.3f}"]


@dataclass
class ConvergenceReport:
    rows: list[ErrorRow]
    non_increasing: bool
    not_converging: bool
    noise: float
    manifest: dict = field(default_factory=dict)

    @property
    def errors(self) -> list[float]:
        return [r.sup_error for r in self.rows]

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "dx", "dt", "sup_error", "runtime_s"])
            for r in self.rows:
                w.writerow(r.csv_row())
        return path


def errors_non_increasing(errors: Sequence[float], noise: float = 0.1, last: int = 3) -> bool:
    tail = list(errors)[-last:]
    return all(b <= a * (1 + noise) + 1e-12 for a, b in zip(tail, tail[1:]))


def _domain_half_width(scenario: JunctionScenario, sweep: EpsilonSweep, T: float, coarse_dx: float) -> float:
    speed = 0.0
    for H in scenario.branches:
        lo, hi = H.sublevel_interval(max(scenario.barrier_constant(1.0), H.min_value))
        speed = max(speed, H.max_speed(lo, hi))
    half = sweep.X + speed * T + scenario.rho0 * max(sweep.epsilons) + 1.0
    return math.ceil(round(half / coarse_dx, 9)) * coarse_dx


def _osc_run(eps, scenario, sweep, coarse, oversample, use_numba):
    fine = fine_grid(coarse, eps, oversample)
    t0 = time.perf_counter()
    traj = solve_oscillatory(scenario, eps, sweep.u0, sweep.T, fine, oversample=oversample,
                             output_times=list(sweep.window_times), use_numba=use_numba)
    return traj, time.perf_counter() - t0


def convergence_report(sweep: EpsilonSweep, scenario: JunctionScenario, model: EffectiveModel, *,
                       coarse_dx: float = 0.01, oversample: int = OVERSAMPLE, noise: float = 0.1,
                       jobs: int = 1, use_numba=None) -> ConvergenceReport:
    """Sup error of ``u^eps - u^0`` on the window, sampled at coarse nodes."""
    half = _domain_half_width(scenario, sweep, sweep.T, coarse_dx)
    coarse = Grid1D.symmetric(half, coarse_dx)
    times = sweep.window_times
    eff = solve_effective(model, sweep.u0, sweep.T, coarse, output_times=list(times), use_numba=use_numba)
    sel = np.abs(coarse.x) <= sweep.X + 1e-12
    fn = functools.partial(_osc_run, scenario=scenario, sweep=sweep, coarse=coarse, oversample=oversample,
                           use_numba=use_numba)
    runs = pmap(fn, sweep.epsilons, jobs)
    rows = []
    for eps, (traj, secs) in zip(sweep.epsilons, runs):
        m = int(round(coarse.dx / traj.grid.dx))
        err = 0.0
        for t in times:
            ue = traj.at(t).values[::m]
            u0 = eff.at(t).values
            err = max(err, float(np.max(np.abs(ue - u0)[sel])))
        rows.append(ErrorRow(eps, traj.grid.dx, sweep.T / traj.n_steps, err, secs, traj.barrier_ok()))
    errs = [r.sup_error for r in rows]
    sweep.errors = errs
    not_conv = errs[-1] > errs[0]
    if not_conv:
        log.warning("final error %.4g exceeds first %.4g", errs[-1], errs[0])
    manifest = {"window": {"t_min": sweep.t_min, "T": sweep.T, "X": sweep.X}, "coarse_dx": coarse_dx,
                "half_width": half, "model": {"A_bar": model.A_bar, "bracket": list(model.bracket),
                                              "provenance": [r.as_dict() for r in model.provenance]}}
    return ConvergenceReport(rows, errors_non_increasing(errs, noise), not_conv, noise, manifest)
