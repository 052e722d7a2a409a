"""Ergodic constants by the long-time method.

* :func:`ergodic_constant` brackets the growth rate of a trace with
  ``lambda^-(T) <= lambda <= lambda^+(T)`` and the a-priori width
  ``2 L (1 + diam) / T``.
* :func:`effective_hamiltonian` solves the periodic cell problem.
* :func:`truncated_corrector` and :func:`effective_flux_limiter` compute
  ``lambda_rho`` on ``[-rho, rho]`` and its limit as ``rho`` grows.
"""

from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (HorizonTooShort, InvariantViolation, NotConverged, ProfileTooNarrow,
                     RhoTooSmall)
from .hamiltonian import QuasiConvexHamiltonian, SlopeQuadruple, SpaceTimeHamiltonian
from .parallel import pmap
from .scenario import JunctionScenario
from .solver import CFL_SAFETY, BoundaryCondition, GridSolution, Grid1D, Trajectory, solve_cauchy

log = logging.getLogger(__name__)

SAMPLES_PER_PERIOD = 16


@dataclass(frozen=True)
class ErgodicEstimate:
    """Growth-rate estimate with its two-sided bracket."""

    value: float
    lower: float
    upper: float
    T: float
    width_bound: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def negated(self) -> "ErgodicEstimate":
        return ErgodicEstimate(-self.value, -self.upper, -self.lower, self.T, self.width_bound)

    def contains(self, x: float, atol: float = 0.0) -> bool:
        return self.lower - atol <= x <= self.upper + atol

    def overlaps(self, other: "ErgodicEstimate", atol: float = 0.0) -> bool:
        return self.lower <= other.upper + atol and other.lower <= self.upper + atol

    def as_dict(self) -> dict:
        return {"lambda": self.value, "lower": self.lower, "upper": self.upper,
                "T": self.T, "width_bound": self.width_bound}


def ergodic_constant(t, u, L: float, rho: float, T: float | None = None,
                     tol: float | None = None) -> ErgodicEstimate:
    """Bracket the linear growth rate of a uniformly sampled trace.

    ``lambda^+(T) = max_tau (u(tau + T) - u(tau)) / T`` and ``lambda^-`` the
    min, over sampled ``tau in [t0, t0 + T]``; the trace must cover
    ``[t0, t0 + 2T]``. ``rho`` is the diameter of the spatial domain.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    if t.size < 3 or t.shape != u.shape:
        raise ValueError("trace needs matching t, u arrays with >= 3 samples")
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-8, atol=1e-12):
        raise ValueError("trace must be uniformly sampled")
    h0 = float(h[0])
    span = t[-1] - t[0]
    if T is None:
        T = span / 2
    m = int(round(T / h0))
    if m < 1 or 2 * m > t.size - 1 + 1e-9:
        raise HorizonTooShort(f"trace of length {span:.4g} does not cover 2T = {2 * T:.4g}")
    T = m * h0
    incr = (u[m: 2 * m + 1] - u[: m + 1]) / T
    upper = float(incr.max())
    lower = float(incr.min())
    width_bound = 2.0 * L * (1.0 + rho) / T
    if tol is not None and width_bound > tol:
        raise HorizonTooShort(f"width bound {width_bound:.4g} exceeds tolerance {tol}; increase T")
    return ErgodicEstimate(0.5 * (upper + lower), lower, upper, float(T), float(width_bound))


# -- periodic cell problems -------------------------------------------------

def _cell_speed(H: SpaceTimeHamiltonian, p: float, x: np.ndarray) -> tuple[float, float]:
    """(C, max |H_p|) on the slopes reachable from ``v = 0``."""
    ts = np.linspace(0.0, H.period_t, 9)[:-1] if H.time_dependent else np.array([0.0])
    C = max(float(np.max(np.abs(H(t, x, np.full_like(x, p))))) for t in ts)
    q = np.linspace(*H.p_range, H.n_p)
    speed = 0.0
    for t in ts:
        vals = H(t, x[:, None], q[None, :])
        reach = np.any(vals <= C * 1.05 + 1e-9, axis=0)
        if not reach.any():
            continue
        lo, hi = q[reach].min(), q[reach].max()
        sel = (q >= lo - 0.5) & (q <= hi + 0.5)
        dv = np.diff(vals[:, sel], axis=1) / np.diff(q[sel])[None, :]
        speed = max(speed, float(np.max(np.abs(dv))))
    return C, speed


def effective_hamiltonian(H: SpaceTimeHamiltonian, p: float, dx: float = 0.02, T: float = 20.0, *,
                          period_x: float = 1.0, samples_per_period: int = SAMPLES_PER_PERIOD,
                          cfl_safety: float = CFL_SAFETY, tol: float | None = None) -> ErgodicEstimate:
    """``H_bar(p)`` from the long-time behaviour of
    ``v_t + H(t, x, p + v_x) = 0`` on one periodic cell, ``v(0) = 0``.

    Returns the bracket for ``H_bar(p)`` (the trace grows like ``-H_bar t``).
    """
    n = int(round(period_x / dx))
    if abs(n * dx - period_x) > 1e-9 * period_x:
        raise ValueError("dx must divide the cell period")
    x = dx * np.arange(n)
    C, speed = _cell_speed(H, p, x)
    dt_max = cfl_safety * dx / speed if speed > 0 else H.period_t / samples_per_period
    h = H.period_t / samples_per_period
    n_samples = int(round(2 * T / h))
    v = np.zeros(n)
    trace = np.empty(n_samples + 1)
    trace[0] = 0.0
    p0 = None if H.time_dependent else H.minimizer_at(0.0, x)
    lip_time = 0.0
    t = 0.0
    for k in range(n_samples):
        steps = max(1, int(math.ceil(h / dt_max - 1e-9)))
        dt = h / steps
        if H.time_dependent:
            p0 = H.minimizer_at(t, x)
        for _ in range(steps):
            d = (np.roll(v, -1) - v) / dx
            pp = p + d
            pm = p + np.roll(d, 1)
            f = np.maximum(H(t, x, np.maximum(pm, p0)), H(t, x, np.minimum(pp, p0)))
            lip_time = max(lip_time, float(np.max(np.abs(f))))
            v = v - dt * f
            t += dt
        t = (k + 1) * h
        trace[k + 1] = v[0]
    lip_space = float(np.max(np.abs(p + (np.roll(v, -1) - v) / dx)))
    L = max(lip_time, lip_space, C)
    est = ergodic_constant(h * np.arange(n_samples + 1), trace, L, period_x, T, tol)
    return est.negated()


def effective_hamiltonian_table(H: SpaceTimeHamiltonian, ps: Sequence[float], dx: float = 0.02,
                                T: float = 20.0, jobs: int = 1, **kw) -> list[ErgodicEstimate]:
    fn = functools.partial(_eff_h_one, H=H, dx=dx, T=T, kw=kw)
    return pmap(fn, list(ps), jobs)


def _eff_h_one(p, H, dx, T, kw):
    return effective_hamiltonian(H, p, dx, T, **kw)


# -- truncated cell problems ------------------------------------------------

@dataclass
class TruncatedCorrector:
    rho: float
    estimate: ErgodicEstimate
    trajectory: Trajectory
    oscillation: float
    oscillation_bound: float
    drift: float = 0.0

    @property
    def settled(self) -> bool:
        """Per-period decrements at the probe constant over the second half."""
        return self.drift <= 1e-6

    @property
    def lambda_rho(self) -> float:
        return self.estimate.value

    @property
    def profile(self) -> GridSolution:
        return self.trajectory.final

    @property
    def oscillation_ok(self) -> bool:
        return self.oscillation <= self.oscillation_bound


def _period(scenario: JunctionScenario) -> float:
    return scenario.schedules[0].period if scenario.schedules else 1.0


def _probe(grid: Grid1D) -> int:
    try:
        return grid.node_of(0.0)
    except Exception:
        ji = np.asarray(grid.junction_indices)
        if ji.size == 0:
            return grid.n_nodes // 2
        return int(ji[np.argmin(np.abs(grid.x[ji]))])


def truncated_corrector(scenario: JunctionScenario, rho: float, dx: float = 0.02, T: float = 40.0, *,
                        samples_per_period: int = SAMPLES_PER_PERIOD, cfl_safety: float = CFL_SAFETY,
                        tol: float | None = None, use_numba=None) -> TruncatedCorrector:
    """``lambda_rho`` on ``[-rho, rho]`` with ``H^-`` / ``H^+`` boundary
    conditions, zero initial datum, run over ``[0, 2T]``.

    The returned trajectory holds one period of snapshots ending at ``2T``.
    """
    if rho <= scenario.rho0:
        raise RhoTooSmall(f"rho={rho} must exceed max |b_alpha| = {scenario.rho0}")
    period = _period(scenario)
    grid = Grid1D.symmetric(rho, dx, scenario.positions)
    h = period / samples_per_period
    n_per = int(round(T / period))
    if abs(n_per * period - T) > 1e-9 * T or n_per < 1:
        raise ValueError("T must be a whole number of limiter periods")
    out_times = [2 * T - period + k * h for k in range(samples_per_period + 1)]
    traj = solve_cauchy(scenario, np.zeros(grid.n_nodes), 2 * T, grid, output_times=out_times, sample_dt=h,
                        probe=_probe(grid), bc_left=BoundaryCondition.envelope_minus(),
                        bc_right=BoundaryCondition.envelope_plus(), cfl_safety=cfl_safety, use_numba=use_numba)
    ts, us = traj.sampled_trace()
    L = max(traj.lip_time, max(s.lip_space for s in traj.snapshots), traj.C)
    est = ergodic_constant(ts, us, L, 2 * rho, T, tol).negated()
    shifted = np.array([s.values + est.value * s.t for s in traj.snapshots])
    m = shifted.max(axis=0)
    osc = float(np.max(m - shifted))
    if osc > traj.C:
        log.warning("corrector oscillation %.4g exceeds C=%.4g at rho=%g", osc, traj.C, rho)
    per = us[samples_per_period:] - us[:-samples_per_period]
    tail = per[per.size // 2:]
    drift = float(tail.max() - tail.min()) / period
    if drift > 1e-6:
        log.warning("probe trace not settled at rho=%g (drift %.3g); consider a longer T", rho, drift)
    return TruncatedCorrector(float(rho), est, traj, osc, float(traj.C), drift)


@dataclass(frozen=True)
class RhoEstimate:
    rho: float
    value: float
    lower: float
    upper: float
    settled: bool = True

    def as_dict(self) -> dict:
        return {"rho": self.rho, "lambda": self.value, "lower": self.lower, "upper": self.upper}


@dataclass
class FluxLimiterResult:
    A_bar: float
    lower: float
    upper: float
    A0: float
    provenance: list[RhoEstimate]
    converged: bool
    monotone: bool
    correctors: list[TruncatedCorrector] = field(default_factory=list, repr=False)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def settled(self) -> bool:
        return all(r.settled for r in self.provenance)

    def as_dict(self) -> dict:
        return {"A_bar": self.A_bar, "bracket": [self.lower, self.upper], "A0": self.A0,
                "converged": self.converged, "monotone": self.monotone,
                "provenance": [r.as_dict() for r in self.provenance]}


def default_rho_schedule(scenario: JunctionScenario, dx: float) -> list[float]:
    base = scenario.rho0 + 2.0
    return [math.ceil(round(k * base / dx, 9)) * dx for k in (1, 2, 4)]


def _tc_one(rho, scenario, dx, T, kw):
    return truncated_corrector(scenario, rho, dx, T, **kw)


def check_lambda_monotone(provenance: Sequence[RhoEstimate], atol: float = 1e-9) -> bool:
    """``lambda_i <= lambda_{i+1} + (width_i + width_{i+1})`` along the sweep."""
    for a, b in zip(provenance, provenance[1:]):
        if a.value > b.value + (a.upper - a.lower) + (b.upper - b.lower) + atol:
            return False
    return True


def effective_flux_limiter(scenario: JunctionScenario, rho_schedule: Sequence[float] | None = None,
                           tol: float = 0.02, dx: float = 0.02, T: float = 40.0, *, jobs: int = 1,
                           strict: bool = True, keep_correctors: bool = False, **kw) -> FluxLimiterResult:
    """``A_bar = lim lambda_rho`` by a sweep over increasing ``rho``.

    Converged when the last two brackets overlap within ``tol``. With
    ``strict`` a drifting sweep raises :class:`NotConverged` and a
    violation of monotonicity in ``rho`` or of ``A_bar >= A0`` raises
    :class:`InvariantViolation`.
    """
    rhos = list(rho_schedule) if rho_schedule is not None else default_rho_schedule(scenario, dx)
    if len(rhos) < 2 or any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise ValueError("rho_schedule must be increasing with at least two entries")
    fn = functools.partial(_tc_one, scenario=scenario, dx=dx, T=T, kw=kw)
    correctors = pmap(fn, rhos, jobs)
    prov = [RhoEstimate(c.rho, c.estimate.value, c.estimate.lower, c.estimate.upper, c.settled) for c in correctors]
    last, prev = prov[-1], prov[-2]
    converged = last.lower <= prev.upper + tol and prev.lower <= last.upper + tol
    monotone = check_lambda_monotone(prov)
    A0 = scenario.A0
    res = FluxLimiterResult(last.value, last.lower, last.upper, A0, prov, converged, monotone,
                            correctors if keep_correctors else [])
    if strict:
        if not monotone:
            raise InvariantViolation(f"lambda_rho not monotone in rho: {[r.value for r in prov]}")
        if last.upper < A0 - 1e-9:
            raise InvariantViolation(f"A_bar bracket [{last.lower}, {last.upper}] below A0 = {A0}")
        if not converged:
            raise NotConverged(f"rho sweep still drifting: {[round(r.value, 6) for r in prov]}")
    return res


# -- effective model ----------------------------------------------------------

@dataclass
class EffectiveModel:
    """Data of the homogenized single-junction problem."""

    H_bar_L: QuasiConvexHamiltonian
    H_bar_R: QuasiConvexHamiltonian
    A_bar: float
    slopes: SlopeQuadruple
    A0: float
    bracket: tuple[float, float] = (math.nan, math.nan)
    provenance: list[RhoEstimate] = field(default_factory=list)

    @classmethod
    def from_values(cls, H_L, H_R, A_bar: float, bracket=None, provenance=()) -> "EffectiveModel":
        A0 = max(H_L.min_value, H_R.min_value)
        level = max(A_bar, A0)
        slopes = SlopeQuadruple.at_level(H_L, H_R, level)
        br = tuple(bracket) if bracket is not None else (A_bar, A_bar)
        return cls(H_L, H_R, float(A_bar), slopes, float(A0), br, list(provenance))

    def to_dict(self, n_table: int = 201) -> dict:
        return {"H_bar_L": self.H_bar_L.tabulate(n_table), "H_bar_R": self.H_bar_R.tabulate(n_table),
                "A_bar": self.A_bar, "bracket": list(self.bracket), "A0": self.A0,
                "slopes": self.slopes.as_dict(), "provenance": [r.as_dict() for r in self.provenance]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


def effective_model(scenario: JunctionScenario, flux: FluxLimiterResult | None = None, **kw) -> EffectiveModel:
    """Model for a junction scenario; the outer branches are already
    homogeneous so ``H_bar_L = H_0`` and ``H_bar_R = H_N``."""
    flux = flux or effective_flux_limiter(scenario, **kw)
    return EffectiveModel.from_values(scenario.H_left, scenario.H_right, flux.A_bar,
                                      (flux.lower, flux.upper), flux.provenance)


# -- corrector slopes -----------------------------------------------------------

@dataclass
class SlopeRow:
    eps: float
    upper_violation: float
    lower_violation: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.upper_violation <= self.slack and self.lower_violation <= self.slack


@dataclass
class SlopeReport:
    rows: list[SlopeRow]
    measured_left: float
    measured_right: float
    slopes: SlopeQuadruple

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def _fit_slope(x, y) -> float:
    x = np.asarray(x)
    y = np.asarray(y)
    xm = x - x.mean()
    return float(np.dot(xm, y - y.mean()) / np.dot(xm, xm))


def corrector_slopes(profile: GridSolution, model: EffectiveModel, epsilons: Sequence[float],
                     window: float = 1.0, slack_const: float = 2.0) -> SlopeReport:
    """Check the cone bound on ``W_eps(x) = eps W(x / eps)``.

    ``W`` is the profile normalised to ``W(0) = 0``; the bound
    ``p_bar x <= W <= p_hat x`` (side-wise) must hold on ``[-window, window]``
    up to ``slack_const (eps + dx / eps)``.
    """
    g = profile.grid
    x = g.x
    rho = min(-x[0], x[-1])
    j0 = int(np.argmin(np.abs(x)))
    W = profile.values - profile.values[j0]
    s = model.slopes
    rows = []
    for eps in epsilons:
        if rho * eps < window * (1 - 1e-12):
            raise ProfileTooNarrow(f"rho*eps = {rho * eps:.4g} < window {window}")
        sel = np.abs(x) <= window / eps + 1e-12
        xe = eps * x[sel]
        We = eps * W[sel]
        upper = np.where(xe > 0, s.p_hat_R * xe, s.p_hat_L * xe)
        lower = np.where(xe > 0, s.p_bar_R * xe, s.p_bar_L * xe)
        rows.append(SlopeRow(float(eps), float(np.max(We - upper)), float(np.max(lower - We)),
                             slack_const * (eps + g.dx / eps)))
    right = x >= rho / 2
    left = x <= -rho / 2
    return SlopeReport(rows, _fit_slope(x[left], W[left]), _fit_slope(x[right], W[right]), s)
