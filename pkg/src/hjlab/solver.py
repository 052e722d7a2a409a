"""Explicit monotone scheme for ``u_t + H = 0`` with flux-limited junctions.

Interior nodes use the Godunov numerical Hamiltonian
``max(H+(p-), H-(p+))`` of their branch; a junction node ``j`` uses
``max(a(t), H+_{left}(p-), H-_{right}(p+))``. Time-periodic limiters are
handled as successive Cauchy problems: steps never straddle a switch time.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._accel import HAVE_NUMBA
from .errors import CflViolation, GridError, GridMismatch, OutOfRange, PhaseBoundaryCrossed
from .hamiltonian import QuasiConvexHamiltonian
from .scenario import InitialDatum, JunctionScenario

log = logging.getLogger(__name__)

CFL_SAFETY = 0.45
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class Grid1D:
    x0: float
    dx: float
    n_nodes: int
    junction_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.dx > 0:
            raise GridError("dx must be positive")
        if self.n_nodes < 3:
            raise GridError("need at least 3 nodes")
        ji = tuple(int(j) for j in self.junction_indices)
        if any(b <= a for a, b in zip(ji, ji[1:])):
            raise GridError("junction indices must be strictly increasing")
        if ji and (ji[0] <= 0 or ji[-1] >= self.n_nodes - 1):
            raise GridError("junctions must be interior nodes")
        object.__setattr__(self, "junction_indices", ji)

    @classmethod
    def window(cls, lo: float, hi: float, dx: float, junctions: Sequence[float] = ()) -> "Grid1D":
        """Nodes ``lo, lo + dx, ..., hi``; both ends and every junction must
        fall on a node."""
        n = (hi - lo) / dx
        if abs(n - round(n)) > _SNAP_TOL * max(1.0, abs(n)):
            raise GridError(f"window [{lo}, {hi}] is not a multiple of dx={dx}")
        g = cls(float(lo), float(dx), int(round(n)) + 1)
        return g.with_junctions(junctions)

    @classmethod
    def symmetric(cls, half_width: float, dx: float, junctions: Sequence[float] = ()) -> "Grid1D":
        return cls.window(-half_width, half_width, dx, junctions)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n_nodes)

    @property
    def x_max(self) -> float:
        return self.x0 + self.dx * (self.n_nodes - 1)

    def node_of(self, x: float) -> int:
        s = (x - self.x0) / self.dx
        j = int(round(s))
        if abs(s - j) > _SNAP_TOL * max(1.0, abs(s)) or not 0 <= j < self.n_nodes:
            raise GridError(f"point {x} does not coincide with a grid node (dx={self.dx}, x0={self.x0})")
        return j

    def with_junctions(self, positions: Sequence[float]) -> "Grid1D":
        return replace(self, junction_indices=tuple(self.node_of(b) for b in positions))

    def nearest(self, x: float) -> int:
        return int(np.clip(round((x - self.x0) / self.dx), 0, self.n_nodes - 1))

    def cell_branches(self) -> np.ndarray:
        """Branch index of every cell ``[x_k, x_{k+1}]``."""
        k = np.arange(self.n_nodes - 1)
        return np.searchsorted(np.asarray(self.junction_indices, dtype=int), k, side="right")

    def as_dict(self) -> dict:
        return {"x0": self.x0, "dx": self.dx, "n_nodes": self.n_nodes,
                "junction_indices": list(self.junction_indices)}


@dataclass
class GridSolution:
    """Snapshot ``u(t, x_j)`` with Lipschitz certificates."""

    grid: Grid1D
    t: float
    values: np.ndarray
    lip_space: float
    lip_time: float = 0.0

    def measured_lip_space(self) -> float:
        return float(np.max(np.abs(np.diff(self.values)))) / self.grid.dx

    def check_lipschitz(self) -> bool:
        return bool(np.all(np.abs(np.diff(self.values)) <= self.lip_space * self.grid.dx * (1 + 1e-12) + 1e-15))

    def copy(self) -> "GridSolution":
        return replace(self, values=self.values.copy())


@dataclass(frozen=True)
class BoundaryCondition:
    """``dirichlet`` (trace ``U0(t)``), ``envelope_minus`` (left end only),
    ``envelope_plus`` (right end only) or ``slope`` (linear ghost value)."""

    kind: str
    trace: Callable | None = None
    slope: float = 0.0

    @classmethod
    def dirichlet(cls, trace: Callable) -> "BoundaryCondition":
        return cls("dirichlet", trace=trace)

    @classmethod
    def envelope_minus(cls) -> "BoundaryCondition":
        return cls("envelope_minus")

    @classmethod
    def envelope_plus(cls) -> "BoundaryCondition":
        return cls("envelope_plus")

    @classmethod
    def slope_extension(cls, p: float) -> "BoundaryCondition":
        return cls("slope", slope=float(p))

    def code(self, side: str) -> int:
        if self.kind == "dirichlet":
            return kernels.BC_DIRICHLET
        if self.kind == "slope":
            return kernels.BC_SLOPE
        expected = "envelope_minus" if side == "left" else "envelope_plus"
        if self.kind != expected:
            raise ValueError(f"{self.kind} boundary is only meaningful at the "
                             f"{'left' if self.kind == 'envelope_minus' else 'right'} end")
        return kernels.BC_ENVELOPE

    def values(self, times: np.ndarray) -> np.ndarray:
        if self.kind != "dirichlet":
            return np.zeros(len(times))
        return np.asarray([float(self.trace(t)) for t in times])

    def as_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "slope":
            d["slope"] = self.slope
        return d


def godunov_flux(H: QuasiConvexHamiltonian, p_left, p_right):
    """``max(H+(p_left), H-(p_right))``: consistent and monotone."""
    return np.maximum(H.envelope_plus(p_left), H.envelope_minus(p_right))


class _Layout:
    """Flat arrays describing grid + branch Hamiltonians for the kernels."""

    def __init__(self, grid: Grid1D, branches: Sequence[QuasiConvexHamiltonian]):
        nb = len(grid.junction_indices) + 1
        if len(branches) != nb:
            raise GridMismatch(f"grid has {nb - 1} junctions but {len(branches)} branch Hamiltonians were given")
        self.grid = grid
        self.branches = tuple(branches)
        width = max(2, max(H.table.size for H in branches))
        self.kinds = np.array([H.kind_code for H in branches], dtype=np.int64)
        self.prms = np.vstack([H.params for H in branches]).astype(np.float64)
        self.tabs = np.zeros((nb, width))
        for b, H in enumerate(branches):
            self.tabs[b, : H.table.size] = H.table
        self.p0s = np.array([H.p0 for H in branches], dtype=np.float64)
        cb = grid.cell_branches()
        self.cell_branch = cb
        self.bl = np.empty(grid.n_nodes, dtype=np.int64)
        self.br = np.empty(grid.n_nodes, dtype=np.int64)
        self.bl[1:] = cb
        self.bl[0] = cb[0]
        self.br[:-1] = cb
        self.br[-1] = cb[-1]
        self.jidx = np.asarray(grid.junction_indices, dtype=np.int64)
        self.index = kernels._BranchIndex(self.bl, self.br, nb)

    def limiter_field(self, limiters) -> np.ndarray:
        lim = np.full(self.grid.n_nodes, -np.inf)
        lim_vals = np.asarray(limiters, dtype=float).reshape(-1)
        if lim_vals.size != self.jidx.size:
            raise GridMismatch(f"{self.jidx.size} junctions but {lim_vals.size} limiter values")
        lim[self.jidx] = lim_vals
        return lim

    def slope_ranges(self, u: np.ndarray) -> list[tuple[float, float]]:
        d = np.diff(u) / self.grid.dx
        out = []
        for b in range(len(self.branches)):
            s = d[self.cell_branch == b]
            out.append((float(s.min()), float(s.max())) if s.size else (0.0, 0.0))
        return out

    def advance(self, u, dt, n_steps, lim, bc_left, bc_right, t0, use_numba=None):
        times = t0 + dt * np.arange(1, n_steps + 1)
        return kernels.advance(
            u, self.grid.dx, dt, n_steps, self.kinds, self.prms, self.tabs, self.p0s,
            self.bl, self.br, lim,
            bc_left.code("left"), bc_left.slope, bc_left.values(times),
            bc_right.code("right"), bc_right.slope, bc_right.values(times),
            index=self.index, use_numba=use_numba)


def _cfl_speed(layout: _Layout, u: np.ndarray, bc_left, bc_right) -> float:
    ranges = layout.slope_ranges(u)
    speed = 0.0
    for b, (lo, hi) in enumerate(ranges):
        H = layout.branches[b]
        if b == 0 and bc_left.kind == "slope":
            lo, hi = min(lo, bc_left.slope), max(hi, bc_left.slope)
        if b == len(ranges) - 1 and bc_right.kind == "slope":
            lo, hi = min(lo, bc_right.slope), max(hi, bc_right.slope)
        speed = max(speed, H.max_speed(min(lo, H.p0), max(hi, H.p0)))
    return speed


def step(sol: GridSolution, branches: Sequence[QuasiConvexHamiltonian], limiters, bc_left: BoundaryCondition,
         bc_right: BoundaryCondition, dt: float, *, cfl_safety: float = CFL_SAFETY,
         switch_times: Sequence[float] = (), use_numba=None) -> GridSolution:
    """One explicit step of size ``dt`` from ``sol``.

    ``branches`` lists ``H_0 ... H_N`` (one per region between junctions),
    ``limiters`` one value per junction, frozen over ``[t, t + dt)``.
    """
    for tau in switch_times:
        if sol.t < tau < sol.t + dt and not math.isclose(tau, sol.t + dt, rel_tol=1e-12, abs_tol=1e-14):
            raise PhaseBoundaryCrossed(f"switch time {tau} inside [{sol.t}, {sol.t + dt})")
    layout = _Layout(sol.grid, branches)
    for b, (lo, hi) in enumerate(layout.slope_ranges(sol.values)):
        H = branches[b]
        if lo < H.p_min or hi > H.p_max:
            raise OutOfRange(f"slopes [{lo:.4g}, {hi:.4g}] leave the sample range of {H!r}")
    speed = _cfl_speed(layout, sol.values, bc_left, bc_right)
    if speed > 0 and dt > cfl_safety * sol.grid.dx / speed * (1 + 1e-12):
        raise CflViolation(f"dt={dt:.4g} exceeds {cfl_safety} dx / max|H'| = {cfl_safety * sol.grid.dx / speed:.4g}")
    u = sol.values.copy()
    du = layout.advance(u, dt, 1, layout.limiter_field(limiters), bc_left, bc_right, sol.t, use_numba)
    lip_s = float(np.max(np.abs(np.diff(u)))) / sol.grid.dx
    return GridSolution(sol.grid, sol.t + dt, u, max(lip_s, 0.0), max(sol.lip_time, du / dt))


# -- Cauchy problems ---------------------------------------------------------

@dataclass
class Trajectory:
    """Output of :func:`solve_cauchy`."""

    grid: Grid1D
    snapshots: list[GridSolution]
    trace_t: np.ndarray
    trace_u: np.ndarray
    trace_is_sample: np.ndarray
    probe_index: int
    C: float
    lip0: float
    dt_max: float
    lip_time: float
    barrier_excess: float
    n_steps: int
    sample_dt: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> GridSolution:
        return self.snapshots[-1]

    def at(self, t: float) -> GridSolution:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.snapshots[i].t, t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[i]

    def sampled_trace(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.trace_is_sample
        return self.trace_t[m], self.trace_u[m]

    def barrier_ok(self, atol: float = 1e-10) -> bool:
        return self.barrier_excess <= atol

    def manifest(self) -> dict:
        return {
            "snapshot_times": [float(s.t) for s in self.snapshots],
            "grid": self.grid.as_dict(),
            "lipschitz": {"initial": self.lip0, "lip_time": self.lip_time,
                          "lip_space": [float(s.lip_space) for s in self.snapshots]},
            "C": self.C,
            "dt_max": self.dt_max,
            "n_steps": self.n_steps,
            "barrier_excess": self.barrier_excess,
            "probe_index": self.probe_index,
            "backend": "numba" if HAVE_NUMBA else "numpy",
            **self.meta,
        }

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        x = self.grid.x
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "u"])
            for s in self.snapshots:
                for xj, uj in zip(x, s.values):
                    w.writerow([repr(float(s.t)), repr(float(xj)), repr(float(uj))])
        return path

    def write(self, outdir: str | Path, stem: str = "trajectory") -> tuple[Path, Path]:
        outdir = Path(outdir)
        csv_path = self.write_csv(outdir / f"{stem}.csv")
        man = outdir / f"{stem}.json"
        man.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True), encoding="utf-8")
        return csv_path, man


def _initial_values(u0, grid: Grid1D) -> tuple[np.ndarray, tuple[float, float]]:
    if isinstance(u0, np.ndarray):
        vals = np.asarray(u0, dtype=float).copy()
        if vals.shape != (grid.n_nodes,):
            raise GridMismatch("initial array does not match the grid")
        far = ((vals[1] - vals[0]) / grid.dx, (vals[-1] - vals[-2]) / grid.dx)
        return vals, far
    if isinstance(u0, InitialDatum):
        return u0(grid.x).astype(float), u0.far_slopes()
    vals = np.asarray(u0(grid.x), dtype=float)
    far = ((vals[1] - vals[0]) / grid.dx, (vals[-1] - vals[-2]) / grid.dx)
    return vals, far


def _merge_times(ts: Sequence[float], scale: float) -> np.ndarray:
    ts = np.sort(np.asarray(ts, dtype=float))
    keep = [ts[0]]
    for t in ts[1:]:
        if t - keep[-1] > 1e-10 * max(1.0, scale):
            keep.append(t)
    return np.array(keep)


def solve_cauchy(scenario: JunctionScenario, u0, T: float, grid: Grid1D, *,
                 output_times: Sequence[float] | None = None,
                 sample_dt: float | None = None,
                 probe: int | None = None,
                 bc_left: BoundaryCondition | None = None,
                 bc_right: BoundaryCondition | None = None,
                 cfl_safety: float = CFL_SAFETY,
                 lipschitz: float | None = None,
                 use_numba=None) -> Trajectory:
    """Solve the junction problem on ``[0, T]``.

    Time is split at every limiter switch, output time and trace sample
    time; each piece is advanced with equal steps no larger than the CFL
    step. Boundary conditions default to linear extension at the far-field
    slopes of ``u0``.

    Args:
        scenario: junction positions, branch Hamiltonians and schedules.
        u0: :class:`InitialDatum`, callable of ``x`` or node array.
        T: horizon.
        grid: spatial grid; junction positions must lie on nodes.
        output_times: snapshot times (default ``[0, T]``).
        sample_dt: uniform spacing of the probe trace (default: none).
        probe: node index recorded in the trace (default: node at 0 if
            present, else the first junction, else the middle node).
        lipschitz: declared Lipschitz constant of ``u0``; the measured one
            is used when omitted.
    """
    grid = grid.with_junctions(scenario.positions)
    layout = _Layout(grid, scenario.branches)
    u, far = _initial_values(u0, grid)
    u_init = u.copy()
    bc_left = bc_left or BoundaryCondition.slope_extension(far[0])
    bc_right = bc_right or BoundaryCondition.slope_extension(far[1])
    bc_left.code("left"), bc_right.code("right")

    lip0 = float(np.max(np.abs(np.diff(u)))) / grid.dx
    if bc_left.kind == "slope":
        lip0 = max(lip0, abs(bc_left.slope))
    if bc_right.kind == "slope":
        lip0 = max(lip0, abs(bc_right.slope))
    if lipschitz is not None:
        if lip0 > lipschitz * (1 + 1e-9) + 1e-12:
            raise ValueError(f"initial datum has Lipschitz constant {lip0:.6g} > declared {lipschitz}")
        lip0 = float(lipschitz)
    C = scenario.barrier_constant(lip0)

    # speed bound on the slopes the solution can reach (|H_alpha(u_x)| <= C)
    speed = 0.0
    intervals = []
    for H in scenario.branches:
        lo, hi = H.sublevel_interval(max(C, H.min_value))
        lo, hi = min(lo, -lip0), max(hi, lip0)
        pad = 0.05 * (hi - lo) + 1e-6
        lo, hi = lo - pad, hi + pad
        intervals.append((lo, hi))
        speed = max(speed, H.max_speed(lo, hi))
    dt_max = cfl_safety * grid.dx / speed if speed > 0 else T

    if probe is None:
        try:
            probe = grid.node_of(0.0)
        except GridError:
            probe = grid.junction_indices[0] if grid.junction_indices else grid.n_nodes // 2
    if output_times is None:
        output_times = [0.0, T]
    out_set = _merge_times(list(output_times), T)
    pts = [0.0, T, *out_set, *scenario.switch_times(0.0, T)]
    sample_set = np.array([])
    if sample_dt is not None:
        m = int(round(T / sample_dt))
        sample_set = sample_dt * np.arange(m + 1)
        sample_set = sample_set[sample_set <= T * (1 + 1e-12)]
        pts.extend(sample_set)
    breaks = _merge_times([p for p in pts if -1e-12 <= p <= T * (1 + 1e-12)], T)

    def _is_in(t, arr):
        return arr.size > 0 and bool(np.min(np.abs(arr - t)) <= 1e-10 * max(1.0, T))

    snapshots = []
    trace_t = [0.0]
    trace_u = [u[probe]]
    trace_s = [_is_in(0.0, sample_set) if sample_dt else False]
    if _is_in(0.0, out_set):
        snapshots.append(GridSolution(grid, 0.0, u.copy(), lip0, 0.0))
    lip_time = 0.0
    barrier_excess = -np.inf
    n_total = 0
    for t_a, t_b in zip(breaks[:-1], breaks[1:]):
        seg = t_b - t_a
        n = max(1, int(math.ceil(seg / dt_max - 1e-9)))
        dt = seg / n
        lim = layout.limiter_field(scenario.limiters_at(0.5 * (t_a + t_b)))
        du = layout.advance(u, dt, n, lim, bc_left, bc_right, t_a, use_numba)
        n_total += n
        lip_time = max(lip_time, du / dt)
        ranges = layout.slope_ranges(u)
        for b, (lo, hi) in enumerate(ranges):
            ilo, ihi = intervals[b]
            if lo < ilo or hi > ihi:
                H = scenario.branches[b]
                sp = H.max_speed(min(lo, ilo), max(hi, ihi))
                if 2.0 * dt * sp > grid.dx:
                    raise CflViolation(f"slopes [{lo:.4g}, {hi:.4g}] in branch {b} need dt <= "
                                       f"{0.5 * grid.dx / sp:.4g}, used {dt:.4g}")
                log.info("branch %d slopes [%.4g, %.4g] left the estimated range; CFL still satisfied", b, lo, hi)
        barrier_excess = max(barrier_excess, float(np.max(np.abs(u - u_init))) - C * t_b)
        trace_t.append(t_b)
        trace_u.append(u[probe])
        trace_s.append(_is_in(t_b, sample_set))
        if _is_in(t_b, out_set):
            lip_s = float(np.max(np.abs(np.diff(u)))) / grid.dx
            snapshots.append(GridSolution(grid, float(t_b), u.copy(), lip_s, lip_time))
    return Trajectory(grid=grid, snapshots=snapshots, trace_t=np.array(trace_t), trace_u=np.array(trace_u),
                      trace_is_sample=np.array(trace_s, dtype=bool), probe_index=int(probe), C=float(C),
                      lip0=lip0, dt_max=float(dt_max), lip_time=float(lip_time),
                      barrier_excess=float(barrier_excess), n_steps=n_total, sample_dt=sample_dt,
                      meta={"bc_left": bc_left.as_dict(), "bc_right": bc_right.as_dict(), "T": float(T)})


def comparison_check(sub, sup, atol: float = 1e-12) -> bool:
    """``sub <= sup`` nodewise at every common snapshot.

    Accepts two :class:`Trajectory` objects or two :class:`GridSolution`.
    """
    if isinstance(sub, GridSolution):
        sub, sup = [sub], [sup]
    else:
        sub, sup = sub.snapshots, sup.snapshots
    if len(sub) != len(sup):
        raise GridMismatch("different number of snapshots")
    for a, b in zip(sub, sup):
        if a.grid.n_nodes != b.grid.n_nodes or a.grid.dx != b.grid.dx or a.grid.x0 != b.grid.x0:
            raise GridMismatch("solutions live on different grids")
        if not math.isclose(a.t, b.t, rel_tol=1e-12, abs_tol=1e-14):
            raise GridMismatch(f"snapshot times differ: {a.t} vs {b.t}")
        if np.any(a.values > b.values + atol):
            return False
    return True
