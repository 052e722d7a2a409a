"""Compare the numba and numpy stepping backends.

    python3 benchmarks/bench_kernels.py [--nodes 401 1601 6401] [--steps 2000]

Times the raw kernel on a three-junction grid and a full truncated-corrector
run, and reports the largest difference between the two backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hjlab._accel import HAVE_NUMBA
from hjlab.hamiltonian import quadratic, vee
from hjlab.scenario import JunctionScenario, PhaseSchedule
from hjlab.solver import BoundaryCondition, Grid1D, _Layout, solve_cauchy


def _scenario() -> JunctionScenario:
    branches = (vee(), quadratic(0.2, 0.5), vee(slope=2.0, slope_right=0.5), vee())
    sched = (PhaseSchedule((0.0, 0.5), (1.0, 0.0)), PhaseSchedule.constant(0.3),
             PhaseSchedule((0.0, 0.25), (0.2, 0.8)))
    return JunctionScenario((-1.0, 0.0, 1.0), branches, sched)


def bench_kernel(n_nodes: int, n_steps: int, use_numba: bool) -> tuple[float, np.ndarray]:
    sc = _scenario()
    half = 2.0
    grid = Grid1D.symmetric(half, 2 * half / (n_nodes - 1), sc.positions)
    lay = _Layout(grid, sc.branches)
    u = np.sin(3 * grid.x) * 0.3
    lim = lay.limiter_field(sc.limiters_at(0.1))
    bc = BoundaryCondition.slope_extension(0.0)
    dt = 0.2 * grid.dx
    lay.advance(u.copy(), dt, 2, lim, bc, bc, 0.0, use_numba)  # compile / warm up
    t0 = time.perf_counter()
    lay.advance(u, dt, n_steps, lim, bc, bc, 0.0, use_numba)
    return time.perf_counter() - t0, u


def bench_corrector(use_numba: bool) -> tuple[float, np.ndarray]:
    sc = _scenario()
    grid = Grid1D.symmetric(6.0, 0.02, sc.positions)
    t0 = time.perf_counter()
    traj = solve_cauchy(sc, np.zeros(grid.n_nodes), 20.0, grid, bc_left=BoundaryCondition.envelope_minus(),
                        bc_right=BoundaryCondition.envelope_plus(), use_numba=use_numba)
    return time.perf_counter() - t0, traj.final.values


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[401, 1601, 6401])
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba unavailable (or HJLAB_NO_NUMBA set): timing the numpy backend only")
    print(f"{'case':>24} {'numpy_s':>10} {'numba_s':>10} {'speedup':>8} {'max_diff':>10}")
    for n in args.nodes:
        t_np, u_np = bench_kernel(n, args.steps, False)
        if HAVE_NUMBA:
            t_nb, u_nb = bench_kernel(n, args.steps, True)
            print(f"{f'kernel n={n}':>24} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} "
                  f"{np.max(np.abs(u_np - u_nb)):10.2e}")
        else:
            print(f"{f'kernel n={n}':>24} {t_np:10.4f} {'-':>10} {'-':>8} {'-':>10}")
    t_np, w_np = bench_corrector(False)
    if HAVE_NUMBA:
        bench_corrector(True)
        t_nb, w_nb = bench_corrector(True)
        print(f"{'corrector rho=6, T=20':>24} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} "
              f"{np.max(np.abs(w_np - w_nb)):10.2e}")
    else:
        print(f"{'corrector rho=6, T=20':>24} {t_np:10.4f}")


if __name__ == "__main__":
    main()
