import os
import subprocess
import sys

import numpy as np
import pytest

from hjlab import Grid1D, InitialDatum, JunctionScenario, PhaseSchedule, from_table, quadratic, solve_cauchy, vee
from hjlab import kernels
from hjlab._accel import HAVE_NUMBA
from hjlab.solver import BoundaryCondition

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba backend disabled")


def mixed_scenario():
    p = np.linspace(-6, 6, 241)
    table = from_table(p, np.maximum(np.abs(p - 0.3) - 0.5, 0.0) ** 1.2)
    branches = (vee(), quadratic(0.2, 0.5), table, vee(slope=2.0, slope_right=0.5))
    sched = (PhaseSchedule((0.0, 0.5), (1.0, 0.0)), PhaseSchedule.constant(0.3),
             PhaseSchedule((0.0, 0.25), (0.2, 0.8)))
    return JunctionScenario((-1.0, 0.0, 1.0), branches, sched)


@needs_numba
@pytest.mark.parametrize("bc", ["slope", "envelope", "dirichlet"])
def test_backends_bitwise_equal(bc):
    sc = mixed_scenario()
    g = Grid1D.symmetric(3.0, 0.02, sc.positions)
    u0 = InitialDatum("piecewise", {"xs": [-2, 0, 1, 2], "us": [0.5, -0.2, 0.3, 0.0],
                                    "left_slope": -0.2, "right_slope": 0.1})
    if bc == "envelope":
        kw = {"bc_left": BoundaryCondition.envelope_minus(), "bc_right": BoundaryCondition.envelope_plus()}
    elif bc == "dirichlet":
        kw = {"bc_left": BoundaryCondition.dirichlet(lambda t: 0.5 - 0.1 * t),
              "bc_right": BoundaryCondition.dirichlet(lambda t: 0.0 * t)}
    else:
        kw = {}
    a = solve_cauchy(sc, u0, 2.0, g, use_numba=True, **kw)
    b = solve_cauchy(sc, u0, 2.0, g, use_numba=False, **kw)
    np.testing.assert_array_equal(a.final.values, b.final.values)
    assert a.lip_time == b.lip_time


@needs_numba
def test_scalar_and_vector_eval_agree():
    sc = mixed_scenario()
    ps = np.linspace(-5, 5, 101)
    for H in sc.branches:
        vec = kernels.h_eval_vec(H.kind_code, H.params, H.table, ps)
        sca = [kernels.h_eval_scalar(H.kind_code, H.params, H.table, p) for p in ps]
        np.testing.assert_array_equal(vec, sca)


def test_env_flag_selects_numpy():
    code = "from hjlab._accel import backend, HAVE_NUMBA; print(backend(), HAVE_NUMBA)"
    env = {**os.environ, "HJLAB_NO_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "False"]


def test_numpy_fallback_runs_under_flag():
    code = ("import numpy as np\n"
            "from hjlab import *\n"
            "sc = JunctionScenario.homogeneous(vee(), [0.0], [PhaseSchedule.constant(0.5)])\n"
            "tr = solve_cauchy(sc, InitialDatum(), 1.0, Grid1D.symmetric(2.0, 0.05, [0.0]))\n"
            "print(float(tr.final.values[40]))\n")
    env = {**os.environ, "HJLAB_NO_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert float(out.stdout) == pytest.approx(-0.5, abs=1e-12)
