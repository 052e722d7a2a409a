import numpy as np
import pytest

from hjlab import Grid1D, InitialDatum, JunctionScenario, PhaseSchedule, solve_cauchy, vee
from hjlab.cell import EffectiveModel
from hjlab.errors import UnderResolved
from hjlab.homogenization import (EpsilonSweep, convergence_report, errors_non_increasing, fine_grid,
                                  solve_effective, solve_oscillatory)


class TestSweep:
    def test_validation(self):
        with pytest.raises(ValueError):
            EpsilonSweep((0.1, 0.2))
        with pytest.raises(ValueError):
            EpsilonSweep((0.1, -0.05))
        s = EpsilonSweep(T=2.0)
        assert s.t_min == pytest.approx(0.2)

    def test_noise_allowance(self):
        assert errors_non_increasing([0.1, 0.105, 0.05], noise=0.1)
        assert not errors_non_increasing([0.1, 0.2, 0.05], noise=0.1)

    def test_fine_grid_nested(self):
        c = Grid1D.symmetric(1.0, 0.01)
        f = fine_grid(c, 0.05)
        assert f.dx <= 0.05 / 20 + 1e-15
        np.testing.assert_allclose(f.x[:: int(round(c.dx / f.dx))], c.x, atol=1e-12)


class TestOscillatory:
    def test_eps_one_matches_cauchy(self, half_green):
        g = Grid1D.symmetric(2.0, 0.05, [0.0])
        a = solve_oscillatory(half_green, 1.0, InitialDatum(), 2.0, g)
        b = solve_cauchy(half_green, InitialDatum(), 2.0, g)
        np.testing.assert_array_equal(a.final.values, b.final.values)

    def test_under_resolved(self, half_green):
        with pytest.raises(UnderResolved):
            solve_oscillatory(half_green, 0.1, InitialDatum(), 1.0, Grid1D.symmetric(1.0, 0.01))

    @pytest.mark.parametrize("eps", [0.5, 0.2, 0.1])
    def test_constant_limiter_scaling(self, constant_light, eps):
        g = Grid1D.symmetric(2.0, eps / 20)
        tr = solve_oscillatory(constant_light, eps, InitialDatum(), 1.0, g)
        assert tr.final.values[g.node_of(0.0)] == pytest.approx(-0.5, abs=eps)
        assert tr.barrier_ok()

    @pytest.mark.parametrize("eps", [0.5, 0.25])
    def test_barriers_every_eps(self, eps):
        sc = JunctionScenario.homogeneous(vee(), [-1.0, 1.0], [PhaseSchedule((0.0, 0.5), (1.0, 0.0)),
                                                               PhaseSchedule((0.0, 0.25), (0.3, 1.2))])
        g = Grid1D.symmetric(3.0, eps / 20)
        tr = solve_oscillatory(sc, eps, InitialDatum("abs", {"coef": 0.3}), 1.0, g, output_times=[0, 0.5, 1])
        assert tr.barrier_ok()


class TestEffective:
    def test_invisible_junction(self):
        H = vee(c=0.2)
        m = EffectiveModel.from_values(H, H, H.min_value)
        g = Grid1D.symmetric(2.0, 0.05)
        u0 = InitialDatum("piecewise", {"xs": [-1, 0, 1], "us": [0.0, 0.5, 0.1]})
        a = solve_effective(m, u0, 0.5, g)
        b = solve_cauchy(JunctionScenario((), (H,), ()), u0, 0.5, g)
        np.testing.assert_array_equal(a.final.values, b.final.values)

    def test_constant_limiter_trace(self):
        m = EffectiveModel.from_values(vee(), vee(), 0.5)
        g = Grid1D.symmetric(3.0, 0.02)
        tr = solve_effective(m, InitialDatum(), 1.0, g)
        assert tr.final.values[g.node_of(0.0)] == pytest.approx(-0.5, abs=1e-12)

    def test_translating_profile(self):
        m = EffectiveModel.from_values(vee(), vee(), 0.5)
        g = Grid1D.symmetric(2.0, 0.02)
        tr = solve_effective(m, InitialDatum("abs", {"coef": -0.5}), 1.0, g)
        np.testing.assert_allclose(tr.final.values, -0.5 * np.abs(g.x) - 0.5, atol=1e-12)

    def test_clamps_round_off_below_a0(self):
        H = vee(c=0.0)
        m = EffectiveModel.from_values(H, H, -1e-14)
        tr = solve_effective(m, InitialDatum(), 0.5, Grid1D.symmetric(1.0, 0.05))
        assert np.all(tr.final.values == 0.0)


class TestConvergenceReport:
    def test_no_junctions_exact(self, tmp_path):
        H = vee()
        sc = JunctionScenario((), (H,), ())
        m = EffectiveModel.from_values(H, H, 0.0)
        sweep = EpsilonSweep((0.5, 0.25), T=1.0, u0=InitialDatum("linear", {"slope": 0.3}))
        rep = convergence_report(sweep, sc, m, coarse_dx=0.05)
        assert rep.errors == pytest.approx([0.0, 0.0], abs=1e-12)
        path = rep.write_csv(tmp_path / "c.csv")
        assert path.read_text().splitlines()[0] == "eps,dx,dt,sup_error,runtime_s"

    def test_single_light_decreasing(self, half_green):
        m = EffectiveModel.from_values(vee(), vee(), 0.5)
        rep = convergence_report(EpsilonSweep((0.4, 0.2, 0.1), T=1.0), half_green, m, coarse_dx=0.02)
        assert rep.non_increasing and not rep.not_converging
        assert all(r.barrier_ok for r in rep.rows)

    def test_flags_divergence(self, half_green):
        # wrong model on purpose: A_bar far from the true value
        m = EffectiveModel.from_values(vee(), vee(), 0.0)
        rep = convergence_report(EpsilonSweep((0.4, 0.2), T=1.0), half_green, m, coarse_dx=0.02)
        assert rep.errors[-1] > 0.3
