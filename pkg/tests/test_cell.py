import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjlab import cell
from hjlab.cell import (EffectiveModel, ErgodicEstimate, TruncatedCorrector, check_lambda_monotone,
                        corrector_slopes, default_rho_schedule, effective_flux_limiter, effective_hamiltonian,
                        effective_model, ergodic_constant, truncated_corrector)
from hjlab.errors import HorizonTooShort, InvariantViolation, NotConverged, ProfileTooNarrow, RhoTooSmall
from hjlab import (Grid1D, InitialDatum, JunctionScenario, PhaseSchedule, SpaceTimeHamiltonian, quadratic,
                   solve_cauchy, vee)


def cosine_well():
    f = lambda t, x, p: np.abs(p) - (1 + np.cos(2 * np.pi * np.asarray(x))) / 2
    return SpaceTimeHamiltonian(f, time_dependent=False, p0=lambda t, x: np.zeros(np.shape(x)))


def cosine_well_oracle(p):
    # constant-sign corrector when |p| >= <f> = 1/2, otherwise H_bar = -min f = 0
    return max(0.0, abs(p) - 0.5)


class TestErgodicConstant:
    def test_linear_trace(self):
        t = np.linspace(0, 20, 321)
        e = ergodic_constant(t, -3 * t, L=3.0, rho=1.0)
        assert e.value == pytest.approx(-3.0) and e.width == pytest.approx(0.0, abs=1e-12)

    def test_sine_trace(self):
        t = np.arange(0, 20 + 1e-9, 1 / 16)
        e = ergodic_constant(t, -3 * t + 0.1 * np.sin(2 * np.pi * t), L=3 + 0.2 * np.pi, rho=1.0, T=10.0)
        assert e.lower <= -3.0 <= e.upper
        assert e.width <= 2 * (3 + 0.2 * np.pi) * 2 / 10

    def test_negated(self):
        e = ErgodicEstimate(-1.0, -1.5, -0.5, 10.0, 0.2).negated()
        assert (e.value, e.lower, e.upper) == (1.0, 0.5, 1.5)

    def test_horizon_too_short(self):
        t = np.linspace(0, 2, 33)
        with pytest.raises(HorizonTooShort):
            ergodic_constant(t, -t, L=1.0, rho=1.0, tol=0.1)
        with pytest.raises(HorizonTooShort):
            ergodic_constant(t, -t, L=1.0, rho=1.0, T=5.0)

    def test_needs_uniform_sampling(self):
        with pytest.raises(ValueError):
            ergodic_constant(np.array([0.0, 1.0, 3.0, 4.0]), np.zeros(4), L=1.0, rho=1.0)

    @given(st.floats(-5, 5), st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=4), st.integers(16, 400),
           st.floats(0, 1))
    def test_periodic_noise_bracketed(self, lam, amps, m, phase):
        h = 1 / 16
        T = m * h
        t = h * np.arange(2 * m + 1)
        k = np.arange(1, len(amps) + 1)
        noise = np.sum(np.array(amps)[:, None] * np.sin(2 * np.pi * (k[:, None] * t[None, :] + phase)), axis=0)
        L = abs(lam) + float(np.sum(2 * np.pi * k * np.abs(amps)))
        e = ergodic_constant(t, lam * t + noise, L=L, rho=1.0)
        assert e.lower - 1e-9 <= lam <= e.upper + 1e-9
        assert e.width <= e.width_bound + 1e-12

    def test_solver_sign_convention(self, constant_light):
        g = Grid1D.symmetric(3.0, 0.02, [0.0])
        tr = solve_cauchy(constant_light, InitialDatum(), 4.0, g, sample_dt=1 / 16)
        e = ergodic_constant(*tr.sampled_trace(), L=1.0, rho=6.0)
        assert e.value == pytest.approx(-0.5, abs=1e-9)


class TestEffectiveHamiltonian:
    def test_p_only(self):
        H = SpaceTimeHamiltonian(lambda t, x, p: np.abs(p) + 0 * np.asarray(x), time_dependent=False,
                                 p0=lambda t, x: np.zeros(np.shape(x)))
        for p in (-1.0, 0.0, 2.0):
            e = effective_hamiltonian(H, p, dx=0.05, T=4.0)
            assert e.value == pytest.approx(abs(p), abs=1e-12)

    def test_vanishing_perturbation(self):
        H = SpaceTimeHamiltonian(lambda t, x, p: np.abs(p) - 0.0 * np.cos(2 * np.pi * t), time_dependent=True)
        assert effective_hamiltonian(H, 0.7, dx=0.05, T=4.0).value == pytest.approx(0.7, abs=1e-9)

    @pytest.mark.parametrize("p", [0.0, 0.25, 1.0, 2.0])
    def test_cosine_well(self, p):
        e = effective_hamiltonian(cosine_well(), p, dx=0.02, T=20.0)
        want = cosine_well_oracle(p)
        assert e.lower - 0.005 <= want <= e.upper + 0.005
        assert abs(e.value - want) <= 0.02

    def test_time_dependent_average(self):
        # H = |p| - cos(2 pi t): the time average of the forcing vanishes
        H = SpaceTimeHamiltonian(lambda t, x, p: np.abs(p) - np.cos(2 * np.pi * t) + 0 * np.asarray(x),
                                 p0=lambda t, x: np.zeros(np.shape(x)))
        e = effective_hamiltonian(H, 1.0, dx=0.05, T=4.0)
        assert e.lower <= 1.0 + 1e-6 and e.upper >= 1.0 - 1e-6

    def test_table_helper(self):
        out = cell.effective_hamiltonian_table(cosine_well(), [1.0, 2.0], dx=0.05, T=4.0)
        assert [round(e.value, 1) for e in out] == [0.5, 1.5]


class TestTruncatedCorrector:
    def test_no_junction(self, abs_h):
        sc = JunctionScenario((), (abs_h,), ())
        tc = truncated_corrector(sc, 2.0, 0.05, 4.0)
        assert tc.lambda_rho == 0.0 and np.all(tc.profile.values == 0.0)

    @pytest.mark.parametrize("rho", [1.0, 2.5])
    def test_constant_limiter(self, constant_light, rho):
        tc = truncated_corrector(constant_light, rho, 0.05, 10.0)
        assert tc.lambda_rho == pytest.approx(0.5, abs=1e-9)
        assert tc.settled and tc.oscillation_ok

    def test_half_green(self, half_green):
        tc = truncated_corrector(half_green, 2.0, 0.05, 10.0)
        assert tc.estimate.contains(0.5, atol=1e-9)

    def test_rho_too_small(self, abs_h):
        sc = JunctionScenario.homogeneous(abs_h, [1.0], [PhaseSchedule.constant(0.5)])
        with pytest.raises(RhoTooSmall):
            truncated_corrector(sc, 1.0, 0.05, 4.0)

    def test_period_multiple(self, half_green):
        with pytest.raises(ValueError):
            truncated_corrector(half_green, 2.0, 0.05, 4.5)


def fake_correctors(monkeypatch, brackets):
    calls = iter(brackets)

    def fake(rho, scenario, dx, T, kw):
        lo, hi = next(calls)
        e = ErgodicEstimate(0.5 * (lo + hi), lo, hi, T, 1.0)
        return TruncatedCorrector(rho, e, None, 0.0, 1.0)

    monkeypatch.setattr(cell, "_tc_one", fake)


class TestFluxLimiter:
    def test_no_junction_is_min(self):
        H = vee(c=0.3)
        res = effective_flux_limiter(JunctionScenario((), (H,), ()), dx=0.05, T=4.0)
        assert res.A_bar == pytest.approx(H.min_value, abs=1e-12) and res.A0 == H.min_value

    @pytest.mark.parametrize("vals", [(0.8, 0.2), (2.0, 0.0, 0.5)])
    def test_single_light_mean(self, abs_h, vals):
        st_ = (0.0, 0.5) if len(vals) == 2 else (0.0, 0.25, 0.5)
        sched = PhaseSchedule(st_, vals)
        sc = JunctionScenario.homogeneous(abs_h, [0.0], [sched])
        res = effective_flux_limiter(sc, dx=0.05, T=20.0)
        mean = float(np.dot(sched.durations, vals))
        assert abs(res.A_bar - mean) <= 0.03 + res.width
        assert res.monotone and res.converged

    def test_default_schedule(self, abs_h):
        sc = JunctionScenario.homogeneous(abs_h, [-0.5, 0.5], [PhaseSchedule.constant(0.5)] * 2)
        assert default_rho_schedule(sc, 0.02) == pytest.approx([2.5, 5.0, 10.0])

    def test_drift_raises(self, monkeypatch, constant_light):
        fake_correctors(monkeypatch, [(0.1, 0.1), (0.5, 0.5)])
        with pytest.raises(NotConverged):
            effective_flux_limiter(constant_light, [1.0, 2.0], tol=0.02)

    def test_non_monotone_raises(self, monkeypatch, constant_light):
        fake_correctors(monkeypatch, [(0.6, 0.6), (0.5, 0.5)])
        with pytest.raises(InvariantViolation):
            effective_flux_limiter(constant_light, [1.0, 2.0], tol=0.2)

    def test_below_a0_raises(self, monkeypatch, constant_light):
        fake_correctors(monkeypatch, [(-0.5, -0.5), (-0.5, -0.5)])
        with pytest.raises(InvariantViolation):
            effective_flux_limiter(constant_light, [1.0, 2.0])

    def test_non_strict_reports(self, monkeypatch, constant_light):
        fake_correctors(monkeypatch, [(0.6, 0.6), (0.1, 0.1)])
        res = effective_flux_limiter(constant_light, [1.0, 2.0], strict=False)
        assert not res.monotone and not res.converged

    def test_monotone_helper(self):
        from hjlab.cell import RhoEstimate
        rs = [RhoEstimate(1, 0.5, 0.4, 0.6), RhoEstimate(2, 0.35, 0.3, 0.4)]
        assert check_lambda_monotone(rs)
        assert not check_lambda_monotone([RhoEstimate(1, 0.5, 0.5, 0.5), RhoEstimate(2, 0.4, 0.4, 0.4)])


class TestEffectiveModel:
    def test_json_schema(self, constant_light):
        m = effective_model(constant_light, dx=0.05, T=10.0)
        d = json.loads(m.to_json())
        assert set(d) == {"H_bar_L", "H_bar_R", "A_bar", "bracket", "A0", "slopes", "provenance"}
        assert set(d["slopes"]) == {"p_bar_L", "p_hat_L", "p_bar_R", "p_hat_R"}
        assert set(d["provenance"][0]) == {"rho", "lambda", "lower", "upper"}
        assert d["slopes"]["p_bar_R"] == pytest.approx(0.5)

    def test_slopes_at_level(self):
        m = EffectiveModel.from_values(vee(), quadratic(0.0, 1.0), 1.0)
        assert (m.slopes.p_bar_L, m.slopes.p_bar_R) == pytest.approx((-1.0, 1.0))


class TestCorrectorSlopes:
    def test_no_junction(self, abs_h):
        sc = JunctionScenario((), (abs_h,), ())
        tc = truncated_corrector(sc, 4.0, 0.05, 4.0)
        m = EffectiveModel.from_values(abs_h, abs_h, 0.0)
        rep = corrector_slopes(tc.profile, m, [0.5, 0.25])
        assert rep.ok and rep.measured_left == 0.0 and rep.measured_right == 0.0
        assert m.slopes.p_bar_R == m.slopes.p_hat_R == 0.0

    def test_constant_limiter_slopes(self, constant_light):
        tc = truncated_corrector(constant_light, 8.0, 0.05, 10.0)
        m = effective_model(constant_light, dx=0.05, T=10.0)
        rep = corrector_slopes(tc.profile, m, [0.25, 0.125])
        assert rep.ok
        assert rep.measured_left == pytest.approx(-0.5, abs=1e-9)
        assert rep.measured_right == pytest.approx(0.5, abs=1e-9)

    def test_periodic_limiter_cone(self, half_green):
        tc = truncated_corrector(half_green, 8.0, 0.05, 10.0)
        m = EffectiveModel.from_values(vee(), vee(), tc.lambda_rho)
        assert corrector_slopes(tc.profile, m, [0.25, 0.125]).ok

    def test_too_narrow(self, constant_light):
        tc = truncated_corrector(constant_light, 2.0, 0.05, 4.0)
        m = EffectiveModel.from_values(vee(), vee(), 0.5)
        with pytest.raises(ProfileTooNarrow):
            corrector_slopes(tc.profile, m, [0.25])
