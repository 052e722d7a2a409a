import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjlab import vee, quadratic
from hjlab.errors import ScenarioInvalid, ToleranceExceeded
from hjlab.scenario import InitialDatum, JunctionScenario, PhaseSchedule, pointwise_max, scenario_from_dict
from hjlab.traffic import (check_lower_bound, check_merging_limit, check_monotonicity_in_spacing, check_n1_identity,
                           critical_distance_estimate, evenly_spaced, mean_limiter, random_scenario)

FAST = {"dx": 0.05, "T": 20.0}
HALF = PhaseSchedule((0.0, 0.5), (1.0, 0.0))
ANTI = PhaseSchedule((0.0, 0.5), (0.0, 1.0))


class TestSchedules:
    @pytest.mark.parametrize("sched,mean", [(PhaseSchedule.constant(0.5), 0.5), (HALF, 0.5),
                                            (PhaseSchedule((0.0, 0.25), (2.0, 0.0)), 0.5)])
    def test_mean(self, sched, mean):
        assert mean_limiter(sched) == mean

    def test_validation(self):
        with pytest.raises(ScenarioInvalid):
            PhaseSchedule((0.1, 0.5), (1.0, 0.0))
        with pytest.raises(ScenarioInvalid):
            PhaseSchedule((0.0, 0.5, 0.5), (1.0, 0.0, 1.0))
        with pytest.raises(ScenarioInvalid):
            PhaseSchedule((0.0, 1.0), (1.0, 0.0))

    def test_periodic_lookup(self):
        assert HALF(0.25) == 1.0 and HALF(1.75) == 0.0 and HALF(3.0) == 1.0

    @given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.floats(-2, 2), st.floats(-2, 2))
    def test_linear_in_values(self, vals, a, b):
        st_ = tuple(k / len(vals) for k in range(len(vals)))
        s1 = PhaseSchedule(st_, tuple(vals))
        s2 = PhaseSchedule(st_, tuple(v * v for v in vals))
        comb = PhaseSchedule(st_, tuple(a * v + b * v * v for v in vals))
        assert mean_limiter(comb) == pytest.approx(a * mean_limiter(s1) + b * mean_limiter(s2), abs=1e-12)

    @given(st.lists(st.floats(0, 2), min_size=1, max_size=4), st.integers(2, 4))
    def test_refinement_invariant(self, vals, k):
        n = len(vals)
        st_ = tuple(i / n for i in range(n))
        fine_t = tuple(i / (n * k) for i in range(n * k))
        fine_v = tuple(vals[i // k] for i in range(n * k))
        assert mean_limiter(PhaseSchedule(fine_t, fine_v)) == pytest.approx(mean_limiter(PhaseSchedule(st_, tuple(vals))))

    def test_pointwise_max(self):
        assert mean_limiter(pointwise_max([HALF, ANTI])) == 1.0


class TestScenario:
    def test_unsorted_positions_named(self):
        with pytest.raises(ScenarioInvalid, match="positions"):
            JunctionScenario.homogeneous(vee(), [1.0, 0.0], [HALF, HALF])

    def test_floor_violation(self):
        with pytest.raises(ScenarioInvalid, match="schedules"):
            JunctionScenario.homogeneous(vee(c=-0.5), [0.0], [PhaseSchedule.constant(0.2)])

    def test_from_dict(self):
        sc = scenario_from_dict({"hamiltonian": {"kind": "vee"}, "positions": [-1, 1],
                                 "schedules": [{"switch_times": [0, 0.5], "values": [1, 0]}] * 2})
        assert sc.n_junctions == 2 and sc.spacings == (2.0,) and sc.rho0 == 1.0

    def test_scaled(self):
        sc = JunctionScenario.homogeneous(vee(), [-1.0, 2.0], [HALF, ANTI]).scaled(0.1)
        assert sc.positions == pytest.approx((-0.1, 0.2))
        assert sc.schedules[0](0.04) == 1.0 and sc.schedules[0](0.06) == 0.0

    def test_barrier_constant(self):
        sc = JunctionScenario.homogeneous(vee(), [0.0], [PhaseSchedule((0.0, 0.5), (2.0, 0.0))])
        assert sc.barrier_constant(1.0) == 2.0
        assert sc.barrier_constant(3.0) == 3.0

    def test_initial_data(self):
        x = np.array([-2.0, 0.0, 2.0])
        u = InitialDatum("piecewise", {"xs": [-1, 1], "us": [0, 1], "left_slope": 1.0, "right_slope": -1.0})
        np.testing.assert_allclose(u(x), [-1.0, 0.5, 0.0])
        assert InitialDatum.from_dict(u.as_dict()).far_slopes() == (1.0, -1.0)


class TestCriticalDistance:
    def test_abs_vee(self):
        sc = JunctionScenario.homogeneous(vee(), [-1.0, 1.0], [HALF, ANTI])
        cd = critical_distance_estimate(sc)
        assert cd.d0 == 16.0 and cd.C == 1.0 and not cd.degenerate

    def test_degenerate(self):
        sc = JunctionScenario.homogeneous(vee(), [-1.0, 1.0], [PhaseSchedule.constant(0.0)] * 2)
        cd = critical_distance_estimate(sc)
        assert cd.d0 == 0.0 and cd.degenerate

    @given(st.floats(1.0, 4.0), st.floats(0.0, 2.0))
    def test_wider_gap_shrinks_d0(self, slope, extra):
        def d0(s):
            sc = JunctionScenario.homogeneous(vee(slope=s), [-1.0, 1.0], [HALF, ANTI])
            return critical_distance_estimate(sc).d0
        # a steeper vee narrows the level-set gap at the same level
        assert d0(slope + extra) >= d0(slope) - 1e-12


class TestChecks:
    def test_n1_constant_exact(self):
        sc = JunctionScenario.homogeneous(vee(), [0.0], [PhaseSchedule.constant(0.7)])
        rep = check_n1_identity(sc, **FAST)
        assert rep.passed and rep.rows[0].computed == pytest.approx(0.7, abs=1e-9)

    def test_n1_mixed_branches(self):
        sc = JunctionScenario((0.0,), (vee(), quadratic(0.0, 1.0)), (PhaseSchedule((0.0, 0.5), (0.8, 0.2)),))
        assert check_n1_identity(sc, **FAST).passed

    def test_n1_raises_when_strict(self):
        sc = JunctionScenario.homogeneous(vee(), [0.0], [HALF])
        with pytest.raises(ToleranceExceeded):
            check_n1_identity(sc, tol=-1.0, **FAST)

    def test_lower_bound_opposite_phases(self):
        sc = JunctionScenario.homogeneous(vee(), evenly_spaced(2, 0.2), [HALF, ANTI])
        rep = check_lower_bound(sc, **FAST)
        assert rep.passed and rep.rows[0].computed > 0.55

    def test_spacing_single_light_vacuous(self):
        sc = JunctionScenario.homogeneous(vee(), [0.0], [HALF])
        assert check_monotonicity_in_spacing(sc, **FAST).passed

    def test_spacing_opposite(self):
        sc = JunctionScenario.homogeneous(vee(), [-0.1, 0.1], [HALF, ANTI])
        rep = check_monotonicity_in_spacing(sc, deltas=(0.0, 0.3, 1.0), **FAST)
        assert rep.passed
        assert [t["ell"] for t in rep.table] == pytest.approx([0.2, 0.5, 1.2])

    def test_in_phase_informational(self):
        sc = JunctionScenario.homogeneous(vee(), [-0.25, 0.25], [HALF, HALF])
        rep = check_monotonicity_in_spacing(sc, deltas=(0.0, 1.0), **FAST)
        for t in rep.table:
            assert t["lower"] - 0.03 <= 0.5 <= t["upper"] + 0.03

    def test_merging_identical(self):
        sc = JunctionScenario.homogeneous(vee(), [-0.5, 0.5], [HALF, HALF])
        rep = check_merging_limit(sc, ells=(1.0, 0.5, 0.1), **FAST)
        assert rep.passed
        assert all(abs(t["A_bar"] - 0.5) <= 0.03 + t["upper"] - t["lower"] for t in rep.table)

    def test_merging_three(self):
        third = PhaseSchedule((0.0, 0.25, 0.75), (0.0, 1.0, 0.0))
        sc = JunctionScenario.homogeneous(vee(), [-1.0, 0.0, 1.0], [HALF, ANTI, third])
        rep = check_merging_limit(sc, ells=(1.0, 0.2, 0.05), **FAST)
        assert rep.table[0]["limit"] == 1.0
        assert rep.passed

    def test_random_scenarios_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            sc = random_scenario(rng, dx=0.02)
            assert 1 <= sc.n_junctions <= 3
            assert all(0.25 - 0.01 <= s <= 4 + 0.01 for s in sc.spacings)
            for s in sc.schedules:
                assert len(s.values) <= 4
                assert all(sc.A0 <= v <= sc.A0 + 1 for v in s.values)
            for b in sc.positions:
                assert abs(b / 0.02 - round(b / 0.02)) < 1e-9

    def test_report_csv(self, tmp_path):
        sc = JunctionScenario.homogeneous(vee(), [0.0], [PhaseSchedule.constant(0.5)])
        rep = check_lower_bound(sc, **FAST)
        text = rep.write_csv(tmp_path / "r.csv").read_text()
        assert text.splitlines()[0] == "check,expected,computed,lower,upper,pass"
        assert text.splitlines()[1].endswith("PASS")
