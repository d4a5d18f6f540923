import csv
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdenclosure import enclosure as enc
from tdenclosure.core import MediumParams, TimeSeriesMoment, distance_facts
from tdenclosure.errors import DomainError, InsufficientDataError, RecordMismatchError
from tdenclosure.solver import RunRecord, run

from conftest import make_scenario

MED = MediumParams()


def synthetic(values, taus, T=1.0, floor=1e-300, medium=MED):
    values = np.asarray(values, dtype=float)
    return enc.IndicatorCurve(taus, (values / 2, values / 2), values, T, enc.EXACT, floor, medium)


def scaled_records(runs, factor):
    def sc(r):
        return RunRecord(TimeSeriesMoment(r.times, factor * r.values, r.label), r.energy_series,
                         r.label, r.scenario_hash, r.source_index, dict(r.meta))
    return enc.RunSet(tuple(sc(r) for r in runs.obstacle),
                      None if runs.free is None else tuple(sc(r) for r in runs.free))


class TestEstimator:
    def test_pure_exponential_exact(self):
        taus = np.linspace(5, 40, 20)
        est = enc.estimate_distance(synthetic(np.exp(-2 * taus * 0.9), taus))
        assert est.dist == pytest.approx(0.9, abs=1e-13)
        assert est.residual < 1e-12 and est.n_points == 20

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 3.0), st.floats(0.25, 4.0), st.floats(-30, 30))
    def test_exact_for_any_medium_and_prefactor(self, d, mu_eps, logc):
        med = MediumParams(mu_eps, 1.0)
        taus = np.linspace(2, 12, 12)
        vals = -np.exp(logc - 2 * taus * med.sqrt_mu_eps * d)
        est = enc.estimate_distance(synthetic(vals, taus, medium=med))
        assert est.dist == pytest.approx(d, rel=1e-9)

    def test_power_law_bias_shrinks_like_rho_over_tau(self):
        rho, d = 9.0, 0.6
        taus = np.linspace(10, 400, 80)
        curve = synthetic(taus ** -rho * np.exp(-2 * taus * d), taus)
        wins = enc.sliding_windows(taus, 10, 5)
        ests = enc.distance_scan(curve, wins)
        bias = np.array([e.dist - d for e in ests])
        assert np.all(bias > 0) and np.all(np.diff(bias) < 0)
        # fitting -rho log(tau) by a line adds about its secant slope,
        # rho ln(hi/lo)/(hi - lo) ~ rho/tau, to the slope: dist bias ~ rho/(2 tau)
        secant = np.array([rho / 2 * np.log(b / a) / (b - a) for a, b in wins])
        np.testing.assert_allclose(bias / secant, 1.0, rtol=0.1)

    def test_too_few_points(self):
        taus = np.linspace(1, 5, 5)
        with pytest.raises(InsufficientDataError):
            enc.estimate_distance(synthetic(np.exp(-taus), taus))

    def test_growing_curve_rejected(self):
        taus = np.linspace(1, 10, 10)
        with pytest.raises(InsufficientDataError, match="not decreasing"):
            enc.estimate_distance(synthetic(np.exp(taus), taus))

    def test_floor_limits_fit_window(self):
        taus = np.linspace(1, 20, 20)
        vals = np.exp(-2 * 0.5 * taus)
        c = synthetic(vals, taus, floor=np.exp(-2 * 0.5 * 12.5) / 3)
        est = enc.estimate_distance(c)
        assert est.fit_window == (1.0, 12.0)
        assert est.dist == pytest.approx(0.5, abs=1e-12)

    def test_csv(self, tmp_path):
        taus = np.linspace(5, 40, 20)
        c = synthetic(np.exp(-2 * taus * 0.9), taus)
        p = enc.write_distance_csv(tmp_path / "d.csv",
                                   enc.distance_scan(c, enc.sliding_windows(taus, 8, 3)))
        rows = list(csv.reader(open(p)))
        assert rows[0] == ["tau_lo", "tau_hi", "slope", "dist", "residual"] and len(rows) == 4


class TestClassifier:
    taus = np.linspace(1, 10, 10)

    def test_above(self):
        c = synthetic(np.exp(-self.taus) * np.exp(0.1 * self.taus), self.taus)
        assert enc.classify_impedance(c).label == enc.ABOVE

    def test_below(self):
        c = synthetic(-np.exp(-0.5 * self.taus), self.taus)
        assert enc.classify_impedance(c).label == enc.BELOW

    def test_sign_change(self):
        v = np.exp(-0.5 * self.taus)
        v[7] *= -1
        assert enc.classify_impedance(synthetic(v, self.taus)).label == enc.INDETERMINATE

    def test_positive_but_decaying(self):
        c = synthetic(np.exp(-2 * self.taus), self.taus)
        assert enc.classify_impedance(c).label == enc.INDETERMINATE

    def test_too_few_usable(self):
        c = synthetic(np.exp(-0.5 * self.taus), self.taus, floor=1.0)
        v = enc.classify_impedance(c)
        assert v.label == enc.INDETERMINATE and "too few" in v.evidence["reason"]

    @given(st.floats(1e-6, 1e6))
    def test_sign_stable_under_rescaling(self, k):
        v = np.exp(-0.5 * self.taus)
        assert enc.classify_impedance(synthetic(k * v, self.taus)).label == \
            enc.classify_impedance(synthetic(v, self.taus)).label


class TestCurve:
    def test_invariants(self):
        taus = np.linspace(1, 5, 5)
        c = synthetic(np.ones(5), taus, floor=[0.5, 2, 0.5, 0.5, 0.5])
        np.testing.assert_array_equal(c.per_source[0] + c.per_source[1], c.sum)
        assert list(c.flagged) == [False, True, False, False, False]
        assert list(c.usable) == [False] * 5  # snr 2 < 3
        assert list(c.upper_window()) == [False, False, True, True, True]
        with pytest.raises(ValueError):
            synthetic(np.ones(3), np.array([1.0, 1.0, 2.0]))

    def test_csv_columns(self, tmp_path):
        taus = np.linspace(1, 5, 5)
        p = synthetic(np.exp(-taus), taus).to_csv(tmp_path / "i.csv")
        rows = list(csv.reader(open(p)))
        assert rows[0] == ["tau", "I1", "I2", "sum", "log_abs_sum", "scaled_sum"]
        assert float(rows[1][5]) == pytest.approx(np.exp(1.0) * np.exp(-1.0))


class TestIndicator:
    def test_identical_reference_gives_zero(self, quick_scenario, quick_runs):
        r = quick_runs.free[0]
        r2 = dataclasses.replace(r, label=enc.WITH_OBSTACLE)
        val = enc.indicator(r2, r, quick_scenario.sources[0], np.array([5.0, 10.0]), 1.8, MED)
        assert np.all(val == 0.0)

    def test_amplitude_quadruples(self):
        from tdenclosure.core import Pulse

        sc = make_scenario(T=0.9)
        sc2 = sc.with_pulse(Pulse(t_c=0.03, amplitude=2.0))
        taus = np.array([4.0, 8.0])
        vals = []
        for s in (sc, sc2):
            a, b = run(s, True, 0), run(s, False, 0)
            vals.append(enc.indicator(a, b, s.sources[0], taus, 0.9, s.medium))
        np.testing.assert_allclose(vals[1], 4 * vals[0], rtol=1e-10)

    def test_zero_sources_give_zero_curve(self):
        from tdenclosure.core import Pulse

        sc = make_scenario(T=0.5).with_pulse(Pulse(t_c=0.03, amplitude=0.0))
        runs = enc.simulate_runs(sc)
        c = enc.sum_indicator(sc, runs, enc.EXACT, taus=[2.0, 4.0])
        assert np.all(c.sum == 0)

    def test_T_beyond_record(self, quick_scenario, quick_runs):
        with pytest.raises(DomainError):
            enc.indicator(quick_runs.obstacle[0], quick_runs.free[0], quick_scenario.sources[0],
                          5.0, 2.5, MED)

    def test_wrong_label(self, quick_scenario, quick_runs):
        with pytest.raises(RecordMismatchError):
            enc.indicator(quick_runs.free[0], quick_runs.free[0], quick_scenario.sources[0],
                          5.0, 1.0, MED)

    def test_runset_validation(self, quick_runs):
        with pytest.raises(RecordMismatchError):
            enc.RunSet(quick_runs.obstacle[::-1], quick_runs.free)
        with pytest.raises(RecordMismatchError):
            enc.RunSet(quick_runs.free, quick_runs.free)

    def test_prefix_property(self):
        long = make_scenario(T=1.0)
        short = long.with_time(0.7)
        from tdenclosure.solver import build_grid

        g, g0 = build_grid(long), build_grid(long, with_obstacle=False)
        taus = np.array([3.0, 6.0, 9.0])
        a = enc.indicator(run(long, True, 0, grid=g), run(long, False, 0, grid=g0),
                          long.sources[0], taus, 0.7, MED)
        b = enc.indicator(run(short, True, 0, grid=g), run(short, False, 0, grid=g0),
                          short.sources[0], taus, 0.7, MED)
        assert np.array_equal(a, b)


class TestPipeline:
    def test_above_and_below(self, quick_scenario, quick_runs, quick_runs_below):
        c = enc.sum_indicator(quick_scenario, quick_runs, enc.EXACT)
        win = c.upper_window()
        assert np.all(c.sum[win] > 0)
        assert enc.classify_impedance(c).label == enc.ABOVE
        sc_b, runs_b = quick_runs_below
        cb = enc.sum_indicator(sc_b, enc.RunSet(runs_b.obstacle, quick_runs.free), enc.EXACT)
        assert np.all(cb.sum[cb.upper_window()] < 0)
        assert enc.classify_impedance(cb).label == enc.BELOW

    def test_verdict_invariant_under_amplitude(self, quick_scenario, quick_runs):
        from tdenclosure.core import Pulse

        sc3 = quick_scenario.with_pulse(Pulse(t_c=0.03, amplitude=3.0))
        c1 = enc.sum_indicator(quick_scenario, quick_runs, enc.EXACT)
        c3 = enc.sum_indicator(sc3, scaled_records(quick_runs, 3.0), enc.EXACT)
        # s - s0 cancels ~6 digits, so rounding shows up near 1e-10
        np.testing.assert_allclose(c3.sum, 9 * c1.sum, rtol=1e-8)
        assert enc.classify_impedance(c3).label == enc.classify_impedance(c1).label

    def test_exact_tilde_within_consistency(self, quick_scenario, quick_runs):
        ce = enc.sum_indicator(quick_scenario, quick_runs, enc.EXACT)
        ct = enc.sum_indicator(quick_scenario, quick_runs, enc.TILDE)
        # the tilde floor is the measured free-space Laplace-consistency error
        assert np.all(np.abs(ce.sum - ct.sum) <= ct.noise_floor * (1 + 1e-9))

    def test_tilde_without_free_runs(self, quick_scenario, quick_runs):
        c = enc.sum_indicator(quick_scenario, enc.RunSet(quick_runs.obstacle), enc.TILDE)
        assert np.all(np.isfinite(c.sum)) and np.all(c.noise_floor > 0)
        with pytest.raises(InsufficientDataError):
            enc.sum_indicator(quick_scenario, enc.RunSet(quick_runs.obstacle), enc.EXACT)

    def test_distance_on_quick_grid(self, quick_scenario, quick_runs):
        facts = distance_facts(quick_scenario)
        est = enc.estimate_distance(enc.sum_indicator(quick_scenario, quick_runs, enc.EXACT),
                                    facts=facts)
        assert est.relative_error < 0.15

    def test_t_sweep_structure(self, quick_scenario, quick_runs):
        grid = quick_scenario.t_grid_for_sweep
        res = enc.t_sweep(quick_scenario, quick_runs, grid, enc.EXACT, keep_curves=True)
        assert len(res.verdicts) == len(grid) and len(res.curves) == len(grid)
        assert res.verdicts[0] == enc.ZERO and res.verdicts[-1] == enc.ABOVE
        assert res.T_star is not None
        assert res.dist == pytest.approx(res.T_star / 2)
        first_nonzero = res.verdicts.index(next(v for v in res.verdicts if v != enc.ZERO))
        assert all(v == enc.ZERO for v in res.verdicts[:first_nonzero])

    def test_zero_needs_every_window_point_unresolved(self):
        taus = np.linspace(1, 10, 10)
        vals = np.exp(-2 * taus)
        floor = np.full(taus.size, 1e-30)
        floor[-1] = 10 * vals[-1]  # only the top point sinks into the floor
        v, _ = enc.limit_verdict(synthetic(vals, taus, floor=floor))
        assert v != enc.ZERO
        v, _ = enc.limit_verdict(synthetic(vals, taus, floor=vals))
        assert v == enc.ZERO

    def test_refinement_floor(self, quick_scenario, quick_runs):
        c = enc.sum_indicator(quick_scenario, quick_runs, enc.EXACT)
        other = dataclasses.replace(c, sum=1.5 * c.sum)
        r = enc.refinement_floor(c, other)
        np.testing.assert_allclose(r.noise_floor, 0.5 * np.abs(c.sum), rtol=1e-15)
        assert r.sum is c.sum and r.meta["floor"] == "refinement"
        with pytest.raises(DomainError):
            enc.refinement_floor(c, dataclasses.replace(other, T=c.T / 2))

    def test_t_sweep_refinement_floor_ignores_assumed_distance(self, quick_scenario, quick_runs):
        # the default floor follows the distance it is told; the refinement floor does not
        sc2 = dataclasses.replace(quick_scenario, grid=dataclasses.replace(
            quick_scenario.grid, dx=2 * quick_scenario.grid.dx), time=dataclasses.replace(
            quick_scenario.time, dt=None))
        coarse = (sc2, enc.simulate_runs(sc2))
        grid = quick_scenario.t_grid_for_sweep
        facts = distance_facts(quick_scenario)
        wrong = dataclasses.replace(facts, dist_DB=1.5 * facts.dist_DB)
        a = enc.t_sweep(quick_scenario, quick_runs, grid, coarse=coarse)
        b = enc.t_sweep(quick_scenario, quick_runs, grid, coarse=coarse, facts=wrong)
        assert a.verdicts == b.verdicts and a.T_star == b.T_star
        c = enc.t_sweep(quick_scenario, quick_runs, grid, facts=wrong)
        assert c.T_star > enc.t_sweep(quick_scenario, quick_runs, grid).T_star

    def test_t_sweep_rejects_long_grid(self, quick_scenario, quick_runs):
        with pytest.raises(DomainError):
            enc.t_sweep(quick_scenario, quick_runs, [0.5, 3.0])
