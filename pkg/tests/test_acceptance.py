"""Acceptance criteria, one test (and one summary line) each.

The FDTD-based criteria (4-7, 9) share one set of runs on
``scenarios/sphere_above.json`` / ``sphere_below.json`` (sphere of radius
0.3 at distance 0.6 from B, dx = 0.02, 160 x 120 x 120 cells).  Simulating
them takes about three minutes with the compiled kernels.

Run with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines are
printed in the terminal summary.
"""

import dataclasses
import time

import numpy as np
import pytest

from tdenclosure import analytic, enclosure as enc, validation
from tdenclosure.core import GridSpec, MediumParams, Scenario, distance_facts, pulse_laplace
from tdenclosure.errors import InsufficientDataError
from tdenclosure.solver import build_grid, run

from conftest import ACCEPTANCE_LINES, SCENARIOS, make_scenario

DIST = 0.6
REL_BAND = 0.15


def report(n, name, passed, measured, tolerance):
    line = f"[ACCEPTANCE {n:2d}] {'PASS' if passed else 'FAIL'}  {name}: {measured} ({tolerance})"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return passed


@pytest.fixture(scope="module")
def above():
    sc = Scenario.load(SCENARIOS / "sphere_above.json")
    assert distance_facts(sc).dist_DB == pytest.approx(DIST)
    return sc, enc.simulate_runs(sc, need_free=True)


@pytest.fixture(scope="module")
def below(above):
    sc = Scenario.load(SCENARIOS / "sphere_below.json")
    runs = enc.simulate_runs(sc, need_free=False)
    # the free-space records do not depend on the impedance
    return sc, enc.RunSet(runs.obstacle, above[1].free)


@pytest.fixture(scope="module")
def above_coarse():
    sc = Scenario.load(SCENARIOS / "sphere_above.json")
    sc = dataclasses.replace(sc, grid=GridSpec(2 * sc.grid.dx))
    return sc, enc.simulate_runs(sc, need_free=True)


def _two_T(sc):
    d = distance_facts(sc).dist_DB
    return 0.9 * 2 * sc.medium.sqrt_mu_eps * d, 1.5 * 2 * sc.medium.sqrt_mu_eps * d


# ---------------------------------------------------------------------------


def test_01_closed_form_matches_oracle():
    sc = Scenario.load(SCENARIOS / "sphere_above.json")
    t0 = time.perf_counter()
    c = validation.check_oracle(sc, n_points=20, seed=2024)  # 20 points per xi in {0.5, 2, 8}
    elapsed = time.perf_counter() - t0
    ok = c["pass"] and elapsed < 30.0
    assert report(1, "closed-form V_e^0 vs quadrature oracle",
                  ok, f"max rel err {c['measured']:.2e}, {elapsed:.1f} s", "< 1e-6, < 30 s")


def test_02_pde_residual_order():
    sc = Scenario.load(SCENARIOS / "sphere_above.json")
    t0 = time.perf_counter()
    orders = []
    for seed in (1, 2, 3):
        res, o = validation.pde_residual_orders(sc, seed=seed)
        orders.extend(o)
    elapsed = time.perf_counter() - t0
    worst = float(np.min(orders))
    assert report(2, "modified Maxwell residual under h halving",
                  worst >= 1.9 and elapsed < 10.0,
                  f"min observed order {worst:.3f} over 3 points, {elapsed:.1f} s", ">= 1.9, < 10 s")


def test_03_energy_laws():
    # 96^3 cells, PEC box closer than the clearance rule (energy is what matters here)
    dx = 0.025
    box = ((-0.8, -1.2, -1.2), (-0.8 + 96 * dx, 1.2, 1.2))
    sc = make_scenario(lam=1.0, dx=dx, T=6.5, box=box)
    t0 = time.perf_counter()
    g = build_grid(sc, with_obstacle=True, enforce_clearance=False)
    g0 = build_grid(sc, with_obstacle=False, enforce_clearance=False)
    r = run(sc, True, 0, grid=g)
    r0 = run(sc, False, 0, grid=g0)
    elapsed = time.perf_counter() - t0
    off = r.times >= 40 * sc.source.pulse.t_c  # ramp_exp below 1e-15 of its peak
    e, e0 = r.energy_series[off], r0.energy_series[off]
    drift = float((e0.max() - e0.min()) / e0.max())
    rise = float(np.max(np.diff(e)) / e.max())
    ok = (tuple(g.dims) == (96, 96, 96) and sc.n_steps >= 900 and drift < 1e-8 and rise <= 1e-10
          and e[-1] < e[0] and elapsed < 300)
    assert report(3, "energy laws",
                  ok, f"grid {tuple(g.dims)}, {sc.n_steps} steps, free drift {drift:.1e}, "
                      f"max per-step rise {rise:.1e}, {elapsed:.0f} s",
                  "drift < 1e-8, rise <= 1e-10, < 5 min")


def test_04_causality(above, above_coarse):
    """Before 2 sqrt(mu eps) dist nothing is resolvable; after, the scaled indicator grows.

    The floor here is the discretization error |I_dx - I_2dx| from an
    independent coarse run.  The pipeline's own exact-variant floor is
    measured over the causality window, which for T below
    2 sqrt(mu eps) dist covers the whole record and would make the first
    half hold by construction.
    """
    sc, runs = above
    scc, runs_c = above_coarse
    T_early, T_late = _two_T(sc)
    ratio, early_verdict, grows, rates = None, None, [], []
    for T in (T_early, T_late):
        fine = enc.sum_indicator(sc, runs, enc.EXACT, T=T)
        coarse = enc.sum_indicator(scc, runs_c, enc.EXACT, taus=fine.taus, T=T)
        win = fine.upper_window()
        if T == T_early:
            c = enc.refinement_floor(fine, coarse)
            ratio = float(c.snr[win].max())
            early_verdict = enc.limit_verdict(c)[0]
        else:
            for cv in (fine, coarse):
                s = np.abs(cv.scaled[win])
                grows.append(bool(np.all(np.diff(s) > 0)))
                rates.append(float(np.polyfit(cv.taus[win], np.log(s), 1)[0]))
    ok = early_verdict == enc.ZERO and all(grows)
    assert report(4, "finite propagation speed",
                  ok, f"T={T_early:.3f}: max |I|/floor {ratio:.2e} ({early_verdict}); "
                      f"T={T_late:.3f}: monotone growth fine/coarse {grows[0]}/{grows[1]}, "
                      f"rate {rates[0]:.3f}/{rates[1]:.3f} (ideal {T_late - 2 * DIST:.3f})",
                  f"<= {enc.FLOOR_FACTOR:g}x floor across the upper window; grows")


def test_05_impedance_dichotomy(above, below):
    verdicts = []
    for sc, runs in (above, below):
        T = _two_T(sc)[1]
        verdicts.append(enc.classify_impedance(enc.sum_indicator(sc, runs, enc.EXACT, T=T)).label)
    ok = verdicts == [enc.ABOVE, enc.BELOW]
    assert report(5, "impedance dichotomy", ok,
                  f"lambda=2 -> {verdicts[0]}, lambda=0.5 -> {verdicts[1]}", "above / below")


def test_06_distance_recovery(above):
    sc, runs = above
    curve = enc.sum_indicator(sc, runs, enc.EXACT, T=_two_T(sc)[1])
    est = enc.estimate_distance(curve)
    upper = curve.taus[curve.upper_window()]
    scan = enc.distance_scan(curve, enc.sliding_windows(upper, 6, 3))
    bias = np.abs([e.dist - DIST for e in scan])
    rel = abs(est.dist - DIST) / DIST
    ok = rel < REL_BAND and len(scan) >= 3 and bool(np.all(np.diff(bias) < 0))
    assert report(6, "distance from the decay rate", ok,
                  f"dist {est.dist:.4f} (rel err {rel:.3f}) on tau {est.fit_window}; "
                  f"shifted windows {[round(e.dist, 4) for e in scan]}",
                  f"within {REL_BAND:.0%} of {DIST}; |bias| shrinking over >= 2 shifts")


def test_07_t_sweep(above, above_coarse):
    """T* with the refinement floor, which does not know dist(D,B).

    The default exact-variant floor places its causality window with the
    known distance, so its T* is reported for reference only.
    """
    sc, runs = above
    assert len(sc.t_grid_for_sweep) == 12
    res = enc.t_sweep(sc, runs, sc.t_grid_for_sweep, enc.EXACT, coarse=above_coarse)
    known = enc.t_sweep(sc, runs, sc.t_grid_for_sweep, enc.EXACT)
    rel = None if res.dist is None else abs(res.dist - DIST) / DIST
    ok = rel is not None and rel < REL_BAND
    assert report(7, "T-sweep", ok,
                  f"T* {res.T_star}, T*/2 = {res.dist:.4f}, rel err {rel:.3f}; "
                  f"verdicts {'/'.join(v[0] for v in res.verdicts)}; "
                  f"(causality-window floor: T*/2 = {known.dist:.4f})",
                  f"within {REL_BAND:.0%} of {DIST}")


def test_08_proxy_signs():
    t0 = time.perf_counter()
    worst_sc = 0.0
    lines, ok = [], True
    for name, kind, fn, want in (("sphere_above.json", "je", analytic.je_proxy, 1.0),
                                 ("sphere_below.json", "je_plus", analytic.je_plus_proxy, -1.0)):
        sc = Scenario.load(SCENARIOS / name)
        grid = dataclasses.replace(sc, tau_grid=None).taus()  # default grid
        upper = grid[grid.size // 2:]
        vals = []
        for tau in upper:
            total = 0.0
            for src in sc.sources:
                ft = float(pulse_laplace(src.pulse, tau, sc.time.T, sc.dt))
                total += fn(tau, sc.obstacle, src, sc.medium, ft)
                worst_sc = max(worst_sc, analytic.proxy_self_consistency(
                    kind, tau, sc.obstacle, src, sc.medium, ft))
            vals.append(total)
        good = bool(np.all(np.sign(vals) == want))
        ok &= good
        lines.append(f"{kind} sign {'+' if want > 0 else '-'} on tau {upper[0]:.2f}..{upper[-1]:.2f}: "
                     f"{good}")
    elapsed = time.perf_counter() - t0
    ok = ok and worst_sc < 1e-8 and elapsed < 60
    assert report(8, "surface proxy signs", ok,
                  "; ".join(lines) + f"; self-consistency {worst_sc:.1e}, {elapsed:.1f} s",
                  "all signs, < 1e-8, < 1 min")


def test_09_variant_equivalence(above):
    sc, runs = above
    T = _two_T(sc)[1]
    ex = enc.sum_indicator(sc, runs, enc.EXACT, T=T)
    ti = enc.sum_indicator(sc, runs, enc.TILDE, T=T)
    # the tilde floor is the measured free-space Laplace-consistency error
    bound_ratio = float(np.max(np.abs(ex.sum - ti.sum) / ti.noise_floor))
    bounded = bound_ratio <= 1.0 + 1e-9
    v_ex, v_ti = enc.classify_impedance(ex).label, enc.classify_impedance(ti).label
    d_ex = enc.estimate_distance(ex)
    try:
        d_ti = enc.estimate_distance(ti).dist
    except InsufficientDataError as exc:
        d_ti = f"none ({exc})"
    spread = [e.dist for e in enc.distance_scan(ex, enc.sliding_windows(
        ex.taus[ex.upper_window()], 6, 3))]
    bar = max(abs(max(spread) - d_ex.dist), abs(min(spread) - d_ex.dist))
    same_d = isinstance(d_ti, float) and abs(d_ti - d_ex.dist) <= bar
    ok = bounded and v_ex == v_ti and same_d
    assert report(9, "exact vs tilde variant", ok,
                  f"max |exact - tilde| / consistency error {bound_ratio:.6f}; verdicts "
                  f"{v_ex}/{v_ti}; dist {d_ex.dist:.4f} +- {bar:.4f} / {d_ti}; "
                  f"usable tilde points {int(ti.usable.sum())}",
                  "bounded; same verdict and distance")


def test_10_estimator():
    med = MediumParams()

    def synthetic(vals, taus):
        return enc.IndicatorCurve(taus, (vals / 2, vals / 2), vals, 1.0, enc.EXACT, 1e-300, med)

    taus = np.linspace(5, 40, 20)
    exact_err = max(abs(enc.estimate_distance(synthetic(np.exp(-2 * taus * d), taus)).dist - d)
                    for d in (0.3, 0.6, 0.9))
    rho, d = 9.0, 0.6
    taus = np.linspace(10, 400, 80)
    wins = enc.sliding_windows(taus, 10, 5)
    ests = enc.distance_scan(synthetic(taus ** -rho * np.exp(-2 * taus * d), taus), wins)
    bias = np.array([e.dist - d for e in ests])
    # fitting -rho log(tau) by a line over [lo, hi] adds its secant slope to the fit
    secant = np.array([rho / 2 * np.log(b / a) / (b - a) for a, b in wins])
    tau_mid = np.array([(a + b) / 2 for a, b in wins])
    dev = float(np.max(np.abs(bias / secant - 1)))
    ok = (exact_err < 1e-12 and bool(np.all(np.diff(bias) < 0)) and dev < 0.1
          and bool(np.all(bias * tau_mid / rho < 1.0)))
    assert report(10, "estimator", ok,
                  f"pure exponential err {exact_err:.1e}; rho=9 bias {np.round(bias, 4).tolist()} "
                  f"vs secant rho ln(hi/lo)/(2(hi-lo)) within {dev:.1%}",
                  "< 1e-12; bias O(rho/tau) and shrinking")
