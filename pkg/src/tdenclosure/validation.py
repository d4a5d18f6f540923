"""Aggregated self-checks behind ``tdenclosure validate``.

Each check produces ``{"name", "measured", "tolerance", "pass", "detail"}``.
The report has no timestamps or timings, so repeated runs give identical
files.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from . import analytic, oracle
from .core import GridSpec, Scenario, Sphere, distance_facts, pulse_laplace
from .errors import EnclosureError, ScenarioError

SCHEMA = "tdenclosure.validate/1"


def _check(name, passed, value=None, tolerance=None, detail=""):
    return {"name": name, "measured": None if value is None else float(value),
            "tolerance": None if tolerance is None else float(tolerance),
            "pass": bool(passed), "detail": detail}


def _exterior_points(source, n, rng):
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = source.radius * rng.uniform(2.0, 5.0, n)
    return source.center + r[:, None] * d


def check_oracle(sc: Scenario, n_points=5, seed=0):
    """Closed-form exterior field against direct quadrature of the dyadic kernel."""
    src = sc.source
    rng = np.random.default_rng(seed)
    worst = 0.0
    for xi in (0.5, 2.0, 8.0):
        tau = xi / (sc.medium.sqrt_mu_eps * src.radius)
        for x in _exterior_points(src, n_points, rng):
            ref = oracle.volume_potential_oracle(x, src, tau, sc.medium).value
            val = analytic.ve0_exterior(x, src, tau, sc.medium, 1.0).value
            worst = max(worst, float(np.linalg.norm(val - ref) / np.linalg.norm(ref)))
    return _check("ve0_exterior_vs_oracle", worst < 1e-6, worst, 1e-6)


def pde_residual_orders(sc: Scenario, hs=(4e-3, 2e-3, 1e-3), xi=2.0, seed=1):
    """Observed orders of the finite-difference residual of the modified Maxwell operator."""
    src = sc.source
    med = sc.medium
    tau = xi / (med.sqrt_mu_eps * src.radius)
    x = _exterior_points(src, 1, np.random.default_rng(seed))[0]
    h_scale = src.radius

    def field(y):
        return analytic.ve0_exterior(y, src, tau, med, 1.0).value

    res = []
    ref = tau**2 * np.linalg.norm(field(x))
    for h in hs:
        cc = oracle.fd_curlcurl(field, x, h * h_scale)
        res.append(np.linalg.norm(cc / (med.mu * med.epsilon) + tau**2 * field(x)) / ref)
    res = np.asarray(res)
    orders = np.log(res[:-1] / res[1:]) / np.log(np.asarray(hs[:-1]) / np.asarray(hs[1:]))
    return res, orders


def check_pde(sc: Scenario):
    res, orders = pde_residual_orders(sc)
    return _check("pde_residual_order", bool(np.all(orders >= 1.9)), float(np.min(orders)), 1.9,
                  f"residuals {np.array2string(res, precision=3)}")


def check_proxies(sc: Scenario):
    if sc.obstacle is None or not isinstance(sc.obstacle.shape, Sphere):
        return _check("proxy_self_consistency", True, detail="skipped: needs a sphere obstacle")
    taus = sc.taus()
    tau = float(taus[len(taus) // 2])
    worst = 0.0
    for src in sc.sources:
        ft = float(pulse_laplace(src.pulse, tau, sc.time.T, sc.dt))
        worst = max(worst, analytic.proxy_self_consistency("je_plus", tau, sc.obstacle, src,
                                                           sc.medium, ft))
    return _check("proxy_self_consistency", worst < 1e-8, worst, 1e-8)


def _coarse(sc: Scenario, max_cells=40) -> Scenario:
    from .solver.grid import minimal_box

    lo, hi = minimal_box(sc)
    dx = max(sc.grid.dx, float(np.max(hi - lo)) / max_cells)
    # keep the source ball resolved by at least ~2 cells across its radius
    dx = min(dx, sc.source.radius / 2.0)
    return dataclasses.replace(sc, grid=GridSpec(dx), time=dataclasses.replace(sc.time, dt=None))


def check_solver(sc: Scenario, max_cells=40):
    """Energy laws and causality on a coarse copy of the scenario."""
    from .enclosure import quiet_time
    from .solver import build_grid, run

    out = []
    cs = _coarse(sc, max_cells)
    g = build_grid(cs, with_obstacle=True)
    r = run(cs, True, 0, grid=g)
    e = r.energy_series
    finite = bool(np.all(np.isfinite(e)) and np.all(np.isfinite(r.values)))
    out.append(_check("solver_finite", finite and e[0] == 0.0, detail=f"grid {g.dims}"))
    pulse = cs.source.pulse
    if pulse.kind == "ramp_exp":
        t_off = pulse.t_c * 40.0  # f < 1e-15 |amplitude| afterwards
    else:
        t_off = pulse.support_end
    after = r.times >= t_off
    if np.count_nonzero(after) >= 3 and sc.obstacle is not None:
        ea = e[after]
        rel = float(np.max(np.diff(ea) / np.max(np.abs(ea))))
        out.append(_check("energy_monotone_after_source_off", rel <= 1e-10, rel, 1e-10))
    else:
        out.append(_check("energy_monotone_after_source_off", True,
                          detail="skipped: pulse does not switch off before T"))
    if sc.obstacle is not None:
        g0 = build_grid(cs, with_obstacle=False)
        r0 = run(cs, False, 0, grid=g0)
        tq = quiet_time(cs)
        diff = np.abs(r.values - r0.values).max(axis=1)
        peak = float(diff.max())
        pre = float(diff[r.times < tq].max()) if np.any(r.times < tq) else 0.0
        ratio = pre / peak if peak > 0 else 0.0
        out.append(_check("causality_pre_arrival_ratio", ratio < 0.05, ratio, 0.05,
                          f"quiet window t < {tq:.4g}"))
        ea = r0.energy_series[r0.times >= t_off]
        if ea.size >= 3:
            drift = float((ea.max() - ea.min()) / np.max(np.abs(ea)))
            out.append(_check("free_space_energy_drift", drift < 1e-8, drift, 1e-8))
    return out


def run_validation(path: Path, quick: bool = True) -> dict:
    path = Path(path)
    report = {"schema": SCHEMA, "scenario": path.name, "scenario_hash": None, "checks": []}
    checks = report["checks"]
    try:
        sc = Scenario.load(path)
    except (ScenarioError, OSError, json.JSONDecodeError, KeyError) as exc:
        checks.append(_check("scenario_valid", False, detail=str(exc)))
        return report
    report["scenario_hash"] = sc.physics_hash()
    checks.append(_check("scenario_valid", True))
    checks.append(_check("cfl", sc.dt <= sc.cfl_limit * (1 + 1e-12), sc.dt / sc.cfl_limit, 1.0))
    if sc.obstacle is not None:
        f = distance_facts(sc)
        checks.append(_check("source_obstacle_separation", f.dist_DB > 0, f.dist_DB, 0.0))
    for fn in (check_oracle, check_pde, check_proxies):
        try:
            checks.append(fn(sc))
        except EnclosureError as exc:
            checks.append(_check(fn.__name__, False, detail=str(exc)))
    try:
        checks.extend(check_solver(sc, max_cells=40 if quick else 80))
    except EnclosureError as exc:
        checks.append(_check("solver", False, detail=str(exc)))
    for c in checks:
        if c["measured"] is not None and not math.isfinite(c["measured"]):
            c["measured"] = None
    return report
