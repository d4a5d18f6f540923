"""Indicator functions, distance estimation, impedance classification, T-sweep.

Conventions
-----------
For one source ``f = f(t) chi_B a`` the indicator is

    I(tau, T) = -(tau/eps) f~_T(tau) a . [S(tau, T) - S_ref(tau, T)],

with ``S = int_0^T exp(-tau t) s(t) dt`` and ``s = int_B E``.  The
reference is the free-space record ("exact" variant) or the closed-form
ball integral of V_e^0 ("tilde" variant).

In the exact variant the Laplace transform is taken of ``s - s_0``
directly.  Subtracting two transforms instead cancels catastrophically
at large tau, because the direct field dominates both.

"Limit as tau -> infinity" is read on a finite grid as a trend over the
upper half of the tau grid.  Points at or below the noise floor are not
used.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analytic
from .core import (DistanceFacts, MediumParams, Scenario, SourceSpec, distance_facts,
                   laplace_series, pulse_laplace)
from .errors import DomainError, InsufficientDataError, RecordMismatchError
from .solver.fdtd import FREE_SPACE, WITH_OBSTACLE, RunRecord, check_pair

EXACT = "exact"
TILDE = "tilde"
VARIANTS = (EXACT, TILDE)

ABOVE = "above"
BELOW = "below"
INDETERMINATE = "indeterminate"
ZERO = "zero"  # t-sweep only: scaled indicator decays to the noise floor

FLOOR_FACTOR = 3.0


# ---------------------------------------------------------------------------
# references


@dataclass(frozen=True)
class Ve0BallIntegral:
    """Closed-form reference ``int_B V_e^0 dx`` for the tilde variant.

    ``f~`` is evaluated by the same truncated trapezoid rule as the data
    (time step ``dt``), so both sides see identical pulse quadrature.
    """

    source: SourceSpec
    medium: MediumParams
    dt: float

    def laplace(self, tau, T) -> np.ndarray:
        ft = pulse_laplace(self.source.pulse, tau, T, self.dt)
        return analytic.ve0_ball_integral(self.source, tau, self.medium, ft)


def _as_taus(tau) -> np.ndarray:
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise DomainError("tau must be positive and finite")
    return t


def _check_T(record: RunRecord, T: float):
    """T may exceed the last sample by less than one step (quadrature truncates)."""
    if math.floor(T / record.s_series.dt + 1e-9) > record.times.size - 1:
        raise DomainError(f"T={T:g} exceeds recorded duration {record.times[-1]:g}")


def indicator(record: RunRecord, reference, source: SourceSpec, tau, T: float,
              medium: MediumParams):
    """Single-source indicator I(tau, T); scalar in, scalar out (else array)."""
    scalar = np.ndim(tau) == 0
    taus = _as_taus(tau)
    _check_T(record, T)
    if record.label != WITH_OBSTACLE:
        raise RecordMismatchError("indicator needs a with-obstacle record")
    dt = record.s_series.dt
    ft = pulse_laplace(source.pulse, taus, T, dt)
    if isinstance(reference, RunRecord):
        check_pair(record, reference)
        _check_T(reference, T)
        n = min(record.times.size, reference.times.size)
        diff = record.values[:n] - reference.values[:n]
        dS = laplace_series(record.times[:n], diff, taus, T)
    elif isinstance(reference, Ve0BallIntegral):
        S = laplace_series(record.times, record.values, taus, T)
        dS = S - reference.laplace(taus, T)
    else:
        raise TypeError("reference must be a RunRecord or a Ve0BallIntegral")
    out = -(taus / medium.epsilon) * ft * (dS @ source.direction)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# curves


@dataclass(eq=False)
class IndicatorCurve:
    """Two-source indicator sum over a tau grid.

    ``noise_floor`` is per tau, in the same units as ``sum``.
    """

    taus: np.ndarray
    per_source: tuple
    sum: np.ndarray
    T: float
    variant: str
    noise_floor: np.ndarray
    medium: MediumParams = field(default_factory=MediumParams)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        self.per_source = tuple(np.asarray(p, dtype=float) for p in self.per_source)
        self.sum = np.asarray(self.sum, dtype=float)
        nf = np.asarray(self.noise_floor, dtype=float)
        self.noise_floor = np.broadcast_to(nf, self.taus.shape).copy()
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def scaled(self) -> np.ndarray:
        """e^{tau T} sum (may overflow to inf for huge tau T)."""
        with np.errstate(over="ignore"):
            return np.exp(self.taus * self.T) * self.sum

    @property
    def scaled_floor(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.taus * self.T) * self.noise_floor

    @property
    def log_abs_sum(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.sum))

    @property
    def snr(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            r = np.abs(self.sum) / self.noise_floor
        return np.where(self.noise_floor > 0, r, np.where(self.sum != 0, np.inf, 0.0))

    @property
    def flagged(self) -> np.ndarray:
        """True where |sum| does not exceed the noise floor."""
        return ~(np.abs(self.sum) > self.noise_floor) | ~np.isfinite(self.sum)

    @property
    def usable(self) -> np.ndarray:
        """Points clearly above the floor (|sum| > FLOOR_FACTOR * floor).

        These are the points trend tests and fits may use.
        """
        return (self.snr > FLOOR_FACTOR) & np.isfinite(self.sum)

    def upper_window(self) -> np.ndarray:
        """Boolean mask of the upper half of the tau grid."""
        n = self.taus.size
        m = np.zeros(n, dtype=bool)
        m[n // 2:] = True
        return m

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "I1", "I2", "sum", "log_abs_sum", "scaled_sum"])
            for row in zip(self.taus, *self.per_source, self.sum, self.log_abs_sum, self.scaled):
                w.writerow([repr(float(v)) for v in row])
        return path


@dataclass(frozen=True)
class RunSet:
    """Records for the two source directions.

    ``free`` holds the matching free-space records.  It is required for
    the exact variant; for the tilde variant it only sharpens the noise
    floor.
    """

    obstacle: tuple
    free: Optional[tuple] = None

    def __post_init__(self):
        if len(self.obstacle) != 2:
            raise ValueError("need two with-obstacle records")
        if self.free is not None and len(self.free) != 2:
            raise ValueError("need two free-space records")
        for j, r in enumerate(self.obstacle):
            if r.label != WITH_OBSTACLE or r.source_index != j:
                raise RecordMismatchError(f"obstacle record {j} has wrong label or source index")
        if self.free is not None:
            for j, r in enumerate(self.free):
                if r.label != FREE_SPACE or r.source_index != j:
                    raise RecordMismatchError(f"free record {j} has wrong label or source index")

    @property
    def duration(self) -> float:
        recs = list(self.obstacle) + list(self.free or ())
        return min(float(r.times[-1]) for r in recs)


def quiet_time(scenario: Scenario, facts: Optional[DistanceFacts] = None) -> float:
    """End of the causality window ``2 sqrt(mu eps) dist - 4 dx sqrt(mu eps)``."""
    facts = facts or distance_facts(scenario)
    sme = scenario.medium.sqrt_mu_eps
    return sme * (2.0 * facts.dist_DB - 4.0 * scenario.grid.dx)


def _noise_term(times, tau, T, std, n_records):
    """Standard deviation of the Laplace quadrature of white noise of level ``std``."""
    if std <= 0:
        return np.zeros_like(tau)
    dt = times[1] - times[0]
    n = int(math.floor(T / dt + 1e-9))
    t = times[1: n + 1]  # s(0) = 0 exactly
    w = np.full(t.size, dt)
    w[-1] = 0.5 * dt
    var = (w**2 * np.exp(-2.0 * np.multiply.outer(tau, t))).sum(axis=-1)
    return std * np.sqrt(n_records * var)


def noise_floor(scenario: Scenario, runs: RunSet, taus, T: float, variant: str,
                facts: Optional[DistanceFacts] = None) -> np.ndarray:
    """Per-tau noise floor of the two-source sum.

    Exact variant: the Laplace quadrature of ``|a . (s - s_0)|`` over the
    causality window (where the difference must vanish), plus any
    observation noise.

    Tilde variant: the free-space Laplace-consistency error
    ``|a . (S_0 - int_B V_e^0)|``.  Without free-space records it is
    estimated from the obstacle record over the causality window, where
    the record still equals the free field.
    """
    taus = _as_taus(taus)
    med = scenario.medium
    tq = quiet_time(scenario, facts)
    total = np.zeros_like(taus)
    for j in range(2):
        rec = runs.obstacle[j]
        src = scenario.sources[j]
        a = src.direction
        dt = rec.s_series.dt
        ft = np.abs(pulse_laplace(src.pulse, taus, T, dt))
        pref = taus / med.epsilon * ft
        std = float(rec.meta.get("noise_std", 0.0))
        if variant == EXACT:
            if runs.free is None:
                raise InsufficientDataError("exact variant needs free-space records")
            ref = runs.free[j]
            n = min(rec.times.size, ref.times.size)
            t = rec.times[:n]
            d = (rec.values[:n] - ref.values[:n]) @ a
            pre = np.where(t < tq, np.abs(d), 0.0)
            lvl = laplace_series(t, pre, taus, T) if tq > 0 else np.zeros_like(taus)
            std = math.hypot(std, float(ref.meta.get("noise_std", 0.0)))
            lvl = lvl + _noise_term(t, taus, T, std, 1)
        else:
            ball = Ve0BallIntegral(src, med, dt)
            if runs.free is not None:
                ref = runs.free[j]
                S0 = laplace_series(ref.times, ref.values, taus, T) @ a
                lvl = np.abs(S0 - ball.laplace(taus, T) @ a)
                std = math.hypot(std, float(ref.meta.get("noise_std", 0.0)))
            else:
                Tq = min(max(tq, 2 * dt), T)
                Sq = laplace_series(rec.times, rec.values, taus, Tq) @ a
                lvl = np.abs(Sq - ball.laplace(taus, Tq) @ a)
            lvl = lvl + _noise_term(rec.times, taus, T, std, 1)
        total += pref * lvl
    return total


def sum_indicator(scenario: Scenario, runs: RunSet, variant: str = EXACT, taus=None,
                  T: Optional[float] = None, facts: Optional[DistanceFacts] = None
                  ) -> IndicatorCurve:
    """Two-source sum over the scenario's tau grid (or ``taus``)."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    taus = _as_taus(scenario.taus() if taus is None else taus)
    taus = np.sort(taus)
    T = float(scenario.time.T if T is None else T)
    if variant == EXACT and runs.free is None:
        raise InsufficientDataError("exact variant needs free-space records")
    per = []
    for j in range(2):
        rec = runs.obstacle[j]
        if variant == EXACT:
            ref = runs.free[j]
        else:
            ref = Ve0BallIntegral(scenario.sources[j], scenario.medium, rec.s_series.dt)
        per.append(indicator(rec, ref, scenario.sources[j], taus, T, scenario.medium))
    floor = noise_floor(scenario, runs, taus, T, variant, facts)
    return IndicatorCurve(taus, tuple(per), per[0] + per[1], T, variant, floor,
                          scenario.medium, {"quiet_time": quiet_time(scenario, facts)})


# ---------------------------------------------------------------------------
# distance


@dataclass(frozen=True)
class DistanceEstimate:
    dist: float
    slope: float
    fit_window: tuple
    residual: float
    n_points: int
    intercept: float = 0.0
    facts: Optional[DistanceFacts] = None

    @property
    def relative_error(self) -> Optional[float]:
        if self.facts is None:
            return None
        return abs(self.dist - self.facts.dist_DB) / self.facts.dist_DB


def _longest_run(mask: np.ndarray) -> slice:
    best, start, best_len = slice(0, 0), None, 0
    for i, m in enumerate(list(mask) + [False]):
        if m and start is None:
            start = i
        elif not m and start is not None:
            if i - start >= best_len:  # ties -> larger tau
                best, best_len = slice(start, i), i - start
            start = None
    return best


def fit_log_linear(taus, values, weights=None):
    """Weighted least squares ``log|values| = c + slope tau``.

    Returns ``(slope, intercept, weighted RMS residual)``.
    """
    taus = np.asarray(taus, dtype=float)
    y = np.log(np.abs(np.asarray(values, dtype=float)))
    w = np.ones_like(taus) if weights is None else np.asarray(weights, dtype=float)
    A = np.column_stack([taus, np.ones_like(taus)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    r = y - A @ coef
    resid = float(np.sqrt(np.sum(w * r**2) / np.sum(w)))
    return float(coef[0]), float(coef[1]), resid


def estimate_distance(curve: IndicatorCurve, medium: Optional[MediumParams] = None,
                      window: Optional[tuple] = None, min_points: int = 6,
                      facts: Optional[DistanceFacts] = None) -> DistanceEstimate:
    """Slope of log|sum I| against tau gives ``dist = -slope / (2 sqrt(mu eps))``.

    Without ``window`` the fit uses the longest contiguous run of points
    above the noise floor.  Weights are ``min(|sum|/floor, 1)``.
    """
    medium = medium or curve.medium
    usable = curve.usable & (curve.sum != 0)
    if window is not None:
        lo, hi = window
        inwin = (curve.taus >= lo * (1 - 1e-12)) & (curve.taus <= hi * (1 + 1e-12))
        sel = np.flatnonzero(usable & inwin)
    else:
        sel = np.arange(curve.taus.size)[_longest_run(usable)]
    if sel.size < min_points:
        raise InsufficientDataError(
            f"only {sel.size} usable points above the noise floor (need {min_points})")
    w = np.minimum(curve.snr[sel], 1.0)
    slope, icpt, resid = fit_log_linear(curve.taus[sel], curve.sum[sel], w)
    if slope >= 0:
        raise InsufficientDataError(
            f"log|sum I| is not decreasing (slope {slope:.3g}); T may be too short")
    dist = -slope / (2.0 * medium.sqrt_mu_eps)
    return DistanceEstimate(dist, slope, (float(curve.taus[sel[0]]), float(curve.taus[sel[-1]])),
                            resid, int(sel.size), icpt, facts)


def distance_scan(curve: IndicatorCurve, windows: Sequence[tuple], medium=None,
                  min_points: int = 6, facts=None) -> list:
    return [estimate_distance(curve, medium, w, min_points, facts) for w in windows]


def sliding_windows(taus, width: int, count: int) -> list:
    """``count`` windows of ``width`` points ending at the top of the grid, evenly shifted."""
    taus = np.asarray(taus, dtype=float)
    n = taus.size
    if width > n:
        raise InsufficientDataError("window wider than the tau grid")
    starts = np.unique(np.linspace(0, n - width, count).round().astype(int))
    return [(float(taus[s]), float(taus[s + width - 1])) for s in starts]


def write_distance_csv(path, estimates: Sequence[DistanceEstimate]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_lo", "tau_hi", "slope", "dist", "residual"])
        for e in estimates:
            w.writerow([repr(e.fit_window[0]), repr(e.fit_window[1]), repr(e.slope),
                        repr(e.dist), repr(e.residual)])
    return path


# ---------------------------------------------------------------------------
# impedance dichotomy


@dataclass(frozen=True)
class ImpedanceVerdict:
    label: str
    evidence: dict

    def __str__(self):
        return self.label


def classify_impedance(curve: IndicatorCurve, window: Optional[np.ndarray] = None,
                       min_points: int = 4) -> ImpedanceVerdict:
    """above / below / indeterminate from the trend of e^{tau T} sum I.

    ``above`` needs every usable point of the window positive with the
    scaled curve strictly increasing.  ``below`` needs every point negative
    and strictly decreasing.  The default window is the upper half of the
    tau grid.
    """
    win = curve.upper_window() if window is None else np.asarray(window, dtype=bool)
    sel = np.flatnonzero(win & curve.usable)
    ev = {"n_points": int(sel.size), "n_window": int(win.sum())}
    if sel.size < min_points:
        ev["reason"] = "too few points above the noise floor"
        return ImpedanceVerdict(INDETERMINATE, ev)
    sc = curve.scaled[sel]
    signs = np.sign(curve.sum[sel])
    steps = np.diff(sc)
    slope, _, resid = fit_log_linear(curve.taus[sel], curve.sum[sel])
    ev.update({"positive_fraction": float(np.mean(signs > 0)),
               "trend_stat": slope + curve.T,  # d/dtau log|e^{tau T} sum|
               "fit_residual": resid,
               "tau_window": (float(curve.taus[sel[0]]), float(curve.taus[sel[-1]]))})
    if np.all(signs > 0) and np.all(steps > 0):
        return ImpedanceVerdict(ABOVE, ev)
    if np.all(signs < 0) and np.all(steps < 0):
        return ImpedanceVerdict(BELOW, ev)
    ev["reason"] = "mixed signs or non-monotone scaled curve"
    return ImpedanceVerdict(INDETERMINATE, ev)


# ---------------------------------------------------------------------------
# T sweep


@dataclass(frozen=True)
class TSweepResult:
    T_grid: np.ndarray
    verdicts: tuple
    trend_stats: np.ndarray
    T_star: Optional[float]
    dist: Optional[float]
    curves: tuple = ()

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "verdict", "trend_stat"])
            for T, v, s in zip(self.T_grid, self.verdicts, self.trend_stats):
                w.writerow([repr(float(T)), v, repr(float(s))])
        return path


def limit_verdict(curve: IndicatorCurve, window: Optional[np.ndarray] = None) -> tuple:
    """(verdict, trend_stat) for one T.

    ``zero`` if no point of the window is resolved, i.e. the scaled curve
    stays within FLOOR_FACTOR times the noise floor across the whole
    window (its shape there is noise).  Otherwise the verdict of
    :func:`classify_impedance`.
    """
    win = curve.upper_window() if window is None else np.asarray(window, dtype=bool)
    idx = np.flatnonzero(win)
    sc = np.abs(curve.scaled[idx])
    with np.errstate(divide="ignore"):
        ls = np.log(np.maximum(sc, 1e-300))
    trend = float(np.polyfit(curve.taus[idx], ls, 1)[0]) if idx.size >= 2 else 0.0
    if not np.any(curve.snr[idx] > FLOOR_FACTOR):
        return ZERO, trend
    v = classify_impedance(curve, win)
    return v.label, float(v.evidence.get("trend_stat", trend))


def refinement_floor(curve: IndicatorCurve, coarse: IndicatorCurve) -> IndicatorCurve:
    """Copy of ``curve`` whose noise floor is ``|I_dx - I_coarse|``.

    With ``coarse`` computed on a grid of twice the spacing this is the
    usual first-order discretization-error estimate.  Unlike the
    causality-window floor it does not use dist(D,B).
    """
    if not np.array_equal(curve.taus, coarse.taus) or curve.T != coarse.T:
        raise DomainError("curves must share the tau grid and T")
    return replace(curve, noise_floor=np.abs(curve.sum - coarse.sum),
                   meta=dict(curve.meta, floor="refinement"))


def t_sweep(scenario: Scenario, runs: RunSet, T_grid, variant: str = EXACT, taus=None,
            facts: Optional[DistanceFacts] = None, keep_curves: bool = False,
            coarse: Optional[tuple] = None) -> TSweepResult:
    """Per-T limit verdicts from one long record set.

    Each T reuses the same series, truncated by the quadrature (no new
    simulation).  ``T*`` is the largest grid T such that it and every
    smaller grid T are ``zero``.  ``dist = T* / (2 sqrt(mu eps))``.

    By default the floor is the one of :func:`noise_floor`; for the exact
    variant its causality window is placed with the known dist(D,B), so
    grid T below that window are ``zero`` by construction.  Passing
    ``coarse=(scenario_2dx, runs_2dx)`` uses :func:`refinement_floor`
    instead, which does not depend on dist(D,B).
    """
    T_grid = np.sort(np.asarray(T_grid, dtype=float))
    if T_grid.size == 0 or T_grid[0] <= 0:
        raise DomainError("T grid must be positive")
    dt = runs.obstacle[0].s_series.dt
    if T_grid[-1] >= runs.duration + dt:
        raise DomainError(f"T grid exceeds recorded duration {runs.duration:g}")
    if coarse is not None and T_grid[-1] >= coarse[1].duration + coarse[1].obstacle[0].s_series.dt:
        raise DomainError(f"T grid exceeds the coarse records ({coarse[1].duration:g})")
    verdicts, stats, curves = [], [], []
    for T in T_grid:
        c = sum_indicator(scenario, runs, variant, taus, float(T), facts)
        if coarse is not None:
            c = refinement_floor(c, sum_indicator(coarse[0], coarse[1], variant, c.taus, float(T)))
        v, s = limit_verdict(c)
        verdicts.append(v)
        stats.append(s)
        if keep_curves:
            curves.append(c)
    T_star = None
    for T, v in zip(T_grid, verdicts):
        if v != ZERO:
            break
        T_star = float(T)
    dist = None if T_star is None else T_star / (2.0 * scenario.medium.sqrt_mu_eps)
    return TSweepResult(T_grid, tuple(verdicts), np.asarray(stats), T_star, dist, tuple(curves))


# ---------------------------------------------------------------------------
# convenience


def simulate_runs(scenario: Scenario, need_free: bool = True, backend=None,
                  progress=None) -> RunSet:
    """Run both source directions with the obstacle (and in free space)."""
    from .solver import build_grid, run

    g = build_grid(scenario, with_obstacle=True)
    obst = tuple(run(scenario, True, j, grid=g, backend=backend, progress=progress)
                 for j in range(2))
    free = None
    if need_free:
        g0 = build_grid(scenario, with_obstacle=False)
        free = tuple(run(scenario, False, j, grid=g0, backend=backend, progress=progress)
                     for j in range(2))
    if scenario.noise_std > 0:
        obst = tuple(r.with_noise(scenario.noise_std, scenario.seed + j)
                     for j, r in enumerate(obst))
        if free is not None:
            free = tuple(r.with_noise(scenario.noise_std, scenario.seed + 100 + j)
                         for j, r in enumerate(free))
    return RunSet(obst, free)
