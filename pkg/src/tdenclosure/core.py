"""Domain types, pulse machinery, scenario configuration and Laplace quadrature.

Vectors are plain ``numpy`` arrays of shape ``(3,)``; :func:`vec3` and
:func:`unit` do the validation.  Everything here is immutable after
construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.spatial import cKDTree

from .errors import DomainError, ScenarioError

ArrayLike = Union[float, Sequence[float], np.ndarray]

CFL_SAFETY = 0.45


class UnderResolvedWarning(UserWarning):
    """``tau * dt`` is too large for the trapezoid rule to resolve ``exp(-tau t)``."""


def vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"expected 3 finite components, got {v!r}")
    return a


def unit(v, tol: float = 1e-12) -> np.ndarray:
    """Validate that ``v`` is a unit vector (|v| = 1 within ``tol``)."""
    a = vec3(v)
    if abs(np.linalg.norm(a) - 1.0) > tol:
        raise ValueError(f"{v!r} is not a unit vector")
    return a


def normalized(v) -> np.ndarray:
    a = vec3(v)
    n = np.linalg.norm(a)
    if n == 0:
        raise ValueError("zero vector has no direction")
    return a / n


# ---------------------------------------------------------------------------
# medium


@dataclass(frozen=True)
class MediumParams:
    epsilon: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if not (self.epsilon > 0 and self.mu > 0):
            raise ScenarioError("epsilon and mu must be positive")

    @property
    def sqrt_mu_eps(self) -> float:
        return math.sqrt(self.mu * self.epsilon)

    @property
    def wave_speed(self) -> float:
        return 1.0 / self.sqrt_mu_eps

    @property
    def impedance_threshold(self) -> float:
        """The matched impedance sqrt(eps/mu) separating the two regimes."""
        return math.sqrt(self.epsilon / self.mu)


# ---------------------------------------------------------------------------
# pulses


@dataclass(frozen=True)
class Pulse:
    """Temporal profile f(t) of the source current.

    ``kind="ramp_exp"`` is ``amplitude * (t/t_c) * exp(1 - t/t_c)``, which
    peaks at ``t_c`` with value ``amplitude``.  ``kind="custom"`` is a C^2
    cubic spline through ``table = (times, values)``; the table must start
    at ``t = 0`` with value 0.
    """

    kind: str = "ramp_exp"
    t_c: float = 1.0
    amplitude: float = 1.0
    gamma: float = 2.0
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "ramp_exp":
            if not self.t_c > 0:
                raise ScenarioError("ramp_exp pulse needs t_c > 0")
        elif self.kind == "custom":
            if self.table is None:
                raise ScenarioError("custom pulse needs a table")
            t, f = (np.asarray(a, dtype=float) for a in self.table)
            if t.ndim != 1 or t.shape != f.shape or t.size < 4:
                raise ScenarioError("custom pulse table needs >= 4 matching samples")
            if t[0] != 0.0 or f[0] != 0.0:
                raise ScenarioError("custom pulse must satisfy f(0) = 0")
            if np.any(np.diff(t) <= 0):
                raise ScenarioError("custom pulse times must be strictly increasing")
            object.__setattr__(self, "table", (tuple(t.tolist()), tuple(f.tolist())))
        else:
            raise ScenarioError(f"unknown pulse kind {self.kind!r}")

    def scaled(self, factor: float) -> "Pulse":
        if self.kind == "ramp_exp":
            return dataclasses.replace(self, amplitude=self.amplitude * factor)
        t, f = self.table
        return dataclasses.replace(
            self, amplitude=self.amplitude * factor, table=(t, tuple(factor * np.asarray(f)))
        )

    def __call__(self, t):
        return pulse_eval(self, t)

    @property
    def support_end(self) -> float:
        """Time after which f vanishes identically (inf for ramp_exp).

        A custom table whose last value is 0 is continued by 0.
        """
        if self.kind == "custom" and self.table[1][-1] == 0.0:
            return float(self.table[0][-1])
        return math.inf

    def drive(self, t):
        """f(t) continued by zero past :attr:`support_end` (solver use)."""
        ta = np.asarray(t, dtype=float)
        end = self.support_end
        if np.isfinite(end):
            out = np.where(ta > end, 0.0, pulse_eval(self, np.minimum(ta, end)))
            return float(out) if np.ndim(out) == 0 else out
        return pulse_eval(self, ta)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "amplitude": self.amplitude, "gamma": self.gamma}
        if self.kind == "ramp_exp":
            d["t_c"] = self.t_c
        else:
            d["table"] = {"t": list(self.table[0]), "f": list(self.table[1])}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Pulse":
        kind = d.get("kind", "ramp_exp")
        if kind == "custom":
            tab = d["table"]
            return cls(kind="custom", amplitude=d.get("amplitude", 1.0),
                       gamma=d.get("gamma", 2.0), table=(tab["t"], tab["f"]))
        return cls(kind=kind, t_c=d.get("t_c", 1.0), amplitude=d.get("amplitude", 1.0),
                   gamma=d.get("gamma", 2.0))


_SPLINES: dict = {}


def _spline(pulse: Pulse) -> CubicSpline:
    key = pulse.table
    if key not in _SPLINES:
        _SPLINES[key] = CubicSpline(np.asarray(key[0]), np.asarray(key[1]))
    return _SPLINES[key]


def pulse_eval(pulse: Pulse, t):
    """Evaluate f(t) for scalar or array ``t >= 0``; f(0) is exactly 0."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0):
        raise DomainError("pulse evaluated at negative time")
    if pulse.kind == "ramp_exp":
        s = ta / pulse.t_c
        out = pulse.amplitude * s * np.exp(1.0 - s)
    else:
        t_end = pulse.table[0][-1]
        if np.any(ta > t_end):
            raise DomainError(f"custom pulse defined on [0, {t_end}] only")
        out = _spline(pulse)(ta)
        out = np.where(ta == 0.0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class SourceSpec:
    """Current ``f(t) chi_B(x) a`` on the ball B(center, radius)."""

    center: np.ndarray
    radius: float
    direction: np.ndarray
    pulse: Pulse = field(default_factory=Pulse)

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "direction", unit(self.direction, tol=1e-12))
        if not self.radius > 0:
            raise ScenarioError("source radius must be positive")

    def __eq__(self, other):
        if not isinstance(other, SourceSpec):
            return NotImplemented
        return (np.array_equal(self.center, other.center) and self.radius == other.radius
                and np.array_equal(self.direction, other.direction) and self.pulse == other.pulse)

    __hash__ = None

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.radius,
                "direction": self.direction.tolist(), "pulse": self.pulse.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SourceSpec":
        return cls(center=d["center"], radius=d["radius"], direction=normalized(d["direction"]),
                   pulse=Pulse.from_dict(d.get("pulse", {})))


# ---------------------------------------------------------------------------
# obstacle geometry and impedance


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        if not self.radius > 0:
            raise ScenarioError("sphere radius must be positive")

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - self.center, axis=-1) - self.radius

    def project(self, pts: np.ndarray):
        """Nearest surface points and outward normals."""
        d = pts - self.center
        n = d / np.linalg.norm(d, axis=-1, keepdims=True)
        return self.center + self.radius * n, n

    def bounding_sphere(self):
        return self.center, self.radius

    def to_dict(self):
        return {"kind": "sphere", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; a staircase grid represents it exactly only if aligned."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", vec3(self.lo))
        object.__setattr__(self, "hi", vec3(self.hi))
        if np.any(self.hi <= self.lo):
            raise ScenarioError("box needs hi > lo componentwise")

    def sdf(self, pts):
        c = 0.5 * (self.lo + self.hi)
        h = 0.5 * (self.hi - self.lo)
        q = np.abs(pts - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def project(self, pts):
        return _project_by_gradient(self.sdf, pts)

    def bounding_sphere(self):
        c = 0.5 * (self.lo + self.hi)
        return c, float(np.linalg.norm(self.hi - c))

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class LevelSet:
    """Signed distance samples on a regular grid (negative inside)."""

    origin: np.ndarray
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", vec3(self.origin))
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or min(v.shape) < 2:
            raise ScenarioError("level set needs a 3-D array of samples")
        object.__setattr__(self, "values", v)
        axes = [self.origin[i] + self.spacing * np.arange(v.shape[i]) for i in range(3)]
        object.__setattr__(self, "_interp", RegularGridInterpolator(
            axes, v, bounds_error=False, fill_value=None))

    def sdf(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self._interp(pts.reshape(-1, 3)).reshape(pts.shape[:-1])

    def project(self, pts):
        return _project_by_gradient(self.sdf, pts, h=0.5 * self.spacing)

    def bounding_sphere(self):
        idx = np.argwhere(self.values <= 0)
        if idx.size == 0:
            raise ScenarioError("level set has no interior")
        pts = self.origin + self.spacing * idx
        c = 0.5 * (pts.min(0) + pts.max(0))
        return c, float(np.max(np.linalg.norm(pts - c, axis=1))) + self.spacing

    def to_dict(self):
        return {"kind": "levelset", "origin": self.origin.tolist(), "spacing": self.spacing,
                "values": self.values.tolist()}


def _project_by_gradient(sdf, pts, h=1e-6):
    pts = np.asarray(pts, dtype=float)
    g = np.empty_like(pts)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[..., i] = (sdf(pts + e) - sdf(pts - e)) / (2 * h)
    n = g / np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-300)
    return pts - sdf(pts)[..., None] * n, n


@dataclass(frozen=True)
class ConstantImpedance:
    value: float

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.full(pts.shape[:-1], float(self.value))

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class PiecewiseImpedance:
    """First matching half-space ``normal . x >= offset`` wins, else ``default``."""

    regions: tuple
    default: float

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.full(pts.shape[:-1], float(self.default))
        done = np.zeros(pts.shape[:-1], dtype=bool)
        for normal, offset, value in self.regions:
            hit = (pts @ vec3(normal) >= offset) & ~done
            out[hit] = value
            done |= hit
        return out

    def to_dict(self):
        return {"kind": "piecewise", "default": self.default,
                "regions": [{"normal": list(n), "offset": o, "value": v} for n, o, v in self.regions]}


@dataclass(frozen=True, eq=False)
class TableImpedance:
    """Nearest-sample lookup over scattered surface samples."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if p.shape[0] != v.size or v.size == 0:
            raise ScenarioError("impedance table needs matching points and values")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_tree", cKDTree(p))

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        _, idx = self._tree.query(pts.reshape(-1, 3))
        return self.values[idx].reshape(pts.shape[:-1])

    def to_dict(self):
        return {"kind": "table", "points": self.points.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class Obstacle:
    shape: object
    impedance: object

    def __post_init__(self):
        imp = self.impedance
        if isinstance(imp, ConstantImpedance):
            lo = imp.value
        elif isinstance(imp, PiecewiseImpedance):
            lo = min([imp.default] + [v for _, _, v in imp.regions])
        else:
            lo = float(np.min(imp.values))
        if lo < 0:
            raise ScenarioError("impedance must be non-negative on the surface")

    def lam(self, surface_pts):
        return self.impedance(surface_pts)

    def to_dict(self):
        return {"shape": self.shape.to_dict(), "impedance": self.impedance.to_dict()}

    @classmethod
    def from_dict(cls, d: dict, base: Optional[Path] = None) -> "Obstacle":
        s = d["shape"]
        kind = s["kind"]
        if kind == "sphere":
            shape = Sphere(s["center"], s["radius"])
        elif kind == "box":
            shape = Box(s["lo"], s["hi"])
        elif kind == "levelset":
            if "values_npy" in s:
                path = Path(s["values_npy"])
                if base is not None and not path.is_absolute():
                    path = base / path
                values = np.load(path)
            else:
                values = np.asarray(s["values"], dtype=float)
            shape = LevelSet(s["origin"], s["spacing"], values)
        else:
            raise ScenarioError(f"unknown obstacle shape {kind!r}")
        i = d["impedance"]
        kind = i["kind"]
        if kind == "constant":
            imp = ConstantImpedance(float(i["value"]))
        elif kind == "piecewise":
            imp = PiecewiseImpedance(
                tuple((tuple(r["normal"]), float(r["offset"]), float(r["value"])) for r in i["regions"]),
                float(i["default"]))
        elif kind == "table":
            imp = TableImpedance(i["points"], i["values"])
        else:
            raise ScenarioError(f"unknown impedance kind {kind!r}")
        return cls(shape, imp)


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class GridSpec:
    dx: float
    box: Optional[tuple] = None  # (lo, hi); None -> smallest box obeying the clearance rule

    def __post_init__(self):
        if not self.dx > 0:
            raise ScenarioError("dx must be positive")
        if self.box is not None:
            lo, hi = vec3(self.box[0]), vec3(self.box[1])
            object.__setattr__(self, "box", (tuple(lo.tolist()), tuple(hi.tolist())))


@dataclass(frozen=True)
class TimeSpec:
    T: float
    dt: Optional[float] = None

    def __post_init__(self):
        if not self.T > 0:
            raise ScenarioError("T must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ScenarioError("dt must be positive")


@dataclass(frozen=True, eq=False)
class Scenario:
    medium: MediumParams
    sources: tuple
    obstacle: Optional[Obstacle]
    grid: GridSpec
    time: TimeSpec
    tau_grid: Optional[tuple] = None
    t_grid_for_sweep: Optional[tuple] = None
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.tau_grid is not None:
            object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        if self.t_grid_for_sweep is not None:
            object.__setattr__(self, "t_grid_for_sweep",
                               tuple(float(t) for t in self.t_grid_for_sweep))
        self.validate()

    @property
    def dt(self) -> float:
        if self.time.dt is not None:
            return self.time.dt
        return CFL_SAFETY * self.grid.dx / (math.sqrt(3.0) * self.medium.wave_speed)

    @property
    def cfl_limit(self) -> float:
        return self.grid.dx / (math.sqrt(3.0) * self.medium.wave_speed)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.time.T / self.dt + 1e-9))

    @property
    def source(self) -> SourceSpec:
        return self.sources[0]

    def validate(self):
        if len(self.sources) != 2:
            raise ScenarioError("exactly two sources (two polarisations) are required")
        s0, s1 = self.sources
        if not (np.array_equal(s0.center, s1.center) and s0.radius == s1.radius
                and s0.pulse == s1.pulse):
            raise ScenarioError("both sources must share the ball and the pulse")
        if np.linalg.norm(np.cross(s0.direction, s1.direction)) <= 1e-8:
            raise ScenarioError("source directions must be linearly independent")
        if self.dt > self.cfl_limit * (1 + 1e-12):
            raise ScenarioError(
                f"dt={self.dt:g} violates the CFL bound dx/(sqrt(3) c) = {self.cfl_limit:g}")
        if self.obstacle is not None:
            gap = distance_facts(self).dist_DB
            if gap <= 0:
                raise ScenarioError(
                    "source ball touches the obstacle: closure(B) and closure(D) must be "
                    "disjoint (B̄∩D̄=∅)")

    def with_obstacle(self, obstacle) -> "Scenario":
        return dataclasses.replace(self, obstacle=obstacle)

    def with_time(self, T: float) -> "Scenario":
        return dataclasses.replace(self, time=dataclasses.replace(self.time, T=T))

    def with_pulse(self, pulse: Pulse) -> "Scenario":
        srcs = tuple(dataclasses.replace(s, pulse=pulse) for s in self.sources)
        return dataclasses.replace(self, sources=srcs)

    def taus(self) -> np.ndarray:
        if self.tau_grid is not None:
            return np.asarray(self.tau_grid, dtype=float)
        return default_tau_grid(self.medium, self.grid.dx, self.dt, self.time.T)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "medium": {"epsilon": self.medium.epsilon, "mu": self.medium.mu},
            "sources": [s.to_dict() for s in self.sources],
            "obstacle": None if self.obstacle is None else self.obstacle.to_dict(),
            "grid": {"dx": self.grid.dx,
                     "box": None if self.grid.box is None else
                     {"lo": list(self.grid.box[0]), "hi": list(self.grid.box[1])}},
            "time": {"T": self.time.T, "dt": self.time.dt},
        }
        if self.tau_grid is not None:
            d["tau_grid"] = list(self.tau_grid)
        if self.t_grid_for_sweep is not None:
            d["t_grid_for_sweep"] = list(self.t_grid_for_sweep)
        if self.noise_std:
            d["noise"] = {"std": self.noise_std, "seed": self.seed}
        return d

    @classmethod
    def from_dict(cls, d: dict, base: Optional[Path] = None) -> "Scenario":
        try:
            medium = MediumParams(**d.get("medium", {}))
            sources = [SourceSpec.from_dict(s) for s in d["sources"]]
            obstacle = None if d.get("obstacle") is None else Obstacle.from_dict(d["obstacle"], base)
            g = d["grid"]
            box = g.get("box")
            grid = GridSpec(g["dx"], None if box is None else (box["lo"], box["hi"]))
            time = TimeSpec(d["time"]["T"], d["time"].get("dt"))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        tau = d.get("tau_grid")
        if isinstance(tau, dict):
            tau = np.geomspace(tau["min"], tau["max"], int(tau.get("count", 16))).tolist()
        noise = d.get("noise") or {}
        return cls(medium, sources, obstacle, grid, time, tau_grid=tau,
                   t_grid_for_sweep=d.get("t_grid_for_sweep"),
                   noise_std=float(noise.get("std", 0.0)), seed=int(noise.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        with open(path) as fh:
            return cls.from_dict(json.load(fh), base=path.parent)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def physics_hash(self) -> str:
        """Hash of everything that influences a simulated record."""
        d = self.to_dict()
        d.pop("tau_grid", None)
        d.pop("t_grid_for_sweep", None)
        d.pop("noise", None)  # observation noise is recorded in the record metadata
        d["time"] = {"dt": self.dt}  # records of different length share a prefix
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_tau_grid(medium: MediumParams, dx: float, dt: float, T: float, count: int = 16):
    """Geometric grid on [2/T, min(8/(sqrt(mu eps) dx 50), 0.4/dt)]."""
    lo = 2.0 / T
    hi = min(8.0 / (medium.sqrt_mu_eps * dx * 50.0), 0.4 / dt)
    if hi <= lo:
        raise ScenarioError(f"empty default tau range [{lo:g}, {hi:g}]")
    return np.geomspace(lo, hi, count)


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class DistanceFacts:
    dist_DB: float
    d_boundary_p: float
    eta: float


def _boundary_distance_analytic(shape, p: np.ndarray) -> float:
    if isinstance(shape, Sphere):
        return float(abs(np.linalg.norm(p - shape.center) - shape.radius))
    if isinstance(shape, Box):
        return float(abs(shape.sdf(p[None, :])[0]))
    raise TypeError("no closed form for this shape")


def boundary_distance_levelset(shape, p: np.ndarray, h: float) -> float:
    """Distance from p to the zero set of ``shape.sdf`` sampled on an h-grid.

    Cells whose corner samples change sign are refined by linear
    interpolation along the edges; the result is accurate to O(h).
    """
    c, rad = shape.bounding_sphere()
    lo = c - rad - 2 * h
    n = int(math.ceil(2 * (rad + 2 * h) / h)) + 1
    ax = [lo[i] + h * np.arange(n) for i in range(3)]
    X, Y, Z = np.meshgrid(*ax, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    s = shape.sdf(pts)
    best = np.inf
    for axis in range(3):
        a = [slice(None)] * 3
        b = [slice(None)] * 3
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        s0, s1 = s[tuple(a)], s[tuple(b)]
        cross = (s0 <= 0) != (s1 <= 0)
        if not np.any(cross):
            continue
        t = s0[cross] / (s0[cross] - s1[cross])
        p0 = pts[tuple(a)][cross]
        p1 = pts[tuple(b)][cross]
        zero = p0 + t[:, None] * (p1 - p0)
        best = min(best, float(np.min(np.linalg.norm(zero - p, axis=1))))
    if not np.isfinite(best):
        raise ScenarioError("level-set sampling found no surface")
    return best


def distance_facts(scenario: Scenario, method: str = "auto") -> DistanceFacts:
    """dist(D, B) = d_{dD}(p) - eta for the scenario's obstacle."""
    src = scenario.source
    shape = scenario.obstacle.shape
    if method == "auto":
        method = "levelset" if isinstance(shape, LevelSet) else "analytic"
    if method == "analytic":
        d = _boundary_distance_analytic(shape, src.center)
    else:
        d = boundary_distance_levelset(shape, src.center, scenario.grid.dx)
    if shape.sdf(src.center[None, :])[0] < 0:
        d = -d  # source centre inside the obstacle
    return DistanceFacts(dist_DB=d - src.radius, d_boundary_p=d, eta=src.radius)


# ---------------------------------------------------------------------------
# time series and Laplace quadrature


@dataclass(frozen=True, eq=False)
class TimeSeriesMoment:
    """s(t) = integral of E over B, one row per time step."""

    times: np.ndarray
    values: np.ndarray
    label: str  # "with_obstacle" | "free_space"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.shape != (t.size, 3):
            raise ValueError("times must be (n,), values (n, 3)")
        if t.size and t[0] != 0.0:
            raise ValueError("series must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1])


def _last_index(times: np.ndarray, T: float) -> int:
    dt = times[1] - times[0]
    n = int(math.floor(T / dt + 1e-9))
    if n >= times.size:
        if T > times[-1] + 1e-9 * dt:
            raise DomainError(f"T={T:g} beyond recorded duration {times[-1]:g}")
        n = times.size - 1
    return n


def laplace_series(times, values, tau, T):
    """Trapezoid approximation of the integral of exp(-tau t) value(t) over [0, T].

    ``values`` may be ``(n,)`` or ``(n, k)``; ``tau`` may be a scalar or a
    1-D array (the result then gains a leading tau axis).  ``T`` is
    truncated down to a sample boundary.  The samples must be uniform.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        raise DomainError("empty series")
    if times.size == 1:
        return np.zeros(np.shape(tau) + values.shape[1:]) if np.ndim(tau) else 0.0 * values[0]
    tau_a = np.asarray(tau, dtype=float)
    if np.any(tau_a <= 0):
        raise DomainError("tau must be positive")
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0):
        raise DomainError("series must be uniformly sampled")
    if np.max(tau_a) * dt > 0.5:
        warnings.warn(f"tau*dt = {np.max(tau_a) * dt:.3g} > 0.5: exp(-tau t) under-resolved",
                      UnderResolvedWarning, stacklevel=2)
    n = _last_index(times, T)
    t = times[: n + 1]
    v = values[: n + 1]
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    kern = w * np.exp(-np.multiply.outer(tau_a, t))  # (..., n+1)
    return np.tensordot(kern, v, axes=([-1], [0]))


def pulse_series(pulse: Pulse, dt: float, T: float):
    n = int(math.floor(T / dt + 1e-9))
    t = dt * np.arange(n + 1)
    return t, np.asarray(pulse_eval(pulse, t), dtype=float)


def pulse_laplace(pulse: Pulse, tau, T: float, dt: float):
    """f~_T(tau) on the solver's time grid (trapezoid, truncated at T)."""
    t, f = pulse_series(pulse, dt, T)
    return laplace_series(t, f, tau, T)


@dataclass(frozen=True)
class AdmissibilityReport:
    min_scaled: float
    passed: bool
    scaled: np.ndarray
    floor: float


def pulse_admissibility(pulse: Pulse, gamma: float, tau_grid, T: float,
                        dt: Optional[float] = None, floor: Optional[float] = None):
    """Finite-grid proxy for ``liminf tau^gamma |f~(tau)| > 0``.

    Passes iff ``min tau^gamma |f~(tau)|`` over the grid exceeds ``floor``
    (default ``1e-12 |amplitude|``).
    """
    if gamma < 1.5:
        raise DomainError("gamma must be >= 3/2")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0:
        raise DomainError("empty tau grid")
    if dt is None:
        dt = min(T / 20000.0, 0.1 / np.max(taus))
    ft = pulse_laplace(pulse, taus, T, dt)
    scaled = taus**gamma * np.abs(ft)
    if floor is None:
        floor = 1e-12 * abs(pulse.amplitude)
    m = float(np.min(scaled))
    return AdmissibilityReport(m, bool(m > floor), scaled, floor)
