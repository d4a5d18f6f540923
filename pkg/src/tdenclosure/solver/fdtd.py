"""Leapfrog time stepping, impedance update, and run records."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..core import Scenario, SourceSpec, TimeSeriesMoment
from ..errors import RecordMismatchError, SimulationError
from .grid import YeeGrid, build_grid, e_shape, h_shape
from .kernels import get_backend

WITH_OBSTACLE = "with_obstacle"
FREE_SPACE = "free_space"
_CHECK_EVERY = 64


@dataclass
class FieldState:
    """E at integer step ``n``, H at ``n - 1/2``."""

    E: tuple
    H: tuple
    n: int = 0
    dt: float = 0.0
    energy: float = 0.0  # leapfrog energy at step n (set by the H half-step)

    @property
    def t(self) -> float:
        return self.n * self.dt


def new_state(grid: YeeGrid) -> FieldState:
    E = tuple(np.zeros(e_shape(c, grid.dims)) for c in range(3))
    H = tuple(np.zeros(h_shape(c, grid.dims)) for c in range(3))
    return FieldState(E, H, 0, grid.dt)


def apply_impedance_bc(state: FieldState, grid: YeeGrid, e_before) -> FieldState:
    """Impose the impedance loss on boundary-layer edges.

    ``e_before`` holds the boundary values at step n.  On entry ``state.E``
    holds the lossless update E*; on exit each boundary edge satisfies the
    Crank-Nicolson balance ``E' = E* - beta (E' + E_n)``.  That is the
    discrete form of ``nu x H = lambda E_tan`` integrated over the edge's
    share of the staircase surface.  beta = 0 (lambda = 0) leaves the
    natural ``nu x H = 0`` wall.  beta = inf pins the tangential E to 0.
    """
    for c in range(3):
        layer = grid.boundary[c]
        if layer.size == 0:
            continue
        flat = state.E[c].reshape(-1)
        beta = layer.beta
        star = flat[layer.index]
        with np.errstate(invalid="ignore"):
            new = (star - beta * e_before[c]) / (1.0 + beta)
        new = np.where(np.isinf(beta), 0.0, new)
        flat[layer.index] = new
    return state


def observe(state: FieldState, grid: YeeGrid) -> np.ndarray:
    """s = integral over B of E, as dx^3 * sum of weighted stencil edges."""
    st = grid.source
    dv = grid.dx**3
    return np.array([dv * float(np.dot(st.weight[c], state.E[c].reshape(-1)[st.index[c]]))
                     for c in range(3)])


def step(state: FieldState, grid: YeeGrid, source: Optional[SourceSpec],
         backend=None) -> FieldState:
    """Advance (E^n, H^{n-1/2}) to (E^{n+1}, H^{n+1/2}) in place.

    The current ``f(t_{n+1/2}) chi_B a`` is injected with the E update.
    Obstacle-interior unknowns stay 0 because their coefficients are 0.
    """
    k = get_backend(backend) if not hasattr(backend, "update_h") else backend
    Ex, Ey, Ez = state.E
    Hx, Hy, Hz = state.H
    dx, dt = grid.dx, grid.dt
    mu, eps = grid.medium.mu, grid.medium.epsilon
    esum, hdot = k.update_h(Ex, Ey, Ez, Hx, Hy, Hz, *grid.hw, *grid.alpha, dt / (mu * dx))
    state.energy = 0.5 * dx**3 * (eps * esum + mu * hdot)

    e_before = [state.E[c].reshape(-1)[grid.boundary[c].index] for c in range(3)]
    k.update_e(Ex, Ey, Ez, Hx, Hy, Hz, *grid.hw, *grid.cb)
    if source is not None:
        f = source.pulse.drive((state.n + 0.5) * dt)
        if f != 0.0:
            st = grid.source
            for c in range(3):
                a_c = source.direction[c]
                if a_c == 0.0:
                    continue
                flat = state.E[c].reshape(-1)
                # cb * dx = dt / eps inside B (alpha = 1 there)
                flat[st.index[c]] += grid.cb[c].reshape(-1)[st.index[c]] * dx * f * a_c * st.weight[c]
    apply_impedance_bc(state, grid, e_before)
    state.n += 1
    return state


def current_energy(state: FieldState, grid: YeeGrid) -> float:
    """Leapfrog energy at the state's integer step without disturbing the state."""
    H = tuple(h.copy() for h in state.H)
    E = tuple(e.copy() for e in state.E)
    k = get_backend()
    dx, dt = grid.dx, grid.dt
    esum, hdot = k.update_h(*E, *H, *grid.hw, *grid.alpha, dt / (grid.medium.mu * dx))
    return 0.5 * dx**3 * (grid.medium.epsilon * esum + grid.medium.mu * hdot)


# ---------------------------------------------------------------------------
# records


@dataclass(eq=False)
class RunRecord:
    s_series: TimeSeriesMoment
    energy_series: np.ndarray
    label: str
    scenario_hash: str
    source_index: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.energy_series = np.asarray(self.energy_series, dtype=float)
        if self.energy_series.shape != self.s_series.times.shape:
            raise ValueError("energy and s series must share the time grid")

    @property
    def times(self) -> np.ndarray:
        return self.s_series.times

    @property
    def values(self) -> np.ndarray:
        return self.s_series.values

    def with_noise(self, std: float, seed: int = 0) -> "RunRecord":
        """Copy with i.i.d. Gaussian observation noise on s(t) (t > 0)."""
        if std < 0:
            raise ValueError("noise std must be >= 0")
        rng = np.random.default_rng(seed)
        v = self.values.copy()
        v[1:] += std * rng.standard_normal(v[1:].shape)
        meta = dict(self.meta, noise_std=std, noise_seed=seed)
        return RunRecord(TimeSeriesMoment(self.times, v, self.label), self.energy_series,
                         self.label, self.scenario_hash, self.source_index, meta)

    def truncated(self, T: float) -> "RunRecord":
        n = int(math.floor(T / self.s_series.dt + 1e-9))
        n = min(n, self.times.size - 1)
        sl = slice(0, n + 1)
        return RunRecord(TimeSeriesMoment(self.times[sl], self.values[sl], self.label),
                         self.energy_series[sl], self.label, self.scenario_hash,
                         self.source_index, dict(self.meta))

    # -- I/O ----------------------------------------------------------------

    def to_csv(self, path) -> Path:
        """Write ``t,sx,sy,sz,energy`` plus a ``.json`` metadata sidecar."""
        path = Path(path)
        data = np.column_stack([self.times, self.values, self.energy_series])
        np.savetxt(path, data, delimiter=",", header="t,sx,sy,sz,energy", comments="",
                   fmt="%.17g")
        side = {"label": self.label, "scenario_hash": self.scenario_hash,
                "source_index": self.source_index, **self.meta}
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(side, fh, indent=2, default=_jsonable)
        return path

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        side_path = path.with_suffix(".json")
        side = json.loads(side_path.read_text()) if side_path.exists() else {}
        label = side.pop("label", WITH_OBSTACLE)
        h = side.pop("scenario_hash", "")
        idx = int(side.pop("source_index", 0))
        return cls(TimeSeriesMoment(data[:, 0], data[:, 1:4], label), data[:, 4], label, h,
                   idx, side)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def pairing_hash(scenario: Scenario, grid: YeeGrid) -> str:
    """Hash of what a free-space reference must share with an obstacle run.

    That is the medium, the sources, and the lattice (origin, dims, dx, dt),
    but not the impedance.  So one free-space run serves every
    impedance variant of a geometry.
    """
    d = {"medium": [scenario.medium.epsilon, scenario.medium.mu],
         "sources": [s.to_dict() for s in scenario.sources],
         "lattice": [grid.dx, grid.dt, list(grid.dims), np.round(grid.origin, 12).tolist()]}
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def check_pair(rec: RunRecord, ref: RunRecord):
    """Obstacle and free-space records must come from the same sources and lattice."""
    h1 = rec.meta.get("pairing_hash", rec.scenario_hash)
    h2 = ref.meta.get("pairing_hash", ref.scenario_hash)
    if h1 != h2:
        raise RecordMismatchError(f"records come from different scenarios ({h1} vs {h2})")
    if rec.source_index != ref.source_index:
        raise RecordMismatchError("records belong to different source directions")
    n = min(rec.times.size, ref.times.size)
    if n < 2 or not np.allclose(rec.times[:n], ref.times[:n], rtol=1e-12, atol=0):
        raise RecordMismatchError("records do not share a time grid")


# ---------------------------------------------------------------------------
# driver


def run(scenario: Scenario, with_obstacle: bool = True, source_index: int = 0,
        grid: Optional[YeeGrid] = None, backend: Optional[str] = None,
        progress: Optional[Callable[[int, int], None]] = None) -> RunRecord:
    """Integrate to T and record s(t) and the leapfrog energy at every step."""
    if source_index not in (0, 1):
        raise ValueError("source_index must be 0 or 1")
    if grid is None:
        grid = build_grid(scenario, with_obstacle=with_obstacle)
    elif grid.has_obstacle != (with_obstacle and scenario.obstacle is not None):
        raise ValueError("grid obstacle flag does not match with_obstacle")
    kern = get_backend(backend)
    src = scenario.sources[source_index]
    N = scenario.n_steps
    state = new_state(grid)
    s = np.zeros((N + 1, 3))
    energy = np.zeros(N + 1)
    for n in range(N):
        step(state, grid, src, kern)
        energy[n] = state.energy
        s[n + 1] = observe(state, grid)
        if (n % _CHECK_EVERY == 0 or n == N - 1) and not (
                np.all(np.isfinite(s[n + 1])) and math.isfinite(energy[n])):
            raise SimulationError(
                f"non-finite field at step {n + 1} (t={(n + 1) * grid.dt:.6g}); "
                f"dt={grid.dt:.4g}, dx={grid.dx:.4g}; check CFL and lambda")
        if progress is not None:
            progress(n + 1, N)
    energy[N] = current_energy(state, grid)
    label = WITH_OBSTACLE if grid.has_obstacle else FREE_SPACE
    times = grid.dt * np.arange(N + 1)
    meta = {"dx": grid.dx, "dt": grid.dt, "dims": list(grid.dims),
            "origin": grid.origin.tolist(), "backend": kern.__name__.rsplit(".", 1)[-1],
            "n_boundary_edges": grid.n_boundary_edges, "T": float(times[-1]),
            "pairing_hash": pairing_hash(scenario, grid)}
    return RunRecord(TimeSeriesMoment(times, s, label), energy, label,
                     scenario.physics_hash(), source_index, meta)
