"""Yee lattice construction: sizing, voxelization and per-edge coefficients.

Layout (``nx, ny, nz`` cells, node ``(i, j, k)`` at ``origin + dx*(i, j, k)``)::

    Ex (nx,   ny+1, nz+1)   at (i+1/2, j,     k    )
    Ey (nx+1, ny,   nz+1)   at (i,     j+1/2, k    )
    Ez (nx+1, ny+1, nz  )   at (i,     j,     k+1/2)
    Hx (nx+1, ny,   nz  )   at (i,     j+1/2, k+1/2)
    Hy (nx,   ny+1, nz  )   at (i+1/2, j,     k+1/2)
    Hz (nx,   ny,   nz+1)   at (i+1/2, j+1/2, k    )

Tangential E on the outer faces is held at zero (PEC closure).

The obstacle is voxelized by cell centres.  Every E edge touches four
cells and every H face separates two; the fraction of those that lie
outside the obstacle gives the edge weight ``alpha`` (0, 1/4, ..., 1) and
the face weight ``hw`` (0, 1/2, 1).  Zero-weight unknowns are pinned to 0.
Edges with 0 < alpha < 1 form the boundary layer; each carries the
surface length of its dual cell (``dx/2`` per arm crossing the staircase
surface), which is where the impedance loss acts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import MediumParams, Scenario
from ..errors import ScenarioError, SizingError

COMPONENTS = ("x", "y", "z")

# cell-offsets (da, db) of the four cells around an edge, in the plane
# spanned by the two axes orthogonal to the edge
_QUAD = ((-1, -1), (0, -1), (-1, 0), (0, 0))
_SUPERSAMPLE = 8


def e_shape(c: int, dims) -> tuple:
    return tuple(n + (0 if a == c else 1) for a, n in enumerate(dims))


def h_shape(c: int, dims) -> tuple:
    return tuple(n + (1 if a == c else 0) for a, n in enumerate(dims))


def e_offset(c: int) -> np.ndarray:
    off = np.zeros(3)
    off[c] = 0.5
    return off


def h_offset(c: int) -> np.ndarray:
    off = np.full(3, 0.5)
    off[c] = 0.0
    return off


@dataclass
class BoundaryLayer:
    """Impedance edges of one E component (flat indices into that array)."""

    index: np.ndarray
    lam: np.ndarray
    n_ext: np.ndarray
    n_arms: np.ndarray
    normal: np.ndarray  # staircase-adjacent surface normal (from projection)
    beta: np.ndarray = None  # filled by impedance_coefficients

    @property
    def size(self) -> int:
        return int(self.index.size)


@dataclass
class SourceStencil:
    """Edges whose dual cube meets B, with the fraction of it inside B."""

    index: tuple  # per component: flat indices
    weight: tuple  # per component: volume fractions in (0, 1]

    @property
    def volume_fraction_total(self) -> np.ndarray:
        return np.array([w.sum() for w in self.weight])


@dataclass
class YeeGrid:
    dx: float
    dims: tuple
    origin: np.ndarray
    medium: MediumParams
    dt: float
    cell_mask: np.ndarray  # int8: 0 exterior, 1 obstacle, 2 boundary layer
    hw: tuple  # H face weights per component
    alpha: tuple  # E edge weights per component
    cb: tuple  # dt / (eps alpha dx), 0 on pinned and PEC edges
    boundary: tuple  # BoundaryLayer per component
    source: SourceStencil
    has_obstacle: bool = False
    meta: dict = field(default_factory=dict)

    EXTERIOR, OBSTACLE, BOUNDARY_LAYER = 0, 1, 2

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def box(self):
        lo = self.origin
        return lo, lo + self.dx * np.asarray(self.dims)

    @property
    def n_boundary_edges(self) -> int:
        return sum(b.size for b in self.boundary)

    def edge_points(self, c: int) -> np.ndarray:
        shp = e_shape(c, self.dims)
        return _lattice_points(self.origin, self.dx, shp, e_offset(c))

    def memory_bytes(self) -> int:
        per = sum(np.prod(e_shape(c, self.dims)) + np.prod(h_shape(c, self.dims)) for c in range(3))
        return int(per * 8 * 4)  # fields + hw + alpha + cb


def _lattice_points(origin, dx, shape, offset):
    axes = [origin[a] + dx * (np.arange(shape[a]) + offset[a]) for a in range(3)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack(g, axis=-1)


# ---------------------------------------------------------------------------
# sizing


def minimal_box(scenario: Scenario):
    """Smallest axis-aligned box keeping the outer wall c*T/2 away from B and D."""
    clearance = 0.5 * scenario.medium.wave_speed * scenario.time.T
    src = scenario.source
    lo = src.center - src.radius - clearance
    hi = src.center + src.radius + clearance
    if scenario.obstacle is not None:
        oc, orad = scenario.obstacle.shape.bounding_sphere()
        lo = np.minimum(lo, oc - orad - clearance)
        hi = np.maximum(hi, oc + orad + clearance)
    return lo, hi


def _snap_box(lo, hi, anchor, dx):
    """Grow [lo, hi] outward so that ``anchor`` sits on a lattice node."""
    n_lo = np.ceil((anchor - lo) / dx - 1e-9).astype(int)
    n_hi = np.ceil((hi - anchor) / dx - 1e-9).astype(int)
    origin = anchor - n_lo * dx
    dims = tuple(int(v) for v in (n_lo + n_hi))
    return origin, dims


def plan_box(scenario: Scenario, enforce_clearance: bool = True):
    """(origin, dims) for the scenario, raising SizingError if a given box is too small.

    ``enforce_clearance=False`` accepts any given box.  The wall may then
    reflect waves back into B before T.  That is fine for
    solver-internal checks such as energy laws, but not for
    indicator data.
    """
    lo_min, hi_min = minimal_box(scenario)
    if scenario.grid.box is not None and not enforce_clearance:
        lo, hi = (np.asarray(v, dtype=float) for v in scenario.grid.box)
    elif scenario.grid.box is not None:
        lo, hi = (np.asarray(v, dtype=float) for v in scenario.grid.box)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(hi - lo))))
        if np.any(lo > lo_min + tol) or np.any(hi < hi_min - tol):
            raise SizingError(
                "box violates the clearance rule (outer wall closer than c*T/2 to B or the "
                f"obstacle); minimal box lo={np.round(lo_min, 6).tolist()} "
                f"hi={np.round(hi_min, 6).tolist()}",
                minimal_box=(lo_min, hi_min))
    else:
        lo, hi = lo_min, hi_min
    return _snap_box(lo, hi, scenario.source.center, scenario.grid.dx)


# ---------------------------------------------------------------------------
# geometry


def _voxelize(scenario: Scenario, origin, dims, dx, with_obstacle: bool) -> np.ndarray:
    obst = np.zeros(dims, dtype=bool)
    if not with_obstacle or scenario.obstacle is None:
        return obst
    shape = scenario.obstacle.shape
    oc, orad = shape.bounding_sphere()
    # restrict evaluation to the bounding box of the obstacle
    lo_idx = np.clip(np.floor((oc - orad - origin) / dx).astype(int) - 1, 0, dims)
    hi_idx = np.clip(np.ceil((oc + orad - origin) / dx).astype(int) + 1, 0, dims)
    sub = tuple(slice(lo_idx[a], hi_idx[a]) for a in range(3))
    sub_dims = tuple(int(hi_idx[a] - lo_idx[a]) for a in range(3))
    if min(sub_dims) <= 0:
        return obst
    centres = _lattice_points(origin + dx * lo_idx, dx, sub_dims, np.full(3, 0.5))
    obst[sub] = shape.sdf(centres.reshape(-1, 3)).reshape(sub_dims) < 0.0
    return obst


def _face_weights(obst: np.ndarray, c: int) -> np.ndarray:
    """Exterior fraction of the two cells adjacent to each H_c face."""
    ext = (~obst).astype(np.float64)
    pad = [(0, 0)] * 3
    pad[c] = (1, 1)
    ext = np.pad(ext, pad, constant_values=1.0)  # cells beyond the wall count as exterior
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[c] = slice(0, -1)
    hi[c] = slice(1, None)
    return 0.5 * (ext[tuple(lo)] + ext[tuple(hi)])


def _edge_quads(obst: np.ndarray, c: int):
    """The four cells around each E_c edge as boolean arrays (obstacle flags)."""
    a1, a2 = [a for a in range(3) if a != c]
    pad = [(0, 0)] * 3
    pad[a1] = (1, 1)
    pad[a2] = (1, 1)
    p = np.pad(obst, pad, constant_values=False)
    shp = e_shape(c, obst.shape)
    quads = []
    for d1, d2 in _QUAD:
        sl = [slice(None)] * 3
        sl[a1] = slice(1 + d1, 1 + d1 + shp[a1])
        sl[a2] = slice(1 + d2, 1 + d2 + shp[a2])
        quads.append(p[tuple(sl)])
    return quads


def _pec_mask(c: int, dims) -> np.ndarray:
    """True on E_c edges lying on the outer wall (tangential, held at 0)."""
    shp = e_shape(c, dims)
    m = np.zeros(shp, dtype=bool)
    for a in range(3):
        if a == c:
            continue
        sl = [slice(None)] * 3
        sl[a] = 0
        m[tuple(sl)] = True
        sl[a] = shp[a] - 1
        m[tuple(sl)] = True
    return m


def _source_stencil(scenario: Scenario, origin, dims, dx) -> SourceStencil:
    src = scenario.source
    p, eta = src.center, src.radius
    m = _SUPERSAMPLE
    sub = (np.arange(m) + 0.5) / m - 0.5
    sx, sy, sz = np.meshgrid(sub, sub, sub, indexing="ij")
    offsets = dx * np.stack([sx.ravel(), sy.ravel(), sz.ravel()], axis=1)
    idx_all, w_all = [], []
    reach = eta + dx
    for c in range(3):
        shp = e_shape(c, dims)
        off = e_offset(c)
        lo = np.clip(np.floor((p - reach - origin) / dx - off).astype(int), 0, np.asarray(shp) - 1)
        hi = np.clip(np.ceil((p + reach - origin) / dx - off).astype(int) + 1, 0, np.asarray(shp))
        ranges = [np.arange(lo[a], hi[a]) for a in range(3)]
        I, J, K = np.meshgrid(*ranges, indexing="ij")
        I, J, K = I.ravel(), J.ravel(), K.ravel()
        pts = origin + dx * (np.stack([I, J, K], axis=1) + off)
        d = np.linalg.norm(pts - p, axis=1)
        half_diag = 0.5 * math.sqrt(3.0) * dx
        w = np.zeros(len(pts))
        w[d <= eta - half_diag] = 1.0
        partial = (d > eta - half_diag) & (d < eta + half_diag)
        if np.any(partial):
            q = pts[partial][:, None, :] + offsets[None, :, :]
            inside = np.linalg.norm(q - p, axis=-1) < eta
            w[partial] = inside.mean(axis=1)
        keep = w > 0
        flat = np.ravel_multi_index((I[keep], J[keep], K[keep]), shp)
        order = np.argsort(flat)
        idx_all.append(flat[order])
        w_all.append(w[keep][order])
    return SourceStencil(tuple(idx_all), tuple(w_all))


def _boundary_layer(scenario, obst, c, origin, dx, pec) -> tuple:
    quads = _edge_quads(obst, c)
    n_ext = sum((~q).astype(np.int8) for q in quads)
    c00, c10, c01, c11 = quads
    n_arms = ((c10 != c11).astype(np.int8) + (c00 != c01) + (c01 != c11) + (c00 != c10))
    alpha = n_ext / 4.0
    is_b = (n_arms > 0) & (n_ext > 0) & ~pec
    flat = np.flatnonzero(is_b)
    if flat.size and scenario.obstacle is not None:
        ijk = np.stack(np.unravel_index(flat, is_b.shape), axis=1)
        pts = origin + dx * (ijk + e_offset(c))
        surf, normal = scenario.obstacle.shape.project(pts)
        lam = np.asarray(scenario.obstacle.lam(surf), dtype=float).reshape(-1)
    else:
        normal = np.zeros((0, 3))
        lam = np.zeros(0)
    if np.any(lam < 0) or not np.all(np.isfinite(lam) | (lam == np.inf)):
        raise ScenarioError("impedance lambda must be >= 0 on every boundary edge")
    layer = BoundaryLayer(flat, lam, n_ext.ravel()[flat].astype(np.int8),
                          n_arms.ravel()[flat].astype(np.int8), normal)
    return alpha, layer


def impedance_coefficients(layer: BoundaryLayer, medium: MediumParams, dt: float,
                           dx: float) -> np.ndarray:
    """beta = lambda * L_surf * dt / (2 eps alpha dx^2) for each boundary edge.

    With ``L_surf = n_arms dx / 2`` and ``alpha = n_ext / 4`` this is
    ``lambda n_arms dt / (eps n_ext dx)``.  The loss term is applied
    Crank-Nicolson style (see :func:`tdenclosure.solver.fdtd.apply_impedance_bc`).
    """
    n_ext = layer.n_ext.astype(float)
    with np.errstate(invalid="ignore"):
        beta = layer.lam * layer.n_arms * dt / (medium.epsilon * n_ext * dx)
    return beta


def build_grid(scenario: Scenario, with_obstacle: bool = True,
               enforce_clearance: bool = True) -> YeeGrid:
    """Lattice, masks and update coefficients for one run.

    The box depends only on the scenario, so the obstacle and free-space
    runs share exactly the same lattice and source stencil.
    """
    scenario.validate()
    dx = scenario.grid.dx
    dt = scenario.dt
    if dt > scenario.cfl_limit * (1 + 1e-12):
        raise ScenarioError("dt violates the CFL bound")
    origin, dims = plan_box(scenario, enforce_clearance)
    use_obst = with_obstacle and scenario.obstacle is not None
    obst = _voxelize(scenario, origin, dims, dx, use_obst)
    eps = scenario.medium.epsilon

    hw = tuple(_face_weights(obst, c) for c in range(3))
    alphas, cbs, layers = [], [], []
    for c in range(3):
        pec = _pec_mask(c, dims)
        alpha, layer = _boundary_layer(scenario, obst, c, origin, dx, pec)
        alpha = np.where(pec, 0.0, alpha)
        with np.errstate(divide="ignore"):
            cb = np.where(alpha > 0, dt / (eps * dx * np.where(alpha > 0, alpha, 1.0)), 0.0)
        layer.beta = impedance_coefficients(layer, scenario.medium, dt, dx)
        alphas.append(np.ascontiguousarray(alpha))
        cbs.append(np.ascontiguousarray(cb))
        layers.append(layer)

    cell_mask = obst.astype(np.int8)
    if use_obst:
        # exterior cells sharing a face with an obstacle cell
        near = np.zeros_like(obst)
        for a in range(3):
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[a] = slice(0, -1)
            sl_hi[a] = slice(1, None)
            near[tuple(sl_lo)] |= obst[tuple(sl_hi)]
            near[tuple(sl_hi)] |= obst[tuple(sl_lo)]
        cell_mask[near & ~obst] = YeeGrid.BOUNDARY_LAYER

    stencil = _source_stencil(scenario, origin, dims, dx)
    for c in range(3):
        if np.any(alphas[c].ravel()[stencil.index[c]] < 1.0):
            raise ScenarioError("source stencil touches the obstacle or the outer wall")

    return YeeGrid(dx=dx, dims=dims, origin=origin, medium=scenario.medium, dt=dt,
                   cell_mask=cell_mask, hw=tuple(np.ascontiguousarray(h) for h in hw),
                   alpha=tuple(alphas), cb=tuple(cbs), boundary=tuple(layers),
                   source=stencil, has_obstacle=use_obst,
                   meta={"n_obstacle_cells": int(obst.sum())})
