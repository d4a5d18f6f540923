"""Pure numpy versions of the Yee kernels (same signatures as ``_yee``)."""

import numpy as np

__version__ = "1.0"


def _edge_energy(E, w):
    return float(np.einsum("ijk,ijk,ijk->", w, E, E))


def update_h(Ex, Ey, Ez, Hx, Hy, Hz, hwx, hwy, hwz, wEx, wEy, wEz, ch):
    """H -= ch * curl E on faces with hw > 0.  Returns (sum wE E^2, sum hw H_old H_new)."""
    esum = _edge_energy(Ex, wEx) + _edge_energy(Ey, wEy) + _edge_energy(Ez, wEz)
    hdot = 0.0
    for H, hw, curl in (
        (Hx, hwx, (Ez[:, 1:, :] - Ez[:, :-1, :]) - (Ey[:, :, 1:] - Ey[:, :, :-1])),
        (Hy, hwy, (Ex[:, :, 1:] - Ex[:, :, :-1]) - (Ez[1:, :, :] - Ez[:-1, :, :])),
        (Hz, hwz, (Ey[1:, :, :] - Ey[:-1, :, :]) - (Ex[:, 1:, :] - Ex[:, :-1, :])),
    ):
        active = hw > 0.0
        new = np.where(active, H - ch * curl, H)
        hdot += float(np.einsum("ijk,ijk,ijk->", hw, H, new))
        H[...] = new
    return esum, hdot


def update_e(Ex, Ey, Ez, Hx, Hy, Hz, hwx, hwy, hwz, cbx, cby, cbz):
    """E += cb curl(hw H) on interior edges; cb == 0 pins the edge to 0."""
    WHx, WHy, WHz = hwx * Hx, hwy * Hy, hwz * Hz
    ix = (slice(None), slice(1, -1), slice(1, -1))
    cx = (WHz[:, 1:, 1:-1] - WHz[:, :-1, 1:-1]) - (WHy[:, 1:-1, 1:] - WHy[:, 1:-1, :-1])
    iy = (slice(1, -1), slice(None), slice(1, -1))
    cy = (WHx[1:-1, :, 1:] - WHx[1:-1, :, :-1]) - (WHz[1:, :, 1:-1] - WHz[:-1, :, 1:-1])
    iz = (slice(1, -1), slice(1, -1), slice(None))
    cz = (WHy[1:, 1:-1, :] - WHy[:-1, 1:-1, :]) - (WHx[1:-1, 1:, :] - WHx[1:-1, :-1, :])
    for E, cb, idx, curl in ((Ex, cbx, ix, cx), (Ey, cby, iy, cy), (Ez, cbz, iz, cz)):
        b = cb[idx]
        E[idx] = np.where(b != 0.0, E[idx] + b * curl, 0.0)
