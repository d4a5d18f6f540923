# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused Yee updates.  Index conventions match ``_fallback.py``."""

__version__ = "1.0"


def update_h(double[:, :, ::1] Ex, double[:, :, ::1] Ey, double[:, :, ::1] Ez,
             double[:, :, ::1] Hx, double[:, :, ::1] Hy, double[:, :, ::1] Hz,
             double[:, :, ::1] hwx, double[:, :, ::1] hwy, double[:, :, ::1] hwz,
             double[:, :, ::1] wEx, double[:, :, ::1] wEy, double[:, :, ::1] wEz,
             double ch):
    """H -= ch * curl E on active faces.

    Returns ``(sum wE E^2, sum hw H_old H_new)``, the two halves of the
    leapfrog energy at the current integer step.
    """
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t nx = Ex.shape[0], ny = Ey.shape[1], nz = Ez.shape[2]
    cdef double old, new, w, curl
    cdef double hdot = 0.0, esum = 0.0, e

    for i in range(Ex.shape[0]):
        for j in range(Ex.shape[1]):
            for k in range(Ex.shape[2]):
                e = Ex[i, j, k]
                esum += wEx[i, j, k] * e * e
    for i in range(Ey.shape[0]):
        for j in range(Ey.shape[1]):
            for k in range(Ey.shape[2]):
                e = Ey[i, j, k]
                esum += wEy[i, j, k] * e * e
    for i in range(Ez.shape[0]):
        for j in range(Ez.shape[1]):
            for k in range(Ez.shape[2]):
                e = Ez[i, j, k]
                esum += wEz[i, j, k] * e * e

    for i in range(nx + 1):
        for j in range(ny):
            for k in range(nz):
                w = hwx[i, j, k]
                if w > 0.0:
                    old = Hx[i, j, k]
                    curl = (Ez[i, j + 1, k] - Ez[i, j, k]) - (Ey[i, j, k + 1] - Ey[i, j, k])
                    new = old - ch * curl
                    Hx[i, j, k] = new
                    hdot += w * old * new
    for i in range(nx):
        for j in range(ny + 1):
            for k in range(nz):
                w = hwy[i, j, k]
                if w > 0.0:
                    old = Hy[i, j, k]
                    curl = (Ex[i, j, k + 1] - Ex[i, j, k]) - (Ez[i + 1, j, k] - Ez[i, j, k])
                    new = old - ch * curl
                    Hy[i, j, k] = new
                    hdot += w * old * new
    for i in range(nx):
        for j in range(ny):
            for k in range(nz + 1):
                w = hwz[i, j, k]
                if w > 0.0:
                    old = Hz[i, j, k]
                    curl = (Ey[i + 1, j, k] - Ey[i, j, k]) - (Ex[i, j + 1, k] - Ex[i, j, k])
                    new = old - ch * curl
                    Hz[i, j, k] = new
                    hdot += w * old * new
    return esum, hdot


def update_e(double[:, :, ::1] Ex, double[:, :, ::1] Ey, double[:, :, ::1] Ez,
             double[:, :, ::1] Hx, double[:, :, ::1] Hy, double[:, :, ::1] Hz,
             double[:, :, ::1] hwx, double[:, :, ::1] hwy, double[:, :, ::1] hwz,
             double[:, :, ::1] cbx, double[:, :, ::1] cby, double[:, :, ::1] cbz):
    """E += cb curl(hw H) on interior edges; cb == 0 pins the edge (outer PEC edges untouched)."""
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t nx = Ex.shape[0], ny = Ey.shape[1], nz = Ez.shape[2]
    cdef double curl, cb

    for i in range(nx):
        for j in range(1, ny):
            for k in range(1, nz):
                cb = cbx[i, j, k]
                if cb != 0.0:
                    curl = ((hwz[i, j, k] * Hz[i, j, k] - hwz[i, j - 1, k] * Hz[i, j - 1, k])
                            - (hwy[i, j, k] * Hy[i, j, k] - hwy[i, j, k - 1] * Hy[i, j, k - 1]))
                    Ex[i, j, k] += cb * curl
                else:
                    Ex[i, j, k] = 0.0
    for i in range(1, nx):
        for j in range(ny):
            for k in range(1, nz):
                cb = cby[i, j, k]
                if cb != 0.0:
                    curl = ((hwx[i, j, k] * Hx[i, j, k] - hwx[i, j, k - 1] * Hx[i, j, k - 1])
                            - (hwz[i, j, k] * Hz[i, j, k] - hwz[i - 1, j, k] * Hz[i - 1, j, k]))
                    Ey[i, j, k] += cb * curl
                else:
                    Ey[i, j, k] = 0.0
    for i in range(1, nx):
        for j in range(1, ny):
            for k in range(nz):
                cb = cbz[i, j, k]
                if cb != 0.0:
                    curl = ((hwy[i, j, k] * Hy[i, j, k] - hwy[i - 1, j, k] * Hy[i - 1, j, k])
                            - (hwx[i, j, k] * Hx[i, j, k] - hwx[i, j - 1, k] * Hx[i, j - 1, k]))
                    Ez[i, j, k] += cb * curl
                else:
                    Ez[i, j, k] = 0.0
