"""Brute-force validators, kept independent of the closed forms they check.

The volume-potential oracle integrates the modified-Helmholtz dyadic
Green's function over the ball directly, so it shares no code with the
mean-value closed form in :mod:`tdenclosure.analytic`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MediumParams, SourceSpec


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule over the ball.

    ``radial``/``polar`` are nodes per panel, ``panels`` splits both the
    radius and cos(theta) ranges, ``azimuth`` is the trapezoid count.
    """

    radial: int = 24
    polar: int = 24
    azimuth: int = 32
    panels: int = 4
    refinements: int = 1

    def __post_init__(self):
        if min(self.radial, self.polar, self.azimuth) < 4:
            raise ValueError("quadrature orders must be >= 4")

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.radial, self.polar, 2 * self.azimuth, 2 * self.panels,
                              self.refinements)


@dataclass(frozen=True)
class OracleValue:
    value: np.ndarray
    error_estimate: float
    converged: bool


def _composite(a, b, n, panels, grade=None):
    xg, wg = np.polynomial.legendre.leggauss(n)
    if grade is None:
        edges = np.linspace(a, b, panels + 1)
    else:
        # geometric panels clustered toward b
        s = np.geomspace(1.0, grade, panels + 1)
        s = (s - 1.0) / (grade - 1.0)
        edges = b - (b - a) * s[::-1]
        edges[0], edges[-1] = a, b
    lo, hi = edges[:-1], edges[1:]
    x = (0.5 * (hi - lo)[:, None] * xg + 0.5 * (hi + lo)[:, None]).ravel()
    w = (0.5 * (hi - lo)[:, None] * wg).ravel()
    return x, w


def _dyadic_kernel_times_a(z, a, k):
    """[G (1 + 1/(kz) + 1/(kz)^2) I - G (1 + 3/(kz) + 3/(kz)^2) zhat zhat] a."""
    r = np.linalg.norm(z, axis=-1)
    zh = z / r[..., None]
    kr = k * r
    G = np.exp(-kr) / (4.0 * np.pi * r)
    A = 1.0 + 1.0 / kr + 1.0 / kr**2
    B = 1.0 + 3.0 / kr + 3.0 / kr**2
    za = zh @ a
    return (G * A)[..., None] * a - (G * B * za)[..., None] * zh


def _ball_potential(x, source, tau, medium, f_tilde, spec):
    p, a, eta = source.center, source.direction, source.radius
    k = tau * medium.sqrt_mu_eps
    d = x - p
    R = np.linalg.norm(d)
    ez = d / R
    helper = np.array([1.0, 0.0, 0.0]) if abs(ez[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    ex = np.cross(helper, ez)
    ex /= np.linalg.norm(ex)
    ey = np.cross(ez, ex)
    r, wr = _composite(0.0, eta, spec.radial, spec.panels)
    c, wc = _composite(-1.0, 1.0, spec.polar, spec.panels, grade=8.0)
    ph = 2 * np.pi * np.arange(spec.azimuth) / spec.azimuth
    wph = 2 * np.pi / spec.azimuth
    s = np.sqrt(1.0 - c**2)
    dirs = (s[:, None, None] * np.cos(ph)[None, :, None] * ex
            + s[:, None, None] * np.sin(ph)[None, :, None] * ey
            + c[:, None, None] * ez)  # (nc, nph, 3)
    total = np.zeros(3)
    for ri, wri in zip(r, wr):
        y = p + ri * dirs
        kern = _dyadic_kernel_times_a(x - y, a, k)
        total += wri * ri**2 * wph * np.einsum("i,ijk->k", wc, kern)
    return medium.mu * tau * f_tilde * total


def volume_potential_oracle(x, source: SourceSpec, tau: float, medium: MediumParams,
                            f_tilde: float = 1.0, spec: QuadratureSpec = QuadratureSpec(),
                            rtol: float = 1e-8) -> OracleValue:
    """V_e^0(x) for x outside B by direct quadrature of the dyadic kernel.

    The error estimate is the change under one refinement (azimuth and
    panel counts doubled).
    """
    x = np.asarray(x, dtype=float)
    coarse = _ball_potential(x, source, tau, medium, f_tilde, spec)
    fine = _ball_potential(x, source, tau, medium, f_tilde, spec.refined())
    err = float(np.linalg.norm(fine - coarse) / max(np.linalg.norm(fine), 1e-300))
    return OracleValue(fine, err, err <= rtol)


# ---------------------------------------------------------------------------
# finite differences


def _unit(i):
    e = np.zeros(3)
    e[i] = 1.0
    return e


def fd_jacobian(field, x, h):
    """J[i, j] = d field_i / d x_j by central differences."""
    x = np.asarray(x, dtype=float)
    J = np.empty((3, 3))
    for j in range(3):
        e = h * _unit(j)
        J[:, j] = (np.asarray(field(x + e)) - np.asarray(field(x - e))) / (2 * h)
    return J


def fd_curl(field, x, h) -> np.ndarray:
    J = fd_jacobian(field, x, h)
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def fd_div(field, x, h) -> float:
    return float(np.trace(fd_jacobian(field, x, h)))


def fd_curlcurl(field, x, h) -> np.ndarray:
    """curl curl F = grad div F - laplacian F, all second-order stencils."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(field(x))
    lap = np.zeros(3)
    grad_div = np.zeros(3)
    fp = [np.asarray(field(x + h * _unit(i))) for i in range(3)]
    fm = [np.asarray(field(x - h * _unit(i))) for i in range(3)]
    for i in range(3):
        lap += (fp[i] - 2 * f0 + fm[i]) / h**2
    for i in range(3):
        for j in range(3):
            if i == j:
                grad_div[i] += (fp[i][i] - 2 * f0[i] + fm[i][i]) / h**2
            else:
                ei, ej = h * _unit(i), h * _unit(j)
                d = (np.asarray(field(x + ei + ej))[j] - np.asarray(field(x + ei - ej))[j]
                     - np.asarray(field(x - ei + ej))[j] + np.asarray(field(x - ei - ej))[j])
                grad_div[i] += d / (4 * h**2)
    return grad_div - lap


def reflection_1d(lambda_norm: float) -> float:
    """Normal-incidence reflection coefficient (L - 1)/(L + 1), L = lambda sqrt(mu/eps).

    Ratio of reflected to incident tangential *magnetic* field; the
    electric-field coefficient is its negative (-1 for a perfect conductor).
    """
    if lambda_norm < 0:
        raise ValueError("lambda must be >= 0")
    if np.isinf(lambda_norm):
        return 1.0
    return (lambda_norm - 1.0) / (lambda_norm + 1.0)
