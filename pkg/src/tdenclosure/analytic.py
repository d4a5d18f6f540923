"""Laplace-domain free-space field of the ball source and surface proxies.

The stationary field V solves ``(1/(mu eps)) curl curl V + tau^2 V = -f``
with ``f = -(tau/eps) f~ chi_B a``.  Writing ``k = tau sqrt(mu eps)`` and
``w = G * chi_B`` with ``G = exp(-k|z|)/(4 pi |z|)``, one gets

    V = mu tau f~ (I - k^-2 grad grad) (w a).

Outside B the mean-value property of the modified Helmholtz equation
collapses ``w`` to ``phi(k eta)/k^3 * exp(-k r)/r``; inside, ``w`` is the
regular radial solution matched in value and slope at ``r = eta``.

Exponentials in tau are combined in log space so that large tau does not
overflow: K(tau) grows like ``exp(k eta)`` while ``v`` decays like
``exp(-k r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import MediumParams, Sphere, SourceSpec, Obstacle, unit
from .errors import RegionError, UnsupportedGeometryError

_SERIES_CUTOFF = 1e-2


def phi(xi):
    """xi cosh(xi) - sinh(xi), with a Taylor series near 0."""
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0):
        raise ValueError("phi needs xi >= 0")
    small = x < _SERIES_CUTOFF
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        big = xl * np.cosh(xl) - np.sinh(xl)
    ser = xs**3 / 3.0 + xs**5 / 30.0 + xs**7 / 840.0
    out = np.where(small, ser, big)
    return float(out) if out.ndim == 0 else out


def log_phi(xi):
    """log(phi(xi)) for xi > 0 without overflow."""
    x = np.asarray(xi, dtype=float)
    mid = x < 20.0
    xm = np.where(mid, x, 1.0)
    xl = np.where(mid, 20.0, x)
    out_mid = np.log(phi(xm))
    out_big = xl - math.log(2.0) + np.log((xl - 1.0) + (xl + 1.0) * np.exp(-2.0 * xl))
    out = np.where(mid, out_mid, out_big)
    return float(out) if out.ndim == 0 else out


def _phi_over_cube(x):
    """phi(x)/x^3, finite at 0 (limit 1/3)."""
    x = np.asarray(x, dtype=float)
    small = x < 0.05
    xs = np.where(small, x, 0.0)
    xl = np.where(small, 1.0, x)
    ser = 1 / 3 + xs**2 / 30 + xs**4 / 840 + xs**6 / 45360
    return np.where(small, ser, phi(xl) / xl**3)


def _sinhc(x):
    x = np.asarray(x, dtype=float)
    small = x < 1e-3
    xl = np.where(small, 1.0, x)
    return np.where(small, 1 + x**2 / 6, np.sinh(xl) / xl)


def log_k_factor(tau, medium: MediumParams, eta: float):
    """log K(tau); K = mu tau phi(k eta) / k^3 with k = tau sqrt(mu eps)."""
    tau = np.asarray(tau, dtype=float)
    k = tau * medium.sqrt_mu_eps
    return np.log(medium.mu * tau) + log_phi(k * eta) - 3.0 * np.log(k)


def k_factor(tau, medium: MediumParams, eta: float):
    """K(tau) = mu tau phi(tau sqrt(mu eps) eta) / (tau sqrt(mu eps))^3.

    The eta inside phi is what makes the large-tau asymptote
    ``eta exp(tau eta sqrt(mu eps)) / (2 eps tau)`` hold.
    """
    out = np.exp(log_k_factor(tau, medium, eta))
    return float(out) if np.ndim(out) == 0 else out


def k_factor_asymptote(tau, medium: MediumParams, eta: float):
    tau = np.asarray(tau, dtype=float)
    return eta * np.exp(tau * eta * medium.sqrt_mu_eps) / (2.0 * medium.epsilon * tau)


def k_factor_ratio(tau, medium: MediumParams, eta: float):
    """K / asymptote, computed in log space; tends to 1 like 1 - 1/(k eta)."""
    tau = np.asarray(tau, dtype=float)
    log_asym = math.log(eta / (2.0 * medium.epsilon)) - np.log(tau) + tau * eta * medium.sqrt_mu_eps
    out = np.exp(log_k_factor(tau, medium, eta) - log_asym)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# the free-space field


@dataclass(frozen=True)
class Ve0Eval:
    value: np.ndarray
    curl: np.ndarray
    region: str  # "exterior" | "interior"


def _ve0_exterior_batch(x, p, a, eta, tau, medium, f_tilde):
    """Vectorised exterior field: x is (..., 3).  Returns (value, curl)."""
    d = x - p
    r = np.linalg.norm(d, axis=-1)
    rhat = d / r[..., None]
    k = tau * medium.sqrt_mu_eps
    kr = k * r
    A = 1.0 + 1.0 / kr + 1.0 / kr**2
    Bc = 1.0 + 3.0 / kr + 3.0 / kr**2
    scale = f_tilde * np.exp(log_k_factor(tau, medium, eta) - kr) / r  # K f~ v
    ar = rhat @ a
    value = scale[..., None] * (A[..., None] * a - (Bc * ar)[..., None] * rhat)
    curl = (-k * scale * (1.0 + 1.0 / kr))[..., None] * np.cross(rhat, a)
    return value, curl


def ve0_exterior(x, source: SourceSpec, tau: float, medium: MediumParams, f_tilde: float) -> Ve0Eval:
    """V_e^0 and its curl at a point outside the closed ball."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x - source.center)
    if r <= source.radius:
        raise RegionError(f"|x - p| = {r:g} <= eta; use ve0_interior")
    val, curl = _ve0_exterior_batch(x, source.center, source.direction, source.radius,
                                    tau, medium, f_tilde)
    return Ve0Eval(val, curl, "exterior")


def ve0_interior(x, source: SourceSpec, tau: float, medium: MediumParams, f_tilde: float) -> Ve0Eval:
    """V_e^0 anywhere, from the closed-form radial volume potential.

    Inside B: ``w(r) = 1/k^2 - (1 + k eta) exp(-k eta) sinh(k r)/(k^3 r)``.
    Points outside fall through to :func:`ve0_exterior`, which this
    expression matches in value and first derivative at ``r = eta``.
    """
    x = np.asarray(x, dtype=float)
    p, a, eta = source.center, source.direction, source.radius
    d = x - p
    r = float(np.linalg.norm(d))
    if r > eta:
        ev = ve0_exterior(x, source, tau, medium, f_tilde)
        return Ve0Eval(ev.value, ev.curl, "exterior")
    k = tau * medium.sqrt_mu_eps
    rhat = d / r if r > 0 else (np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0]))
    D0 = (1.0 + k * eta) * math.exp(-k * eta) / k**3
    xi = k * r
    w = 1.0 / k**2 - D0 * k * float(_sinhc(xi))
    # w'/r and w'' with the 1/r singularities removed analytically
    psi = float(_phi_over_cube(xi))
    w1_over_r = -D0 * k**3 * psi
    w2 = -D0 * k**3 * (float(_sinhc(xi)) - 2.0 * psi)
    w1 = w1_over_r * r
    ar = float(rhat @ a)
    gg_a = w2 * ar * rhat + w1_over_r * (a - ar * rhat)
    pref = medium.mu * tau * f_tilde
    value = pref * (w * a - gg_a / k**2)
    curl = pref * w1 * np.cross(rhat, a)
    return Ve0Eval(value, curl, "interior")


def ve0_ball_integral(source: SourceSpec, tau, medium: MediumParams, f_tilde):
    """Integral of V_e^0 over B (closed form); shape (3,) or (ntau, 3).

    ``mu tau f~ (4 pi / k^2) [eta^3/3 - (2/3)(1 + k eta) exp(-k eta) phi(k eta)/k^3] a``
    """
    tau = np.asarray(tau, dtype=float)
    eta = source.radius
    k = tau * medium.sqrt_mu_eps
    xi = k * eta
    # (1 + xi) e^{-xi} phi(xi) / k^3, with phi/xi^3 to stay accurate at small xi
    tail = (1.0 + xi) * np.exp(-xi) * _phi_over_cube(xi) * eta**3
    bracket = eta**3 / 3.0 - (2.0 / 3.0) * tail
    mag = medium.mu * tau * np.asarray(f_tilde, dtype=float) * 4.0 * np.pi / k**2 * bracket
    return np.multiply.outer(mag, source.direction)


# ---------------------------------------------------------------------------
# surface algebra


@dataclass(frozen=True)
class SurfaceFrame:
    x: np.ndarray
    nu: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    nu_a: float
    nu_r: float
    a_r: float


def surface_frame(x, nu, p, a) -> SurfaceFrame:
    """X = nu x (a x nu), Y = nu x (rhat x nu) at a surface point."""
    x = np.asarray(x, dtype=float)
    nu = unit(nu, tol=1e-10)
    a = np.asarray(a, dtype=float)
    d = x - np.asarray(p, dtype=float)
    rhat = d / np.linalg.norm(d)
    X = np.cross(nu, np.cross(a, nu))
    Y = np.cross(nu, np.cross(rhat, nu))
    return SurfaceFrame(x, nu, X, Y, float(nu @ a), float(nu @ rhat), float(a @ rhat))


@dataclass(frozen=True)
class ProxyCoeffs:
    A: float
    B: float
    P: float
    Q: float
    c: float


def _pq_batch(r, nu_r, nu_a, a_r, lam, tau, medium):
    k = tau * medium.sqrt_mu_eps
    kr = k * r
    A = 1.0 + 1.0 / kr + 1.0 / kr**2
    Bc = 1.0 + 3.0 / kr + 3.0 / kr**2
    g = 1.0 + 1.0 / kr
    z = medium.impedance_threshold
    P = lam * A + z * g * nu_r
    Q = lam * Bc * a_r + z * g * nu_a
    return A, Bc, P, Q, tau * medium.mu * lam


def pq_coeffs(x, nu, p, a, lambda_at_x: float, tau: float, medium: MediumParams) -> ProxyCoeffs:
    """Coefficients of ``c nu x (V x nu) - (curl V) x nu = K f~ tau mu v (P X - Q Y)``."""
    fr = surface_frame(x, nu, p, a)
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(p, dtype=float)))
    A, Bc, P, Q, c = _pq_batch(r, fr.nu_r, fr.nu_a, fr.a_r, float(lambda_at_x), tau, medium)
    return ProxyCoeffs(float(A), float(Bc), float(P), float(Q), float(c))


# ---------------------------------------------------------------------------
# sphere surface quadrature


@lru_cache(maxsize=32)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def sphere_quadrature(sphere: Sphere, toward, n_theta: int = 32, n_phi: int = 64):
    """Nodes, outward normals and weights on a sphere.

    Gauss-Legendre in cos(theta) times the periodic trapezoid in azimuth,
    with the pole pointing at ``toward`` so the part of the surface nearest
    the source sits at the polar cap.
    """
    ez = np.asarray(toward, dtype=float) - sphere.center
    ez = ez / np.linalg.norm(ez)
    helper = np.array([1.0, 0.0, 0.0]) if abs(ez[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    ex = np.cross(helper, ez)
    ex /= np.linalg.norm(ex)
    ey = np.cross(ez, ex)
    ct, wt = _gauss_legendre(n_theta)
    st = np.sqrt(1.0 - ct**2)
    ph = 2.0 * np.pi * np.arange(n_phi) / n_phi
    nu = (st[:, None, None] * np.cos(ph)[None, :, None] * ex
          + st[:, None, None] * np.sin(ph)[None, :, None] * ey
          + ct[:, None, None] * ez).reshape(-1, 3)
    w = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi) * sphere.radius**2
    return sphere.center + sphere.radius * nu, nu, w


def _proxy_integrand(kind, x, nu, lam, source, tau, medium, f_tilde):
    p, a = source.center, source.direction
    d = x - p
    r = np.linalg.norm(d, axis=1)
    rhat = d / r[:, None]
    nu_r = np.einsum("ij,ij->i", nu, rhat)
    nu_a = nu @ a
    a_r = rhat @ a
    X = a[None, :] - nu_a[:, None] * nu
    Y = rhat - nu_r[:, None] * nu
    A, Bc, P, Q, c = _pq_batch(r, nu_r, nu_a, a_r, lam, tau, medium)
    k = tau * medium.sqrt_mu_eps
    PXQY = P[:, None] * X - Q[:, None] * Y
    # K^2 v^2 in log space
    kv2 = np.exp(2.0 * (log_k_factor(tau, medium, source.radius) - k * r - np.log(r)))
    f2 = f_tilde * f_tilde
    if kind == "je":
        other = nu_r[:, None] * X - nu_a[:, None] * Y
        body = -(tau**2) * medium.mu * medium.sqrt_mu_eps * kv2 * f2 * (1.0 + 1.0 / (k * r))
        return body * np.einsum("ij,ij->i", PXQY, other) / c
    other = A[:, None] * X - (Bc * a_r)[:, None] * Y
    return tau * medium.mu * kv2 * f2 * np.einsum("ij,ij->i", PXQY, other)


def _proxy(kind, tau, obstacle, source, medium, f_tilde, orders):
    if not isinstance(obstacle.shape, Sphere):
        raise UnsupportedGeometryError("surface proxies are implemented for spheres only")
    x, nu, w = sphere_quadrature(obstacle.shape, source.center, *orders)
    lam = obstacle.lam(x)
    if kind == "je" and np.any(lam <= 0):
        raise ValueError("je proxy needs lambda > 0 on the surface")
    vals = _proxy_integrand(kind, x, nu, lam, source, tau, medium, f_tilde)
    # fixed summation order keeps the result bit-reproducible
    return float(np.sum(w * vals)) / (medium.mu * medium.epsilon)


def je_proxy(tau, obstacle: Obstacle, source: SourceSpec, medium: MediumParams, f_tilde,
             orders=(32, 64)) -> float:
    """Leading surface term of J~_e(tau), built from V_e^0 on the sphere."""
    return _proxy("je", tau, obstacle, source, medium, f_tilde, orders)


def je_plus_proxy(tau, obstacle: Obstacle, source: SourceSpec, medium: MediumParams, f_tilde,
                  orders=(32, 64)) -> float:
    """Leading surface term of ``J~_e + (1/(mu eps)) int c |V_em|^2 dS``."""
    return _proxy("je_plus", tau, obstacle, source, medium, f_tilde, orders)


def proxy_self_consistency(kind, tau, obstacle, source, medium, f_tilde, orders=(32, 64)) -> float:
    """Relative change of a proxy when both quadrature orders are doubled."""
    lo = _proxy(kind, tau, obstacle, source, medium, f_tilde, orders)
    hi = _proxy(kind, tau, obstacle, source, medium, f_tilde, (2 * orders[0], 2 * orders[1]))
    return abs(hi - lo) / max(abs(hi), 1e-300)


def direct_proxy_integrand(kind, x, nu, lam, source, tau, medium, f_tilde):
    """Same integrand as the P/Q form, assembled from the raw vector fields.

    Used to check the P/Q algebra; not on the hot path.
    """
    val, curl = _ve0_exterior_batch(np.asarray(x, float), source.center, source.direction,
                                    source.radius, tau, medium, f_tilde)
    nu = np.asarray(nu, float)
    c = tau * medium.mu * np.asarray(lam, dtype=float)
    tan_v = np.cross(nu, np.cross(val, nu))
    curl_x_nu = np.cross(curl, nu)
    lead = c[..., None] * tan_v - curl_x_nu
    if kind == "je":
        return np.sum(lead * curl_x_nu, axis=-1) / c
    return np.sum(lead * tan_v, axis=-1)
