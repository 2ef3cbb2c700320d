"""Wavenumber-domain integration.

Every radiation integral in the package is reduced to the 2D form

    (1/(2pi)^3) iiint Gt(k) A(k) exp(j k.r) d^3k
        = j*pi/(2pi)^3 iint A(k_pm) exp(j k_pm.r) / kz  dkx dky

(``Gt(k) = 1/(|k|^2 - k0^2)``, observer outside the source slab), where
``k_pm = (kx, ky, +-kz)`` picks the half space of the observer.

The ``1/kz`` ring singularity at ``|k_perp| = k0`` is removed exactly by the
substitutions ``rho = k0 sin t`` (propagating disk) and ``rho = k0 cosh u``
(evanescent annulus), both of which turn ``rho drho / kz`` into a smooth
measure.  A limiting-absorption scheme (``k0 -> k0 (1 + j delta)`` with a
node-free annulus) is kept as an alternative.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .em_core import FrequencyContext, kz_branch
from .errors import NonConvergent

_GL_ORDER = 16


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def composite_gauss_legendre(a: float, b: float, n: int, order: int = _GL_ORDER):
    """Nodes/weights of a composite Gauss-Legendre rule with about ``n`` nodes."""
    panels = max(1, int(np.ceil(n / order)))
    x0, w0 = _gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


@dataclass(frozen=True)
class SpectralGrid:
    """Polar discretization of the truncated transverse wavenumber plane.

    ``n_radial`` nodes are used in each of the two radial regions
    (propagating disk and evanescent annulus); ``n_angular`` trapezoid
    nodes cover the full turn.
    """

    k_max_factor: float = 3.0
    n_radial: int = 256
    n_angular: int = 256
    loss_delta: float = 1e-5
    rel_tol: float = 1e-3
    scheme: str = "substitution"

    def __post_init__(self):
        if not self.k_max_factor > 1.0:
            raise ValueError("k_max_factor must exceed 1")
        if self.n_radial < 8 or self.n_angular < 8:
            raise ValueError("n_radial and n_angular must be >= 8")
        if not 0.0 < self.loss_delta < 1e-2:
            raise ValueError("loss_delta must lie in (0, 1e-2)")
        if self.scheme not in ("substitution", "loss"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def refined(self, radial: int = 2, angular: int = 1) -> "SpectralGrid":
        return SpectralGrid(
            self.k_max_factor,
            self.n_radial * radial,
            self.n_angular * angular,
            self.loss_delta,
            self.rel_tol,
            self.scheme,
        )

    def nodes(self, ctx: FrequencyContext):
        """Return ``(kx, ky, kz, w)`` with ``sum(w * F) ~ iint F / kz dkx dky``.

        ``kz`` follows :func:`kz_branch` (``Im kz >= 0``).  The ``"loss"``
        scheme uses plain panels in ``rho`` graded toward a node-free annulus of
        relative half width ``loss_delta`` around the light circle, which is
        itself integrated with the sine/cosh substitution.
        """
        return _polar_nodes(
            ctx.k0, self.k_max_factor, self.n_radial, self.n_angular, self.scheme, self.loss_delta
        )


def _graded_rule(edge: float, far: float, gap: float, n: int, order: int = _GL_ORDER):
    """Gauss-Legendre panels between ``edge`` and ``far`` whose widths grow
    geometrically with the distance from a singular point ``gap`` beyond
    ``edge`` (the light circle, for the annulus scheme)."""
    length = abs(far - edge)
    n_panels = max(1, -(-n // order))
    ratio = ((length + gap) / gap) ** (1.0 / n_panels)
    d = gap * ratio ** np.arange(n_panels + 1) - gap
    d[-1] = length
    sgn = 1.0 if far > edge else -1.0
    g, w = _gauss_legendre(order)
    xs, ws = [], []
    for a, b in zip(d[:-1], d[1:]):
        xs.append(edge + sgn * (0.5 * (a + b) + 0.5 * (b - a) * g))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


@lru_cache(maxsize=32)
def _polar_nodes(k0, kmf, n_radial, n_angular, scheme, delta):
    phi = 2.0 * np.pi * np.arange(n_angular) / n_angular
    wphi = 2.0 * np.pi / n_angular
    if scheme == "substitution":
        t, wt = composite_gauss_legendre(0.0, 0.5 * np.pi, n_radial)
        u, wu = composite_gauss_legendre(0.0, np.arccosh(kmf), n_radial)
        rho = np.concatenate([k0 * np.sin(t), k0 * np.cosh(u)])
        kz = np.concatenate([k0 * np.cos(t) + 0j, 1j * k0 * np.sinh(u)])
        # rho drho / kz in each region
        wr = np.concatenate([k0 * np.sin(t) * wt, -1j * k0 * np.cosh(u) * wu])
    else:
        r1, w1 = _graded_rule(k0 * (1 - delta), 0.0, delta * k0, n_radial)
        r2, w2 = _graded_rule(k0 * (1 + delta), kmf * k0, delta * k0, n_radial)
        kz = np.concatenate([np.sqrt(k0**2 - r1**2) + 0j, 1j * np.sqrt(r2**2 - k0**2)])
        wr = np.concatenate([r1 * w1, r2 * w2]) / kz
        # inside the annulus the 1/kz singularity is removed by rho = k0 sin t / k0 cosh u
        ta, wta = composite_gauss_legendre(np.arcsin(1 - delta), 0.5 * np.pi, _GL_ORDER)
        ua, wua = composite_gauss_legendre(0.0, np.arccosh(1 + delta), _GL_ORDER)
        rho = np.concatenate([r1, r2, k0 * np.sin(ta), k0 * np.cosh(ua)])
        kz = np.concatenate([kz, k0 * np.cos(ta) + 0j, 1j * k0 * np.sinh(ua)])
        wr = np.concatenate([wr, k0 * np.sin(ta) * wta, -1j * k0 * np.cosh(ua) * wua])
    kx = (rho[:, None] * np.cos(phi)[None, :]).ravel()
    ky = (rho[:, None] * np.sin(phi)[None, :]).ravel()
    kzz = np.repeat(kz, n_angular)
    w = np.repeat(wr, n_angular) * wphi
    for a in (kx, ky, kzz, w):
        a.setflags(write=False)
    return kx, ky, kzz, w


CAUCHY_PREFACTOR = 1j * np.pi / (2.0 * np.pi) ** 3


def spectral_sum(f, grid: SpectralGrid, ctx: FrequencyContext, observer_above: bool, chunk: int = 65536):
    """``sum_q w_q f(kx, ky, kz_pm)`` over the grid, chunked over nodes.

    ``f`` receives 1-D arrays ``(kx, ky, kz)`` and returns an array whose
    last axis runs over the nodes.
    """
    kx, ky, kz, w = grid.nodes(ctx)
    sgn = 1.0 if observer_above else -1.0
    total = None
    for s in range(0, kx.size, chunk):
        sl = slice(s, s + chunk)
        val = np.asarray(f(kx[sl], ky[sl], sgn * kz[sl]))
        part = val @ w[sl]
        total = part if total is None else total + part
    return total


def cauchy_reduce_integrate(
    f,
    r,
    grid: SpectralGrid,
    ctx: FrequencyContext,
    observer_above: bool | None = None,
    check: bool = False,
):
    """Evaluate ``(1/(2pi)^3) iiint Gt(k) A(k) exp(j k.r) d^3k`` in 2D form.

    ``f(kx, ky, kz)`` is the source spectrum ``A`` (scalar or leading
    vector axis).  ``observer_above`` defaults to ``r_z > 0``; the caller is
    responsible for placing ``r`` outside the source slab.  With ``check``
    the integral is repeated with doubled radial resolution and
    :class:`NonConvergent` is raised if the results differ by more than
    ``grid.rel_tol``.
    """
    r = np.asarray(r, dtype=float)
    if observer_above is None:
        if r[2] == 0:
            raise ValueError("observer lies in the source plane; pass observer_above")
        observer_above = bool(r[2] > 0)

    def integrand(kx, ky, kz):
        phase = np.exp(1j * (kx * r[0] + ky * r[1] + kz * r[2]))
        return np.asarray(f(kx, ky, kz)) * phase

    val = CAUCHY_PREFACTOR * spectral_sum(integrand, grid, ctx, observer_above)
    if check:
        fine = CAUCHY_PREFACTOR * spectral_sum(integrand, grid.refined(), ctx, observer_above)
        scale = max(np.max(np.abs(fine)), np.finfo(float).tiny)
        err = np.max(np.abs(fine - val)) / scale
        if err > grid.rel_tol:
            raise NonConvergent(f"relative change {err:.3e} on radial refinement exceeds {grid.rel_tol:g}")
        return fine
    return val


def weyl_integral(r, grid: SpectralGrid, ctx: FrequencyContext, sign: int = -1):
    """Numerically integrate ``iint exp(sign*j k.r) / kz dkx dky``.

    ``sign=-1`` is the classic form (decaying branch ``Im kz <= 0``) whose
    closed form is ``j 2pi exp(-j k0 |r|) / |r|``; ``sign=+1`` is the
    package's convention, equal to the complex conjugate.
    """
    r = np.asarray(r, dtype=float)
    val = spectral_sum(
        lambda kx, ky, kz: np.exp(1j * (kx * r[0] + ky * r[1] + kz * abs(r[2]))),
        grid,
        ctx,
        observer_above=True,
    )
    return val if sign > 0 else np.conj(val)


def weyl_closed_form(r, ctx: FrequencyContext, sign: int = -1):
    d = float(np.linalg.norm(r))
    return -sign * 2j * np.pi * np.exp(sign * 1j * ctx.k0 * d) / d


def stationary_phase(a_spectrum, r, ctx: FrequencyContext, sign: int = 1):
    """Stationary-phase value of ``iint A(k)/kz exp(sign*j k.r) dkx dky``.

    Equals ``A(k0 r_hat) * weyl_closed_form(r, sign)``.
    """
    r = np.asarray(r, dtype=float)
    d = float(np.linalg.norm(r))
    k = ctx.k0 * r / d
    a = np.asarray(a_spectrum(k[0], k[1], k[2] + 0j))
    return a * weyl_closed_form(r, ctx, sign)


def far_field_approx(a_spectrum, r, ctx: FrequencyContext, sign: int = -1):
    """Far-field evaluation ``-sign * j 2pi A(k0 r_hat) exp(sign*j k0 |r|) / |r|``.

    The default ``sign=-1`` returns ``j 2pi A exp(-j k0 r)/r``, the value of
    ``iint A/kz exp(-j k.r)``.  The radiated field in the package convention
    is ``CAUCHY_PREFACTOR * far_field_approx(A, r, ctx, sign=+1)``.
    """
    return stationary_phase(a_spectrum, r, ctx, sign)


def radiated_far_field(a_spectrum, r, ctx: FrequencyContext):
    """Far-field limit of :func:`cauchy_reduce_integrate` for spectrum ``A``."""
    return CAUCHY_PREFACTOR * stationary_phase(a_spectrum, r, ctx, sign=1)
