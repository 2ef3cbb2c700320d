"""Coupling matrices between pairs of objects.

Rows index the observer's field modes and columns the source's current
modes.  For an observer with ``nf`` field modes and a source with ``nc``
current modes, the full matrix maps ``b = [J (nc); M (nc)]`` to
``f = [e (nf); h (nf)]``::

    [ G_EJ  G_EM ]
    [ G_HJ  G_HM ]

with ``G_HJ = -G_EM`` and ``G_HM = (eps/mu) G_EJ`` for every assembly
route in this module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, HarmonicCurrent, PlaneWaveProbe, Surface, harmonic_range, local_wavevectors
from .em_core import FrequencyContext, Pose, kz_branch
from .errors import (
    EvanescentProbe,
    FarFieldViolated,
    GeometryOverlap,
    NonConvergent,
    SingularSystem,
    WrongGeometry,
)
from .quadrature import SpectralGrid

PREF_EJ_NUM = np.pi / (2.0 * np.pi) ** 3  # divided by omega*eps at use
PREF_EM = np.pi / (2.0 * np.pi) ** 3


@dataclass(frozen=True)
class CouplingMatrix:
    G_EJ: np.ndarray
    G_EM: np.ndarray
    G_HJ: np.ndarray
    G_HM: np.ndarray
    method: str = "general"
    source: int | None = None
    observer: int | None = None

    @classmethod
    def from_electric(cls, G_EJ, G_EM, ctx: FrequencyContext, method: str, source=None, observer=None):
        G_EJ = np.asarray(G_EJ, dtype=complex)
        G_EM = np.asarray(G_EM, dtype=complex)
        ratio = ctx.permittivity / ctx.permeability
        return cls(G_EJ, G_EM, -G_EM, ratio * G_EJ, method, source, observer)

    @property
    def shape(self):
        return self.G_EJ.shape

    @property
    def full(self) -> np.ndarray:
        """Block matrix ``[[EJ, EM], [HJ, HM]]`` (last two axes)."""
        top = np.concatenate([self.G_EJ, self.G_EM], axis=-1)
        bot = np.concatenate([self.G_HJ, self.G_HM], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    def check_identities(self, ctx: FrequencyContext) -> bool:
        ratio = ctx.permittivity / ctx.permeability
        return bool(np.array_equal(self.G_HJ, -self.G_EM) and np.array_equal(self.G_HM, ratio * self.G_EJ))


def cross_matrix(kx, ky, kz):
    """``C[a, b]`` with ``(k x v)_a = sum_b C[a, b] v_b``; shape ``(3, 3, Q)``."""
    z = np.zeros_like(kx, dtype=complex)
    return np.array([[z, -kz, ky], [kz, z, -kx], [-ky, kx, z]])


def dyad_matrix(kx, ky, kz):
    """``D[a, b]`` with ``k x (k x v) = D v``, i.e. ``k k^T - (k.k) I``."""
    k = [np.asarray(kx, dtype=complex), np.asarray(ky, dtype=complex), np.asarray(kz, dtype=complex)]
    kk = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    return np.array([[k[a] * k[b] - (kk if a == b else 0.0) for b in range(3)] for a in range(3)])


def _safe_div(num, kz):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(num == 0, 0.0 + 0j, num / kz)


def dyad_over_kz(kx, ky, kz):
    """``dyad_matrix / kz`` written so that entries with a vanishing
    numerator stay finite when ``kz -> 0`` (grazing waves)."""
    kx = np.asarray(kx, dtype=complex)
    ky = np.asarray(ky, dtype=complex)
    kz = np.asarray(kz, dtype=complex)
    xx = -_safe_div(ky**2, kz) - kz
    yy = -_safe_div(kx**2, kz) - kz
    zz = -_safe_div(kx**2 + ky**2, kz)
    xy = _safe_div(kx * ky, kz)
    return np.array([[xx, xy, kx], [xy, yy, ky], [kx, ky, zz]])


def cross_over_kz(kx, ky, kz):
    kx = np.asarray(kx, dtype=complex)
    ky = np.asarray(ky, dtype=complex)
    kz = np.asarray(kz, dtype=complex)
    z = np.zeros_like(kx)
    one = np.ones_like(kx)
    return np.array(
        [[z, -one, _safe_div(ky, kz)], [one, z, -_safe_div(kx, kz)], [-_safe_div(ky, kz), _safe_div(kx, kz), z]]
    )


def _apply(K, P, rows=slice(None)):
    """``out[k, a, u] = sum_b K[a, b, k] P[u, b]`` skipping polarization
    components absent from ``P`` (avoids ``0 * inf``)."""
    used = [b for b in range(3) if np.any(P[:, b])]
    out = np.zeros((K.shape[-1], K[rows].shape[0], P.shape[0]), dtype=complex)
    for b in used:
        out += np.moveaxis(K[rows, b], -1, 0)[:, :, None] * P[None, None, :, b]
    return out


def _contract(Pn, psi, kern, Pu, chi, w):
    """``sum_q psi[n,q] chi[u,q] w[q] Pn[n]^T kern[:,:,q] Pu[u]``."""
    out = np.zeros((psi.shape[0], chi.shape[0]), dtype=complex)
    for a in range(3):
        pa = Pn[:, a]
        if not np.any(pa):
            continue
        for b in range(3):
            pb = Pu[:, b]
            if not np.any(pb) or not np.any(kern[a, b]):
                continue
            m = (psi * (kern[a, b] * w)[None, :]) @ chi.T
            out += pa[:, None] * pb[None, :] * m
    return out


def relative_geometry(src: BasisSet, obs: BasisSet):
    """``(p, R)`` of the observer frame in the source frame."""
    rel = obs.pose.relative_to(src.pose)
    return rel.position, rel.rotation


def observer_side(src: BasisSet, obs: BasisSet) -> bool:
    """True when the observer lies entirely above the source plane.

    Raises :class:`GeometryOverlap` when the observer's field support
    straddles the source current plane (in the source frame).
    """
    p, R = relative_geometry(src, obs)
    pts = p[None, :] + obs.field_support() @ R.T
    z_src = src.current_support()[:, 2]
    if np.min(pts[:, 2]) > np.max(z_src):
        return True
    if np.max(pts[:, 2]) < np.min(z_src):
        return False
    raise GeometryOverlap("observer field support is not separated from the source plane along z")


def _general_blocks(Pn, psi_fn, Pu, chi_fn, grid: SpectralGrid, ctx: FrequencyContext, above: bool, chunk=8192):
    kx, ky, kz, w = grid.nodes(ctx)
    sgn = 1.0 if above else -1.0
    nf, nc = Pn.shape[0], Pu.shape[0]
    EJ = np.zeros((nf, nc), dtype=complex)
    EM = np.zeros((nf, nc), dtype=complex)
    for s in range(0, kx.size, chunk):
        sl = slice(s, s + chunk)
        qx, qy, qz, qw = kx[sl], ky[sl], sgn * kz[sl], w[sl]
        psi = psi_fn(qx, qy, qz)
        chi = chi_fn(qx, qy, qz)
        EJ += _contract(Pn, psi, dyad_matrix(qx, qy, qz), Pu, chi, qw)
        EM += _contract(Pn, psi, cross_matrix(qx, qy, qz), Pu, chi, qw)
    return EJ * PREF_EJ_NUM / (ctx.omega * ctx.permittivity), EM * PREF_EM


def _posed_observer(obs: BasisSet, p, R):
    def psi_fn(kx, ky, kz):
        lx, ly, lz = local_wavevectors(kx, ky, kz, R)
        return obs.field_scalar_conj(lx, ly, lz) * np.exp(1j * (p[0] * kx + p[1] * ky + p[2] * kz))[None, :]

    return psi_fn


def assemble_general(
    src: BasisSet,
    obs: BasisSet,
    grid: SpectralGrid,
    ctx: FrequencyContext,
    check: bool = False,
    source: int | None = None,
    observer: int | None = None,
) -> CouplingMatrix:
    """Coupling by numerical integration of the reduced 2D spectral integral."""
    if isinstance(src, (PlaneWaveProbe, HarmonicCurrent)) or isinstance(obs, (PlaneWaveProbe, HarmonicCurrent)):
        raise WrongGeometry("probe and harmonic-current couplings have dedicated closed forms")
    above = observer_side(src, obs)
    p, R = relative_geometry(src, obs)
    Pn = obs.field_pols @ R.T
    Pu = src.current_pols
    psi_fn = _posed_observer(obs, p, R)
    chi_fn = src.current_scalar
    EJ, EM = _general_blocks(Pn, psi_fn, Pu, chi_fn, grid, ctx, above)
    if check:
        EJ2, EM2 = _general_blocks(Pn, psi_fn, Pu, chi_fn, grid.refined(), ctx, above)
        scale = max(np.max(np.abs(EJ2)), np.max(np.abs(EM2)) * ctx.eta, np.finfo(float).tiny)
        err = max(np.max(np.abs(EJ2 - EJ)), np.max(np.abs(EM2 - EM)) * ctx.eta) / scale
        if err > grid.rel_tol:
            raise NonConvergent(f"coupling changed by {err:.3e} on refinement")
        EJ, EM = EJ2, EM2
    return CouplingMatrix.from_electric(EJ, EM, ctx, "general", source, observer)


def assemble_far_field(
    src: BasisSet,
    obs: BasisSet,
    ctx: FrequencyContext,
    min_distance_factor: float = 10.0,
    source: int | None = None,
    observer: int | None = None,
) -> CouplingMatrix:
    """Stationary-phase coupling between two objects far from each other.

    The pattern factors are evaluated at ``k0 * p_hat`` where ``p`` is the
    observer position in the source frame.  Raises :class:`FarFieldViolated`
    unless ``|p| >= min_distance_factor * L**2 / lambda`` with ``L`` the
    larger object extent (and ``|p| > 0``).
    """
    p, R = relative_geometry(src, obs)
    dist = float(np.linalg.norm(p))
    size = max(src.extent, obs.extent)
    if dist == 0.0 or dist < min_distance_factor * size**2 / ctx.wavelength:
        raise FarFieldViolated(f"distance {dist:g} m too short for extent {size:g} m")
    k = ctx.k0 * p / dist
    kx, ky, kz = np.array([k[0]]), np.array([k[1]]), np.array([k[2]], dtype=complex)
    lx, ly, lz = local_wavevectors(kx, ky, kz, R)
    psi = obs.field_scalar_conj(lx, ly, lz)
    chi = src.current_scalar(kx, ky, kz)
    Pn = obs.field_pols @ R.T
    Pu = src.current_pols
    one = np.ones(1)
    A_EJ = _contract(Pn, psi, dyad_matrix(kx, ky, kz), Pu, chi, one)
    A_EM = _contract(Pn, psi, cross_matrix(kx, ky, kz), Pu, chi, one)
    # iint A/kz exp(j k.p) ~ -j 2pi A(k0 p_hat) exp(j k0 |p|)/|p|
    sp = -2j * np.pi * np.exp(1j * ctx.k0 * dist) / dist
    EJ = PREF_EJ_NUM / (ctx.omega * ctx.permittivity) * sp * A_EJ
    EM = PREF_EM * sp * A_EM
    return CouplingMatrix.from_electric(EJ, EM, ctx, "far_field", source, observer)


def _probe_kz(kx, ky, ctx):
    kx = np.atleast_1d(np.asarray(kx, dtype=float))
    ky = np.atleast_1d(np.asarray(ky, dtype=float))
    if np.any(kx**2 + ky**2 > ctx.k0**2):
        warnings.warn("evanescent probe wavenumber (diagnostic only)", EvanescentProbe, stacklevel=3)
    return kx, ky, np.atleast_1d(kz_branch(kx, ky, ctx))


def assemble_plane_wave_probe(
    src: BasisSet,
    kx,
    ky,
    z_obs: float,
    ctx: FrequencyContext,
    source: int | None = None,
    observer: int | None = None,
) -> CouplingMatrix:
    """Closed-form coupling from ``src`` to the plane-wave probe on ``z = z_obs``.

    ``kx``/``ky`` are arrays of probe wavenumbers (global frame); the
    returned blocks have shape ``(K, 2, nc)``, the two rows being the x and
    y polarized 2D spectra of the field on the probe plane.
    """
    kx, ky, kz = _probe_kz(kx, ky, ctx)
    pts = src.pose.position[None, :] + src.current_support() @ src.pose.rotation.T
    if np.min(pts[:, 2]) < z_obs < np.max(pts[:, 2]) or np.any(pts[:, 2] == z_obs):
        raise GeometryOverlap("probe plane intersects the source")
    above = z_obs > np.max(pts[:, 2])
    kzs = kz if above else -kz
    R, pi = src.pose.rotation, src.pose.position
    lx, ly, lz = local_wavevectors(kx, ky, kzs, R)
    chi = src.current_scalar(lx, ly, lz)  # (nc, K)
    phase = np.exp(1j * (kzs * z_obs - (pi[0] * kx + pi[1] * ky + pi[2] * kzs)))
    Pu = src.current_pols @ R.T  # (nc, 3) global
    sgn = 1.0 if above else -1.0
    # D(k_pm)/kz and C(k_pm)/kz with kz the branch value (sign folded in)
    DP = _apply(dyad_over_kz(kx, ky, kzs), Pu, slice(0, 2)) * sgn
    CP = _apply(cross_over_kz(kx, ky, kzs), Pu, slice(0, 2)) * sgn
    fac = phase[:, None, None] * chi.T[:, None, :]
    EJ = fac * DP / (2.0 * ctx.omega * ctx.permittivity)
    EM = fac * CP / 2.0
    return CouplingMatrix.from_electric(EJ, EM, ctx, "plane_wave", source, observer)


def assemble_harmonic_current(
    obs: BasisSet,
    kx,
    ky,
    z_src: float,
    polarization,
    ctx: FrequencyContext,
    source: int | None = None,
    observer: int | None = None,
) -> CouplingMatrix:
    """Closed-form coupling from a harmonic sheet current on ``z = z_src``.

    Returns blocks of shape ``(K, nf, 1)`` for the ``K`` wavenumbers.
    """
    kx, ky, kz = _probe_kz(kx, ky, ctx)
    a = np.asarray(polarization, dtype=float).reshape(3)
    R, pm = obs.pose.rotation, obs.pose.position
    pts = pm[None, :] + obs.field_support() @ R.T
    if np.min(pts[:, 2]) > z_src:
        above = True
    elif np.max(pts[:, 2]) < z_src:
        above = False
    else:
        raise GeometryOverlap("observer straddles the harmonic-current plane")
    kzs = kz if above else -kz
    lx, ly, lz = local_wavevectors(kx, ky, kzs, R)
    psi = obs.field_scalar_conj(lx, ly, lz)  # (nf, K)
    phase = np.exp(1j * (pm[0] * kx + pm[1] * ky + (pm[2] - z_src) * kzs))
    Pn = obs.field_pols @ R.T  # (nf, 3)
    sgn = 1.0 if above else -1.0
    a2 = a[None, :]
    Da = _apply(dyad_over_kz(kx, ky, kzs), a2)[:, :, 0] * sgn  # (K, 3)
    Ca = _apply(cross_over_kz(kx, ky, kzs), a2)[:, :, 0] * sgn
    used = [c for c in range(3) if np.any(Pn[:, c])]
    pd = sum(Pn[None, :, c] * Da[:, c, None] for c in used)  # (K, nf)
    pc = sum(Pn[None, :, c] * Ca[:, c, None] for c in used)
    fac = psi.T * phase[:, None]  # (K, nf)
    EJ = (fac * pd / (2.0 * ctx.omega * ctx.permittivity))[:, :, None]
    EM = (fac * pc / 2.0)[:, :, None]
    return CouplingMatrix.from_electric(EJ, EM, ctx, "harmonic_current", source, observer)


# --- self coupling of a surface -------------------------------------------


def _self_layout(surf: Surface):
    """Index arrays ``(nx_i, ny_i, p, s)`` for field rows and ``(nx_i, ny_i, q)`` for current columns."""
    N = surf.n_harm
    ix = np.tile(np.arange(surf.Nx), surf.Ny)
    iy = np.repeat(np.arange(surf.Ny), surf.Nx)
    rows = (np.tile(ix, 4), np.tile(iy, 4), np.tile(np.repeat([0, 1], N), 2), np.repeat([0, 1], 2 * N))
    cols = (np.tile(ix, 2), np.tile(iy, 2), np.repeat([0, 1], N))
    return rows, cols


def self_surface_large(surf: Surface, ctx: FrequencyContext, source: int | None = None) -> CouplingMatrix:
    """Large-surface self coupling: only equal harmonics couple.

    With ``k_n = (2 pi nx/Lx, 2 pi ny/Ly, kz_n)`` and ``h`` half the
    thickness, ``G_EJ = D_pq(k_n) exp(j kz_n h) / (2 omega eps kz_n)`` and
    ``G_EM = -+ exp(j kz_n h)/2`` for (x field, y current) on side 0/1, with
    the opposite sign for (y field, x current).
    """
    kxn, kyn = surf.harmonic_wavenumbers()
    kzn = np.atleast_1d(kz_branch(kxn, kyn, ctx))
    if np.any(np.abs(kzn) < 1e-9 * ctx.k0):
        raise SingularSystem("a surface harmonic is grazing (kz = 0); change the surface size")
    h = 0.5 * surf.eff_delta
    ph = np.exp(1j * kzn * h)
    D = dyad_matrix(kxn, kyn, kzn)
    (rx, ry, rp, rs), (cx, cy, cq) = _self_layout(surf)
    same = (rx[:, None] == cx[None, :]) & (ry[:, None] == cy[None, :])
    hidx = rx + surf.Nx * ry  # harmonic index of the row
    EJ = np.zeros((rx.size, cx.size), dtype=complex)
    EM = np.zeros_like(EJ)
    pq_D = D[rp[:, None], cq[None, :], hidx[:, None]]
    EJ[same] = (pq_D * (ph / kzn)[hidx][:, None])[same] / (2 * ctx.omega * ctx.permittivity)
    sgn_side = np.where(rs == 0, 1.0, -1.0)
    em_val = 0.5 * ph[hidx] * sgn_side * np.where(rp == 0, -1.0, 1.0)
    EM = np.where(same & (rp[:, None] != cq[None, :]), em_val[:, None], 0.0 + 0j)
    return CouplingMatrix.from_electric(EJ, EM, ctx, "self_surface_large", source, source)


def _axis_rule(L: float, h: float, step: float, order: int = 16):
    """Gauss-Legendre rule on ``[-L, L]`` graded geometrically towards 0."""
    bps = [0.0]
    b = h / 4.0
    top = min(step, L)
    while b < top:
        bps.append(b)
        b *= 2.0
    start = bps[-1]
    n = max(1, int(np.ceil((L - start) / step)))
    bps.extend(np.linspace(start, L, n + 1)[1:])
    x0, w0 = np.polynomial.legendre.leggauss(order)
    e = np.asarray(bps)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    x = (mid[:, None] + half[:, None] * x0).ravel()
    w = (half[:, None] * w0).ravel()
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def harmonic_correlation(x, L: float, n: int, u: int):
    """``c(x) = int conj(phi_n(t)) phi_u(t + x) dt`` for unit-norm harmonics on ``[-L/2, L/2]``.

    Its Fourier transform is ``S_n(k) S_u(k)`` for real ``k``.
    """
    x = np.asarray(x, dtype=float)
    width = np.clip(L - np.abs(x), 0.0, None)
    alpha = 2 * np.pi * (u - n) / L
    return (
        np.exp(2j * np.pi * u * x / L)
        * width
        * np.exp(-0.5j * alpha * x)
        * np.sinc(alpha * width / (2 * np.pi))
        / L
    )


def self_surface_spatial(
    surf: Surface,
    ctx: FrequencyContext,
    step: float | None = None,
    order: int = 16,
    source: int | None = None,
    chunk: int = 256,
) -> CouplingMatrix:
    """Exact self coupling via the equivalent spatial-domain integral.

    By Parseval, the 2D wavenumber integral of the product of four sinc
    spectra equals an integral over the harmonic cross-correlations
    (supported on ``[-L, L]``) against derivatives of the scalar Green
    function at height ``h = delta/2``.  The integrand is near-singular at
    the origin, handled with geometric panel grading.  Requires
    ``delta > 0``.
    """
    h = 0.5 * surf.eff_delta
    if h <= 0:
        raise NonConvergent("exact self coupling needs a finite thickness")
    step = ctx.wavelength / 4 if step is None else step
    k0 = ctx.k0
    xs, wx = _axis_rule(surf.Lx, h, min(step, surf.Lx / (2 * surf.Nx)), order)
    ys, wy = _axis_rule(surf.Ly, h, min(step, surf.Ly / (2 * surf.Ny)), order)
    hx, hy = harmonic_range(surf.Nx), harmonic_range(surf.Ny)
    # rows: (n, u) pairs flattened as n*N + u, weights folded in
    Cx = np.array([harmonic_correlation(xs, surf.Lx, n, u) for n in hx for u in hx]) * wx
    Cy = np.array([harmonic_correlation(ys, surf.Ly, n, u) for n in hy for u in hy]) * wy
    acc = {key: np.zeros((Cx.shape[0], Cy.shape[0]), dtype=complex) for key in ("xx", "yy", "xy", "z")}
    Y = ys[None, :]
    for s in range(0, xs.size, chunk):
        X = xs[s : s + chunk, None]
        R = np.sqrt(X**2 + Y**2 + h**2)
        g = np.exp(1j * k0 * R) / R
        a = 1j * k0 - 1.0 / R
        g1 = g * a  # dg/dR
        g2 = g * (a**2 + 1.0 / R**2)
        t1 = g2 / R**2 - g1 / R**3
        kern = {
            "xx": t1 * X**2 + g1 / R + k0**2 * g,
            "yy": t1 * Y**2 + g1 / R + k0**2 * g,
            "xy": t1 * X * Y,
            "z": g1 * h / R,
        }
        cx = Cx[:, s : s + chunk]
        for key, K in kern.items():
            acc[key] += cx @ K @ Cy.T
    cej = 1j / (4 * np.pi * ctx.omega * ctx.permittivity)
    Nx, Ny = surf.Nx, surf.Ny
    (rx, ry, rp, rs), (cx_, cy_, cq) = _self_layout(surf)
    ix = rx[:, None] * Nx + cx_[None, :]
    iy = ry[:, None] * Ny + cy_[None, :]
    pq = rp[:, None] * 2 + cq[None, :]
    ej = np.select([pq == 0, pq == 3], [acc["xx"][ix, iy], acc["yy"][ix, iy]], acc["xy"][ix, iy])
    EJ = cej * ej
    sgn_side = np.where(rs == 0, 1.0, -1.0)[:, None]
    zval = acc["z"][ix, iy] / (4 * np.pi)
    EM = np.where(pq == 1, zval * sgn_side, np.where(pq == 2, -zval * sgn_side, 0.0))
    return CouplingMatrix.from_electric(EJ, EM, ctx, "self_surface", source, source)


def self_surface_spectral(surf: Surface, grid: SpectralGrid, ctx: FrequencyContext, source: int | None = None):
    """Self coupling by direct polar quadrature of the wavenumber integral.

    Practical only for thick or small surfaces (the integrand decays like
    ``exp(-|k| delta/2)``); kept as a cross-check of the spatial route.
    """
    if surf.eff_delta <= 0:
        raise NonConvergent("spectral self coupling diverges without thickness")
    N2 = 2 * surf.n_harm
    Pall = surf.field_pols
    Pu = surf.current_pols
    out_ej, out_em = [], []
    for side, above in ((0, True), (1, False)):
        rows = slice(side * N2, (side + 1) * N2)

        def psi_fn(kx, ky, kz, rows=rows):
            return surf.field_scalar_conj(kx, ky, kz)[rows]

        ej, em = _general_blocks(Pall[rows], psi_fn, Pu, surf.current_scalar, grid, ctx, above)
        out_ej.append(ej)
        out_em.append(em)
    return CouplingMatrix.from_electric(np.vstack(out_ej), np.vstack(out_em), ctx, "self_surface", source, source)


def assemble_self_surface(
    surf: BasisSet,
    ctx: FrequencyContext,
    large_approx: bool = True,
    grid: SpectralGrid | None = None,
    source: int | None = None,
) -> CouplingMatrix:
    """Self coupling of a surface (pose independent).

    ``large_approx`` selects the equal-harmonic closed form; otherwise the
    exact integral is evaluated (spatial route, or the spectral polar route
    when a ``grid`` is given).
    """
    if not isinstance(surf, Surface):
        raise WrongGeometry("self coupling is defined for surfaces only")
    if large_approx:
        return self_surface_large(surf, ctx, source)
    if grid is not None:
        return self_surface_spectral(surf, grid, ctx, source)
    return self_surface_spatial(surf, ctx, source=source)
