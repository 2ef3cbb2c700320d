"""Constitutive matrices ``D`` mapping a surface's field modes to induced currents.

For a surface with ``N = Nx*Ny`` harmonics the field vector is
``f = [e+ (2N); e- (2N); h+ (2N); h- (2N)]`` (each ``2N`` block holds the x
then the y harmonics) and the current vector is ``b = [Jx; Jy; Mx; My]``,
so ``D`` has shape ``(4N, 8N)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import Surface, SurfaceModeIndex
from .em_core import FrequencyContext
from .errors import ExpansionTruncation, IndexOutOfRange, SingularSystem

PEC_ADMITTANCE_SCALE = 1e9  # PEC limit uses Y = scale / eta


@dataclass(frozen=True)
class ConstitutiveMatrix:
    D: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.D.shape

    @classmethod
    def zero(cls, n_current: int, n_field: int) -> "ConstitutiveMatrix":
        return cls(np.zeros((2 * n_current, 2 * n_field), dtype=complex), "zero")


def _phase(surf: Surface, ctx: FrequencyContext) -> complex:
    return np.exp(-1j * ctx.k0 * surf.eff_delta / 2.0)


def harmonic_product_matrix(j, surf: Surface, ctx: FrequencyContext) -> np.ndarray:
    """``[H_j]_{n,u} = delta(jx+ux-nx) delta(jy+uy-ny) exp(-j k0 delta/2) / sqrt(Lx Ly)``.

    ``j`` is a harmonic pair ``(jx, jy)`` (or a :class:`SurfaceModeIndex`).
    Rows/columns follow the harmonic packing order of the surface.
    """
    jx, jy = (j.nx, j.ny) if isinstance(j, SurfaceModeIndex) else j
    hx, hy = (surf.Nx - 1) // 2, (surf.Ny - 1) // 2
    if abs(jx) > 2 * hx or abs(jy) > 2 * hy:
        raise IndexOutOfRange(f"harmonic shift ({jx}, {jy}) outside the surface range")
    nx, ny = surf.harmonics
    sel = (nx[:, None] == jx + nx[None, :]) & (ny[:, None] == jy + ny[None, :])
    return sel * (_phase(surf, ctx) / np.sqrt(surf.Lx * surf.Ly))


# --- surface functions ----------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: complex


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(kx x + ky y)`` (or ``cos`` with ``kind='cos'``)."""

    amplitude: complex
    kx: float
    ky: float = 0.0
    kind: str = "sin"


@dataclass(frozen=True)
class Sampled:
    """Values on a regular ``(Ny, Nx)`` grid of cell centres over the aperture."""

    values: np.ndarray


def _phi_integral(k, L, n):
    # int_{-L/2}^{L/2} exp(j k x) exp(-j 2 pi n x / L) dx
    return L * np.sinc(k * L / (2 * np.pi) - n)


def expand_surface_function(fn, surf: Surface, truncation_tol: float | None = 0.35) -> np.ndarray:
    """Coefficients ``X_j = <Y, phi_j>`` for the ``Nx*Ny`` surface harmonics.

    ``fn`` is a :class:`Constant`, :class:`Sinusoid`, :class:`Sampled`, a
    scalar, or a callable ``Y(x, y)``.  Constants and sinusoids are
    projected in closed form; callables with Gauss-Legendre quadrature;
    sampled grids with the midpoint rule.  An :class:`ExpansionTruncation`
    warning is issued when the truncated series misses the function by more
    than ``truncation_tol`` (relative RMS on the aperture).
    """
    nx, ny = surf.harmonics
    Lx, Ly = surf.Lx, surf.Ly
    norm = 1.0 / np.sqrt(Lx * Ly)
    if np.isscalar(fn):
        fn = Constant(complex(fn))
    if isinstance(fn, Constant):
        X = fn.value * norm * _phi_integral(0.0, Lx, nx) * _phi_integral(0.0, Ly, ny)
        func = lambda x, y: np.full(np.broadcast(x, y).shape, fn.value, dtype=complex)
    elif isinstance(fn, Sinusoid):
        a, kx, ky = fn.amplitude, fn.kx, fn.ky
        plus = _phi_integral(kx, Lx, nx) * _phi_integral(ky, Ly, ny)
        minus = _phi_integral(-kx, Lx, nx) * _phi_integral(-ky, Ly, ny)
        if fn.kind == "sin":
            X = a * norm * (plus - minus) / 2j
            func = lambda x, y: a * np.sin(kx * x + ky * y)
        elif fn.kind == "cos":
            X = a * norm * (plus + minus) / 2
            func = lambda x, y: a * np.cos(kx * x + ky * y)
        else:
            raise ValueError(f"unknown sinusoid kind {fn.kind!r}")
    elif isinstance(fn, Sampled):
        vals = np.asarray(fn.values, dtype=complex)
        My, Mx = vals.shape
        xs = (np.arange(Mx) + 0.5) * Lx / Mx - Lx / 2
        ys = (np.arange(My) + 0.5) * Ly / My - Ly / 2
        ex = np.exp(-2j * np.pi * nx[:, None] * xs[None, :] / Lx)  # (N, Mx)
        ey = np.exp(-2j * np.pi * ny[:, None] * ys[None, :] / Ly)  # (N, My)
        X = norm * np.einsum("yx,nx,ny->n", vals, ex, ey) * (Lx / Mx) * (Ly / My)
        func = None
        recon_pts = (xs, ys, vals)
    elif callable(fn):
        from .quadrature import composite_gauss_legendre

        px = max(64, 8 * surf.Nx)
        py = max(64, 8 * surf.Ny)
        xs, wx = composite_gauss_legendre(-Lx / 2, Lx / 2, px)
        ys, wy = composite_gauss_legendre(-Ly / 2, Ly / 2, py)
        vals = np.asarray(fn(xs[None, :], ys[:, None]), dtype=complex) * np.ones((ys.size, xs.size))
        ex = np.exp(-2j * np.pi * nx[:, None] * xs[None, :] / Lx) * wx
        ey = np.exp(-2j * np.pi * ny[:, None] * ys[None, :] / Ly) * wy
        X = norm * np.einsum("yx,nx,ny->n", vals, ex, ey)
        func = fn
    else:
        raise TypeError(f"unsupported surface function {fn!r}")
    X = np.asarray(X, dtype=complex) * np.ones(nx.size)

    if truncation_tol is not None:
        if func is not None:
            xs = (np.arange(4 * surf.Nx) + 0.5) * Lx / (4 * surf.Nx) - Lx / 2
            ys = (np.arange(4 * surf.Ny) + 0.5) * Ly / (4 * surf.Ny) - Ly / 2
            vals = np.asarray(func(xs[None, :], ys[:, None]), dtype=complex) * np.ones((ys.size, xs.size))
        else:
            xs, ys, vals = recon_pts
        rec = reconstruct_surface_function(X, surf, xs[None, :], ys[:, None])
        scale = np.sqrt(np.mean(np.abs(vals) ** 2))
        if scale > 0:
            err = np.sqrt(np.mean(np.abs(rec - vals) ** 2)) / scale
            if err > truncation_tol:
                warnings.warn(f"surface-function expansion error {err:.3f}", ExpansionTruncation, stacklevel=2)
    return X


def reconstruct_surface_function(X, surf: Surface, x, y):
    """``sum_j X_j phi_j(x, y)`` (without the thickness phase)."""
    nx, ny = surf.harmonics
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 0.0
    for Xj, jx, jy in zip(X, nx, ny):
        if Xj != 0:
            out = out + Xj * np.exp(2j * np.pi * (jx * x / surf.Lx + jy * y / surf.Ly))
    return out / np.sqrt(surf.Lx * surf.Ly)


def expansion_matrix(X, surf: Surface, ctx: FrequencyContext) -> np.ndarray:
    """``sum_j X_j H_j`` (an ``N x N`` matrix)."""
    nx, ny = surf.harmonics
    hx, hy = (surf.Nx - 1) // 2, (surf.Ny - 1) // 2
    dx = nx[:, None] - nx[None, :]
    dy = ny[:, None] - ny[None, :]
    ok = (np.abs(dx) <= hx) & (np.abs(dy) <= hy)
    idx = np.where(ok, (dx + hx) + surf.Nx * (dy + hy), 0)
    M = np.where(ok, np.asarray(X, dtype=complex)[idx], 0.0)
    return M * (_phase(surf, ctx) / np.sqrt(surf.Lx * surf.Ly))


def _blkdiag2(X):
    N = X.shape[0]
    out = np.zeros((2 * N, 2 * N), dtype=complex)
    out[:N, :N] = X
    out[N:, N:] = X
    return out


def homogenized_from_matrices(XJE, XJH, XME, XMH, meta=None) -> ConstitutiveMatrix:
    """Two-sided averaging sheet ``b = 1/2 Xblk [[I I 0 0], [0 0 I I]] f``."""
    N = XJE.shape[0]
    N2 = 2 * N
    Xblk = np.block(
        [
            [_blkdiag2(XJE), _blkdiag2(XJH)],
            [_blkdiag2(XME), _blkdiag2(XMH)],
        ]
    )
    I = np.eye(N2)
    Z = np.zeros((N2, N2))
    avg = np.block([[I, I, Z, Z], [Z, Z, I, I]])
    return ConstitutiveMatrix(0.5 * Xblk @ avg, "homogenized_sheet", meta or {})


def build_homogenized_sheet(
    surf: Surface,
    ctx: FrequencyContext,
    y_je=0.0,
    y_jh=0.0,
    y_me=0.0,
    y_mh=0.0,
    truncation_tol: float | None = 0.35,
) -> ConstitutiveMatrix:
    """Sheet whose induced currents follow the face-averaged tangential fields."""
    mats = []
    coeffs = {}
    for name, fn in (("JE", y_je), ("JH", y_jh), ("ME", y_me), ("MH", y_mh)):
        X = expand_surface_function(fn, surf, truncation_tol)
        coeffs[name] = X
        mats.append(expansion_matrix(X, surf, ctx))
    return homogenized_from_matrices(*mats, meta={"coefficients": coeffs})


def constant_admittance(surf: Surface, ctx: FrequencyContext, Y: complex, kind: str = "constant_admittance"):
    """``J = Y e+`` (field picked on side 0 only), ``M = 0``."""
    N2 = 2 * surf.n_harm
    XJE = Y * np.sqrt(surf.Lx * surf.Ly) * harmonic_product_matrix((0, 0), surf, ctx)
    D = np.zeros((2 * N2, 4 * N2), dtype=complex)
    D[:N2, :N2] = _blkdiag2(XJE)
    return ConstitutiveMatrix(D, kind, {"Y": Y})


def build_impedance_sheet(surf: Surface, ctx: FrequencyContext, Z=None, pec: bool = False) -> ConstitutiveMatrix:
    """Impenetrable impedance sheet ``J = E+/Z``.

    ``Z=None`` or ``inf`` gives the open circuit (zero matrix).  ``pec=True``
    (or ``Z == 0``) uses the large-admittance limit
    ``Y = PEC_ADMITTANCE_SCALE / eta`` and flags it in ``meta``.
    """
    N2 = 2 * surf.n_harm
    if pec or (Z is not None and Z == 0):
        cm = constant_admittance(surf, ctx, PEC_ADMITTANCE_SCALE / ctx.eta, "impedance_sheet")
        return ConstitutiveMatrix(cm.D, "impedance_sheet", {"Y": cm.meta["Y"], "pec_limit": True})
    if Z is None or np.isinf(Z):
        return ConstitutiveMatrix(np.zeros((2 * N2, 4 * N2), dtype=complex), "impedance_sheet", {"Y": 0.0})
    cm = constant_admittance(surf, ctx, 1.0 / Z, "impedance_sheet")
    return ConstitutiveMatrix(cm.D, "impedance_sheet", cm.meta)


def build_free_form(T: np.ndarray, G_self: np.ndarray, cond_limit: float = 1e12, tol: float = 1e-8) -> ConstitutiveMatrix:
    """``D = (I + T G)^-1 T`` so that the closed-loop response equals ``T``.

    ``G_self`` is the full self-coupling matrix (fields x currents).
    """
    T = np.asarray(T, dtype=complex)
    G = np.asarray(G_self, dtype=complex)
    A = np.eye(T.shape[0]) + T @ G
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularSystem(f"I + T G is ill conditioned (cond {cond:.3e})", cond)
    D = np.linalg.solve(A, T)
    resid = free_form_residual(D, G, T)
    if resid > tol:
        raise SingularSystem(f"free-form round trip residual {resid:.3e}", cond)
    return ConstitutiveMatrix(D, "free_form", {"condition": cond, "residual": resid})


def free_form_residual(D, G, T) -> float:
    """``||D (I - G D)^-1 - T|| / ||T||`` (zero when ``T`` is zero and ``D`` is zero)."""
    M = np.eye(G.shape[0]) - G @ D
    resp = np.linalg.solve(M.T, D.T).T
    nT = np.linalg.norm(T)
    return float(np.linalg.norm(resp - T) / (nT if nT > 0 else 1.0))
