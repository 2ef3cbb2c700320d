"""System transfer function between a harmonic-current plane and a probe plane.

``H(k, k')`` is the x-polarized 2D spectrum of the scattered electric field
on the plane ``z = z_obs`` at wavenumber ``k = (kx, ky)`` produced by a unit
x-directed harmonic sheet current ``exp(j k'.r)`` on ``z = z_src``.  The
free-space (direct) term is a delta in ``k - k'`` and is excluded unless
requested.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .basis import HarmonicCurrent, PlaneWaveProbe, sinc_spectrum
from .coupling import assemble_harmonic_current, assemble_plane_wave_probe, dyad_matrix, dyad_over_kz
from .em_core import FrequencyContext, kz_branch
from .scene import Emo, Scene, lu_solve_with_condition

XPOL = (1.0, 0.0, 0.0)


@dataclass
class TransferFunctionGrid:
    kx_norm: np.ndarray  # output wavenumbers / k0 (rows)
    kxp_norm: np.ndarray  # input wavenumbers / k0 (columns)
    H: np.ndarray  # shape (len(kx_norm), len(kxp_norm))
    z_src: float = 0.0
    z_obs: float = 0.0
    wavelength: float = 0.0
    ky_norm: float = 0.0
    kyp_norm: float = 0.0
    nan_count: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for ax in (self.kx_norm, self.kxp_norm):
            if ax.size > 1 and not np.all(np.diff(ax) > 0):
                raise ValueError("grid axes must be strictly increasing")

    def peak(self):
        """``(kx_norm, kxp_norm, |H|)`` at the largest magnitude."""
        A = np.abs(self.H)
        i, j = np.unravel_index(np.nanargmax(A), A.shape)
        return float(self.kx_norm[i]), float(self.kxp_norm[j]), float(A[i, j])


class PhysicalSystem:
    """Factorized closed-loop response of the physical objects of a scene.

    ``response = D (I - G D)^-1`` maps incident field modes to induced
    currents; it is computed once and reused for every wavenumber pair.
    """

    def __init__(self, emos, ctx: FrequencyContext, **scene_kw):
        self.scene = Scene(emos, ctx, **scene_kw)
        self.ctx = ctx
        n = len(self.scene)
        if n:
            G = self.scene.stacked()
            D = self.scene.stacked_D()
            A = np.eye(G.shape[0]) - G @ D
            # R = D A^-1  <=>  A^T R^T = D^T
            RT, self.condition = lu_solve_with_condition(A.T, D.T)
            self.response = RT.T
        else:
            self.response = np.zeros((0, 0), dtype=complex)
            self.condition = 1.0

    def source_columns(self, kxp, kyp, z_src, polarization=XPOL):
        """Incident field vectors on every object, shape ``(n_fields, K')``."""
        cols = []
        for emo in self.scene.emos:
            b = emo.basis
            if b.n_field == 0:
                continue
            c = assemble_harmonic_current(b, kxp, kyp, z_src, polarization, self.ctx)
            cols.append(np.concatenate([c.G_EJ[:, :, 0], c.G_HJ[:, :, 0]], axis=1).T)
        return np.vstack(cols) if cols else np.zeros((0, np.size(kxp)), dtype=complex)

    def probe_rows(self, kx, ky, z_obs, component: int = 0):
        """Probe rows mapping currents ``[J; M]`` to the field spectrum, ``(K, n_currents)``."""
        rows = []
        for emo in self.scene.emos:
            b = emo.basis
            if b.n_current == 0:
                continue
            c = assemble_plane_wave_probe(b, kx, ky, z_obs, self.ctx)
            rows.append(np.concatenate([c.G_EJ[:, component, :], c.G_EM[:, component, :]], axis=1))
        return np.hstack(rows) if rows else np.zeros((np.size(kx), 0), dtype=complex)


def direct_term(kx, ky, z_src, z_obs, ctx: FrequencyContext, polarization=XPOL, component: int = 0):
    """Coefficient of ``(2pi)^2 delta(k - k')`` in the free-space response."""
    kx = np.atleast_1d(np.asarray(kx, dtype=float))
    ky = np.atleast_1d(np.asarray(ky, dtype=float)) * np.ones_like(kx)
    kz = np.atleast_1d(kz_branch(kx, ky, ctx))
    kzs = kz if z_obs > z_src else -kz
    a = np.asarray(polarization, dtype=float)
    sgn = 1.0 if z_obs > z_src else -1.0
    K = dyad_over_kz(kx, ky, kzs)
    Da = sum(K[:, b] * a[b] for b in range(3) if a[b] != 0) * sgn
    return Da[component] * np.exp(1j * kzs * (z_obs - z_src)) / (2 * ctx.omega * ctx.permittivity)


def sweep_grid(
    emos,
    ctx: FrequencyContext,
    kx_norm,
    kxp_norm,
    z_src: float = 0.0,
    z_obs: float = 0.0,
    ky_norm: float = 0.0,
    kyp_norm: float = 0.0,
    include_direct: bool = False,
    system: PhysicalSystem | None = None,
    **scene_kw,
) -> TransferFunctionGrid:
    """Dense ``H_xx`` over an output x input wavenumber grid (factorized)."""
    kx_norm = np.asarray(kx_norm, dtype=float)
    kxp_norm = np.asarray(kxp_norm, dtype=float)
    k0 = ctx.k0
    sysm = system or PhysicalSystem(emos, ctx, **scene_kw)
    kx, kxp = kx_norm * k0, kxp_norm * k0
    ky = np.full_like(kx, ky_norm * k0)
    kyp = np.full_like(kxp, kyp_norm * k0)
    if sysm.response.size:
        P = sysm.probe_rows(kx, ky, z_obs)
        S = sysm.source_columns(kxp, kyp, z_src)
        H = P @ (sysm.response @ S)
    else:
        H = np.zeros((kx.size, kxp.size), dtype=complex)
    if include_direct:
        same = (kx[:, None] == kxp[None, :]) & (ky[:, None] == kyp[None, :])
        d = direct_term(kx, ky, z_src, z_obs, ctx)
        H = H + np.where(same, d[:, None], 0.0)
    bad = ~np.isfinite(H)
    H = np.where(bad, np.nan, H)
    return TransferFunctionGrid(
        kx_norm, kxp_norm, H, z_src, z_obs, ctx.wavelength, ky_norm, kyp_norm, int(bad.sum()),
        {"condition": sysm.condition},
    )


def transfer_xx(
    emos,
    ctx: FrequencyContext,
    k_in,
    k_out,
    z_src: float = 0.0,
    z_obs: float = 0.0,
    include_direct: bool = False,
    **scene_kw,
) -> complex:
    """One ``H_xx`` value via a full solve of the scene with virtual source and probe.

    A shadow scene ``[source, *emos, probe]`` is built; the user's objects
    are not modified.
    """
    src = HarmonicCurrent(kx=float(k_in[0]), ky=float(k_in[1]), z_src=z_src, polarization=XPOL)
    probe = PlaneWaveProbe(kx=float(k_out[0]), ky=float(k_out[1]), z_obs=z_obs)
    shadow = [Emo(src, impressed=np.array([1.0, 0.0]), role="source_probe")]
    shadow += list(emos)
    shadow.append(Emo(probe, role="field_probe"))
    sc = Scene(shadow, ctx, include_direct=include_direct, **scene_kw)
    sol = sc.solve()
    return complex(sol.f[-1][0])


# --- closed forms for a constant-admittance plate -------------------------


def plate_reflection(Y, kxn, kyn, ctx: FrequencyContext, full_polarization: bool = False):
    """Per-harmonic current response of a thin constant-admittance plate.

    Returns ``R_n = Y / (1 - Y eta D_xx(k_n) / (2 k0 kz_n))`` or, with
    ``full_polarization``, the 2x2 matrices ``(I - Y G_n)^-1 Y``.
    """
    kxn = np.atleast_1d(np.asarray(kxn, dtype=float))
    kyn = np.atleast_1d(np.asarray(kyn, dtype=float))
    kzn = np.atleast_1d(kz_branch(kxn, kyn, ctx))
    c = ctx.eta / (2 * ctx.k0)
    if not full_polarization:
        # D_xx / kz = -ky^2/kz - kz stays finite for a grazing harmonic with ky = 0
        with np.errstate(divide="ignore", invalid="ignore"):
            gxx = c * np.where(kyn == 0, -kzn, -(kyn**2) / kzn - kzn)
        return Y / (1 - Y * gxx)
    D = dyad_matrix(kxn, kyn, kzn)[:2, :2]  # (2, 2, N)
    Gn = c * D / kzn
    Gn = np.moveaxis(Gn, -1, 0)
    return np.linalg.solve(np.eye(2)[None] - Y * Gn, np.broadcast_to(Y * np.eye(2), Gn.shape))


def closed_form_plate(
    Y,
    Lx: float,
    Ly: float,
    Nx: int,
    Ny: int,
    p_z: float,
    k_in,
    k_out,
    ctx: FrequencyContext,
    z_src: float = 0.0,
    z_obs: float = 0.0,
    full_polarization: bool = False,
):
    """``H_xx`` of a thin plate ``J = Y E`` at height ``p_z`` (source and probe below).

    ``H = eta^2/(4 k0^2) * D_xx(k) D_xx(k') / (kz kz')
    * exp(j kz (p_z - z_obs) + j kz' (p_z - z_src)) * sum_n R_n S_n(k) S_n(k')``.
    ``k_in``/``k_out`` are ``(kx, ky)`` pairs of scalars or arrays.
    """
    from .basis import harmonic_range

    kxp, kyp = (np.asarray(v, dtype=float) for v in k_in)
    kx, ky = (np.asarray(v, dtype=float) for v in k_out)
    nx = np.tile(harmonic_range(Nx), Ny)
    ny = np.repeat(harmonic_range(Ny), Nx)
    kxn, kyn = 2 * np.pi * nx / Lx, 2 * np.pi * ny / Ly

    def S(k1, k2):
        return sinc_spectrum(np.asarray(k1)[..., None], Lx, nx) * sinc_spectrum(np.asarray(k2)[..., None], Ly, ny)

    kz = kz_branch(kx, ky, ctx)
    kzp = kz_branch(kxp, kyp, ctx)
    pref = ctx.eta**2 / (4 * ctx.k0**2) * np.exp(1j * kz * (p_z - z_obs) + 1j * kzp * (p_z - z_src)) / (kz * kzp)
    So, Si = S(kx, ky), S(kxp, kyp)
    if not full_polarization:
        Rn = plate_reflection(Y, kxn, kyn, ctx)
        return pref * (kx**2 - ctx.k0**2) * (kxp**2 - ctx.k0**2) * np.sum(Rn * So * Si, axis=-1)
    Rn = plate_reflection(Y, kxn, kyn, ctx, True)  # (N, 2, 2)
    out_vec = np.stack([kx**2 - ctx.k0**2, kx * ky], axis=-1)  # x row of D(k)
    in_vec = np.stack([kxp**2 - ctx.k0**2, kxp * kyp], axis=-1)  # D(k') x_hat
    quad = np.einsum("...a,nab,...b->...n", out_vec, Rn, in_vec)
    return pref * np.sum(quad * So * Si, axis=-1)


def pec_limit_plate(Lx, Ly, p_z, k_in, k_out, ctx: FrequencyContext):
    """Infinite-harmonic PEC approximation
    ``(eta Lx Ly / 2) exp(j p_z (kz + kz')) sinc(Lx (kx-kx')/2pi) sinc(Ly (ky-ky')/2pi)``."""
    kxp, kyp = (np.asarray(v, dtype=float) for v in k_in)
    kx, ky = (np.asarray(v, dtype=float) for v in k_out)
    kz = kz_branch(kx, ky, ctx)
    kzp = kz_branch(kxp, kyp, ctx)
    return (
        ctx.eta * Lx * Ly / 2
        * np.exp(1j * p_z * (kz + kzp))
        * np.sinc(Lx * (kx - kxp) / (2 * np.pi))
        * np.sinc(Ly * (ky - kyp) / (2 * np.pi))
    )


# --- export ----------------------------------------------------------------

CSV_HEADER = "kx_norm,kxp_norm,abs_H,arg_H_rad"


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.9g}"


def grid_to_csv(grid: TransferFunctionGrid) -> str:
    lines = [CSV_HEADER]
    for i, kx in enumerate(grid.kx_norm):
        for j, kxp in enumerate(grid.kxp_norm):
            h = grid.H[i, j]
            lines.append(",".join([_fmt(kx), _fmt(kxp), _fmt(abs(h)), _fmt(np.angle(h))]))
    return "\n".join(lines) + "\n"


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
