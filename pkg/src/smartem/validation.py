"""Independent numerical checks shared by the ``validate`` command and the tests.

Every check returns a :class:`CheckResult`; a suite is a list of them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .basis import Line, Surface, SurfaceModeIndex
from .constitutive import constant_admittance
from .coupling import assemble_general
from .em_core import FrequencyContext, translated
from .quadrature import SpectralGrid, composite_gauss_legendre, weyl_closed_form, weyl_integral
from .scene import Emo
from .transfer import closed_form_plate, sweep_grid


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<28s} err={self.error:.3e} tol={self.tolerance:.1e} ({self.seconds:.2f}s) {self.detail}"


def _timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def check_weyl(wavelength: float = 0.1, distance_wl: float = 10.0, grid: SpectralGrid | None = None) -> CheckResult:
    """Classic-sign plane-wave expansion of the spherical wave on the z axis."""
    ctx = FrequencyContext(wavelength)
    r = np.array([0.0, 0.0, distance_wl * wavelength])
    val, dt = _timed(lambda: weyl_integral(r, grid or SpectralGrid(), ctx, sign=-1))
    ref = weyl_closed_form(r, ctx, sign=-1)
    return CheckResult("weyl", abs(val - ref) / abs(ref), 1e-2, dt)


def surface_gram_matrix(surf: Surface, panels: int = 8, order: int = 16) -> np.ndarray:
    """Spatial Gram matrix of the field modes on one face by tensor Gauss-Legendre."""
    xs, wx = composite_gauss_legendre(-surf.Lx / 2, surf.Lx / 2, panels * surf.Nx, order)
    ys, wy = composite_gauss_legendre(-surf.Ly / 2, surf.Ly / 2, panels * surf.Ny, order)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    W = np.outer(wy, wx)
    nx, ny = surf.harmonics
    modes = [SurfaceModeIndex(int(a), int(b), p, 0) for p in (0, 1) for a, b in zip(nx, ny)]
    vals = np.array([surf.spatial(m, X, Y).reshape(3, -1) for m in modes])  # (M, 3, P)
    flat = vals.transpose(0, 2, 1).reshape(len(modes), -1)
    w = np.repeat(W.ravel(), 3)
    return (flat.conj() * w) @ flat.T


def check_orthonormality(Nx: int = 5, Ny: int = 5, Lx: float = 0.3, Ly: float = 0.2) -> CheckResult:
    surf = Surface(Lx=Lx, Ly=Ly, Nx=Nx, Ny=Ny)
    G, dt = _timed(lambda: surface_gram_matrix(surf))
    err = float(np.max(np.abs(G - np.eye(G.shape[0]))))
    return CheckResult("orthonormality", err, 1e-9, dt, f"{G.shape[0]} modes")


def line_coupling_spatial(src: Line, obs: Line, ctx: FrequencyContext, order: int = 16, panels: int = 12) -> np.ndarray:
    """Brute-force ``E``-from-``J`` coupling of two parallel y-directed lines.

    Both lines lie along y; ``obs`` is displaced from ``src`` by a pure
    translation.  Uses ``E_y = j/(w eps) [k0^2 + d^2/dy^2] int I(y') g dy'``
    with ``g = exp(j k0 R) / (4 pi R)``.
    """
    d = obs.pose.position - src.pose.position
    if abs(d[0]) + abs(d[2]) == 0:
        raise ValueError("lines must be separated")
    k = ctx.k0
    ys, ws = composite_gauss_legendre(-src.length / 2, src.length / 2, panels * src.n_modes, order)
    yo, wo = composite_gauss_legendre(-obs.length / 2, obs.length / 2, panels * obs.n_modes, order)
    dy = (yo[:, None] + d[1]) - ys[None, :]
    rho2 = d[0] ** 2 + d[2] ** 2
    R = np.sqrt(dy**2 + rho2)
    g = np.exp(1j * k * R) / (4 * np.pi * R)
    a = 1j * k - 1.0 / R
    g1 = g * a  # dg/dR
    g2 = g * (a**2 + 1.0 / R**2)  # d2g/dR2
    gyy = g2 * (dy / R) ** 2 + g1 * (1.0 / R - dy**2 / R**3)
    kern = 1j / (ctx.omega * ctx.permittivity) * (k**2 * g + gyy)
    out = np.zeros((obs.n_modes, src.n_modes), dtype=complex)
    for n in range(obs.n_modes):
        po = np.conj(obs.spatial(n, yo)) * wo
        for u in range(src.n_modes):
            ps = src.spatial(u, ys) * ws
            out[n, u] = po @ kern @ ps
    return out


def check_coupling_oracle(wavelength: float = 0.1, separation_wl: float = 2.0, grid: SpectralGrid | None = None) -> CheckResult:
    ctx = FrequencyContext(wavelength)
    src = Line(length=wavelength, n_modes=3)
    obs = Line(length=wavelength, n_modes=3, pose=translated(z=separation_wl * wavelength))
    cm, dt = _timed(lambda: assemble_general(src, obs, grid or SpectralGrid(), ctx))
    ref = line_coupling_spatial(src, obs, ctx)
    err = float(np.max(np.abs(cm.G_EJ - ref)) / np.max(np.abs(ref)))
    return CheckResult("coupling-oracle", err, 1e-3, dt)


def check_closed_form_plate(
    wavelength: float = 0.1, L: float = 0.53, N: int = 7, p_z: float = 0.5, Y: complex = 1.0 / 377.0, n_grid: int = 21
) -> CheckResult:
    """Full pipeline against the per-harmonic closed form on a propagating-band grid."""
    ctx = FrequencyContext(wavelength)
    surf = Surface(Lx=L, Ly=L, Nx=N, Ny=N, delta=0.0, thin=True, pose=translated(z=p_z))
    ax = np.linspace(-0.95, 0.95, n_grid)

    def run():
        grid = sweep_grid([Emo(surf, constant_admittance(surf, ctx, Y))], ctx, ax, ax)
        kk = ax * ctx.k0
        ref = closed_form_plate(
            Y, L, L, N, N, p_z, (kk[None, :], np.zeros((1, n_grid))), (kk[:, None], np.zeros((n_grid, 1))), ctx
        )
        return grid.H, ref

    (H, ref), dt = _timed(run)
    err = float(np.max(np.abs(H - ref)) / np.max(np.abs(ref)))
    return CheckResult("closed-form-plate", err, 1e-6, dt, f"{n_grid}x{n_grid} grid")


SUITES = {
    "weyl": [check_weyl],
    "orthonormality": [check_orthonormality],
    "coupling-oracle": [check_coupling_oracle],
    "closed-form-plate": [check_closed_form_plate],
}
SUITES["all"] = [f for k in ("weyl", "orthonormality", "coupling-oracle", "closed-form-plate") for f in SUITES[k]]


def run_suite(name: str) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return [fn() for fn in SUITES[name]]
