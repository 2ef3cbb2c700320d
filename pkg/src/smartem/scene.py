"""Scene graph of objects and the stacked feedback solve.

Per object ``m`` with ``nf`` field modes and ``nc`` current modes:

* field vector ``f`` has length ``2*nf`` (``[e; h]``),
* impressed ``a`` and induced ``b = D f`` have length ``2*nc`` (``[J; M]``).

The fields satisfy ``f_m = sum_i G(m, i) (D_i f_i + a_i)``, solved as one
dense system ``(I - G D) f = G a``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import BasisSet, HarmonicCurrent, PlaneWaveProbe, Surface
from .constitutive import ConstitutiveMatrix
from .coupling import (
    CouplingMatrix,
    assemble_far_field,
    assemble_general,
    assemble_harmonic_current,
    assemble_plane_wave_probe,
    assemble_self_surface,
    cross_matrix,
    dyad_matrix,
)
from .em_core import FrequencyContext, kz_branch
from .errors import PointInsideSlab, SingularSystem, WrongGeometry
from .quadrature import CAUCHY_PREFACTOR, SpectralGrid, spectral_sum

ROLES = ("physical", "source_probe", "field_probe")


@dataclass(frozen=True)
class Emo:
    basis: BasisSet
    constitutive: ConstitutiveMatrix | None = None
    impressed: np.ndarray | None = None
    role: str = "physical"
    name: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        nf, nc = self.basis.n_field, self.basis.n_current
        if self.constitutive is not None:
            if self.role != "physical" and np.any(self.constitutive.D):
                raise ValueError("probe objects must have a zero constitutive matrix")
            if self.constitutive.D.shape != (2 * nc, 2 * nf):
                raise ValueError(f"D has shape {self.constitutive.D.shape}, expected {(2 * nc, 2 * nf)}")
        if self.impressed is not None and np.shape(self.impressed) != (2 * nc,):
            raise ValueError(f"impressed vector must have length {2 * nc}")

    @property
    def D(self) -> np.ndarray:
        if self.constitutive is None:
            return np.zeros((2 * self.basis.n_current, 2 * self.basis.n_field), dtype=complex)
        return self.constitutive.D

    @property
    def a(self) -> np.ndarray:
        if self.impressed is None:
            return np.zeros(2 * self.basis.n_current, dtype=complex)
        return np.asarray(self.impressed, dtype=complex)


class Scene:
    """Ordered collection of objects with lazily assembled couplings.

    ``self_coupling`` is ``"large"`` (equal-harmonic closed form) or
    ``"exact"``.  ``negligible`` lists ``(m, i)`` pairs whose coupling is
    forced to zero; ``far_field`` lists pairs assembled with the
    stationary-phase formula.
    """

    def __init__(
        self,
        emos,
        ctx: FrequencyContext,
        grid: SpectralGrid | None = None,
        self_coupling: str = "large",
        negligible=(),
        far_field=(),
        include_direct: bool = False,
    ):
        self.emos = tuple(emos)
        self.ctx = ctx
        self.grid = grid or SpectralGrid()
        if self_coupling not in ("large", "exact"):
            raise ValueError("self_coupling must be 'large' or 'exact'")
        self.self_coupling = self_coupling
        self.negligible = {tuple(p) for p in negligible}
        self.far_field = {tuple(p) for p in far_field}
        self.include_direct = include_direct
        self._cache: dict = {}

    def __len__(self):
        return len(self.emos)

    def sizes(self):
        return [(2 * e.basis.n_field, 2 * e.basis.n_current) for e in self.emos]

    def _zero(self, m, i, method="zero"):
        bm, bi = self.emos[m].basis, self.emos[i].basis
        z = np.zeros((bm.n_field, bi.n_current), dtype=complex)
        return CouplingMatrix.from_electric(z, z, self.ctx, method, i, m)

    def coupling(self, m: int, i: int) -> CouplingMatrix:
        key = (m, i)
        if key not in self._cache:
            self._cache[key] = self._assemble(m, i)
        return self._cache[key]

    def _assemble(self, m, i):
        obs, src = self.emos[m].basis, self.emos[i].basis
        ctx = self.ctx
        if obs.n_field == 0 or src.n_current == 0 or (m, i) in self.negligible:
            return self._zero(m, i)
        if m == i:
            if isinstance(src, Surface):
                return assemble_self_surface(src, ctx, self.self_coupling == "large", source=i)
            return self._zero(m, i, "self_point")
        if isinstance(src, HarmonicCurrent) and isinstance(obs, PlaneWaveProbe):
            return self._direct(m, i)
        if isinstance(src, HarmonicCurrent):
            c = assemble_harmonic_current(obs, src.kx, src.ky, src.z_src, src.polarization, ctx, i, m)
            return _squeeze(c, ctx)
        if isinstance(obs, PlaneWaveProbe):
            c = assemble_plane_wave_probe(src, obs.kx, obs.ky, obs.z_obs, ctx, i, m)
            return _squeeze(c, ctx)
        if (m, i) in self.far_field:
            return assemble_far_field(src, obs, ctx, source=i, observer=m)
        return assemble_general(src, obs, self.grid, ctx, source=i, observer=m)

    def _direct(self, m, i):
        """Source-to-probe term: a 2D delta in wavenumber, kept only on request
        and only when both wavenumbers coincide (its coefficient is returned)."""
        obs, src = self.emos[m].basis, self.emos[i].basis
        if not self.include_direct or (obs.kx, obs.ky) != (src.kx, src.ky):
            return self._zero(m, i, "direct")
        kz = complex(kz_branch(src.kx, src.ky, self.ctx))
        above = obs.z_obs > src.z_src
        kzs = kz if above else -kz
        k = (np.array([src.kx]), np.array([src.ky]), np.array([kzs]))
        a = np.asarray(src.polarization, dtype=float)
        ph = np.exp(1j * kzs * (obs.z_obs - src.z_src)) / kz
        Da = np.einsum("abk,b->a", dyad_matrix(*k), a)[:2]
        Ca = np.einsum("abk,b->a", cross_matrix(*k), a)[:2]
        EJ = (ph * Da / (2 * self.ctx.omega * self.ctx.permittivity))[:, None]
        EM = (ph * Ca / 2)[:, None]
        return CouplingMatrix.from_electric(EJ, EM, self.ctx, "direct", i, m)

    def stacked(self, rows=None, cols=None):
        """Stacked full coupling matrix over the given object indices."""
        rows = list(range(len(self))) if rows is None else list(rows)
        cols = list(range(len(self))) if cols is None else list(cols)
        return np.block([[self.coupling(m, i).full for i in cols] for m in rows])

    def stacked_D(self, idx=None):
        idx = list(range(len(self))) if idx is None else list(idx)
        return sla.block_diag(*[self.emos[i].D for i in idx])

    def stacked_a(self, idx=None):
        idx = list(range(len(self))) if idx is None else list(idx)
        return np.concatenate([self.emos[i].a for i in idx])

    def solve(self, cond_limit: float = 1e14) -> "Solution":
        G = self.stacked()
        D = self.stacked_D()
        a = self.stacked_a()
        A = np.eye(G.shape[0]) - G @ D
        rhs = G @ a
        f, cond = lu_solve_with_condition(A, rhs, cond_limit)
        return Solution(self, _split(f, [s[0] for s in self.sizes()]), cond)


def _squeeze(c: CouplingMatrix, ctx) -> CouplingMatrix:
    return CouplingMatrix.from_electric(c.G_EJ[0], c.G_EM[0], ctx, c.method, c.source, c.observer)


def _split(v, lengths):
    out, s = [], 0
    for n in lengths:
        out.append(v[s : s + n])
        s += n
    return out


def lu_solve_with_condition(A, rhs, cond_limit: float = 1e14):
    """Solve ``A x = rhs`` with one LU; returns ``(x, cond_1_estimate)``."""
    if A.shape[0] == 0:
        return np.zeros_like(rhs), 1.0
    anorm = np.linalg.norm(A, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    rcond, info = sla.lapack.zgecon(lu.astype(complex), anorm)
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularSystem(f"feedback system is near singular (cond ~ {cond:.3e})", cond)
    return sla.lu_solve((lu, piv), rhs), cond


@dataclass
class Solution:
    scene: Scene
    f: list
    condition: float
    _extra: dict = field(default_factory=dict)

    def b(self, m: int) -> np.ndarray:
        """Induced currents ``D f`` of object ``m``."""
        return self.scene.emos[m].D @ self.f[m]

    def total_current(self, m: int) -> np.ndarray:
        return self.b(m) + self.scene.emos[m].a

    def residual(self) -> float:
        """``||f - sum G (D f + a)|| / ||f||``."""
        sc = self.scene
        num, den = 0.0, 0.0
        for m in range(len(sc)):
            acc = np.zeros_like(self.f[m])
            for i in range(len(sc)):
                acc = acc + sc.coupling(m, i).full @ self.total_current(i)
            num += np.linalg.norm(self.f[m] - acc) ** 2
            den += np.linalg.norm(self.f[m]) ** 2
        return float(np.sqrt(num) / (np.sqrt(den) if den > 0 else 1.0))

    def scattered_field(self, m: int) -> np.ndarray:
        """Field produced on ``m`` by its own induced currents."""
        return self.scene.coupling(m, m).full @ self.b(m)

    def incident_field(self, m: int) -> np.ndarray:
        return self.f[m] - self.scattered_field(m)


def scattered_from_incident(G_self: np.ndarray, D: np.ndarray, f_inc: np.ndarray) -> np.ndarray:
    """``f_s = (I - G D)^-1 G D f_inc``."""
    GD = G_self @ D
    x, _ = lu_solve_with_condition(np.eye(GD.shape[0]) - GD, GD @ f_inc)
    return x


def power_flux(surf: BasisSet, f: np.ndarray, side: int | str = 0) -> complex:
    """Complex power ``1/2 sum (e_x h_y* - e_y h_x*)`` through a surface face.

    ``side`` is 0 (face at ``+delta/2``, normal ``+z``), 1 (face at
    ``-delta/2``; value given for normal ``+z``) or ``"outward"`` for the net
    flux leaving the surface through both faces.
    """
    if not isinstance(surf, Surface):
        raise WrongGeometry("power flux is defined for surfaces")
    N = surf.n_harm
    f = np.asarray(f)
    e, h = f[: 4 * N], f[4 * N :]

    def face(s):
        ex, ey = e[2 * N * s : 2 * N * s + N], e[2 * N * s + N : 2 * N * (s + 1)]
        hx, hy = h[2 * N * s : 2 * N * s + N], h[2 * N * s + N : 2 * N * (s + 1)]
        return 0.5 * np.sum(ex * np.conj(hy) - ey * np.conj(hx))

    if side == "outward":
        return face(0) - face(1)
    return face(int(side))


def radiated_power(surf: Surface, G_self: CouplingMatrix, b: np.ndarray) -> float:
    """Net real power leaving a surface through both faces for currents ``b``."""
    return float(np.real(power_flux(surf, G_self.full @ b, "outward")))


def evaluate_field(r, solution: Solution, grid: SpectralGrid | None = None, far_field: bool = False):
    """Total ``(E, H)`` at point ``r`` radiated by every object's currents.

    Spectral synthesis per object in its local frame (or the stationary-phase
    limit when ``far_field``).  Raises :class:`PointInsideSlab` when ``r``
    lies in the current plane of an object.
    """
    sc = solution.scene
    ctx = sc.ctx
    grid = grid or sc.grid
    r = np.asarray(r, dtype=float)
    E = np.zeros(3, dtype=complex)
    H = np.zeros(3, dtype=complex)
    for m, emo in enumerate(sc.emos):
        basis = emo.basis
        if basis.n_current == 0:
            continue
        cur = solution.total_current(m)
        if not np.any(cur):
            continue
        nc = basis.n_current
        J, M = cur[:nc], cur[nc:]
        if isinstance(basis, HarmonicCurrent):
            e, h = _harmonic_field(basis, J[0], M[0], r, ctx)
        else:
            e, h = _object_field(basis, J, M, r, ctx, grid, far_field)
        E += e
        H += h
    return E, H


def _harmonic_field(src: HarmonicCurrent, j, m, r, ctx):
    kz = complex(kz_branch(src.kx, src.ky, ctx))
    dz = r[2] - src.z_src
    if dz == 0:
        raise PointInsideSlab("point lies on the harmonic-current plane")
    kzs = kz if dz > 0 else -kz
    k = (np.array([src.kx]), np.array([src.ky]), np.array([kzs]))
    a = np.asarray(src.polarization, dtype=float)
    ph = np.exp(1j * (src.kx * r[0] + src.ky * r[1] + kzs * dz)) / (2 * kz)
    Da = np.einsum("abk,b->a", dyad_matrix(*k), a)
    Ca = np.einsum("abk,b->a", cross_matrix(*k), a)
    E = ph * (j * Da / (ctx.omega * ctx.permittivity) + m * Ca)
    H = ph * (-j * Ca + m * Da / (ctx.omega * ctx.permeability))
    return E, H


def _object_field(basis, J, M, r, ctx, grid, far_field):
    R, p = basis.pose.rotation, basis.pose.position
    rl = R.T @ (r - p)
    if rl[2] == 0:
        raise PointInsideSlab("point lies in the current plane of an object")
    if isinstance(basis, Surface) and abs(rl[2]) <= basis.eff_delta / 2:
        if abs(rl[0]) <= basis.Lx / 2 and abs(rl[1]) <= basis.Ly / 2:
            raise PointInsideSlab("point lies inside a surface slab")
    above = rl[2] > 0
    P = basis.current_pols  # (nc, 3)

    def spectra(kx, ky, kz):
        chi = basis.current_scalar(kx, ky, kz)  # (nc, Q)
        jt = P.T @ (J[:, None] * chi)  # (3, Q)
        mt = P.T @ (M[:, None] * chi)
        D = dyad_matrix(kx, ky, kz)
        C = cross_matrix(kx, ky, kz)
        e = -1j / (ctx.omega * ctx.permittivity) * np.einsum("abq,bq->aq", D, jt) - 1j * np.einsum("abq,bq->aq", C, mt)
        h = 1j * np.einsum("abq,bq->aq", C, jt) - 1j / (ctx.omega * ctx.permeability) * np.einsum("abq,bq->aq", D, mt)
        return np.vstack([e, h])

    if far_field:
        d = float(np.linalg.norm(rl))
        k = ctx.k0 * rl / d
        val = spectra(np.array([k[0]]), np.array([k[1]]), np.array([k[2]], dtype=complex))[:, 0]
        val = CAUCHY_PREFACTOR * val * (-2j * np.pi * np.exp(1j * ctx.k0 * d) / d)
    else:
        def integrand(kx, ky, kz):
            return spectra(kx, ky, kz) * np.exp(1j * (kx * rl[0] + ky * rl[1] + kz * rl[2]))[None, :]

        val = CAUCHY_PREFACTOR * spectral_sum(integrand, grid, ctx, above)
    return R @ val[:3], R @ val[3:]
