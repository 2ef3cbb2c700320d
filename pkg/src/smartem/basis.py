"""Fourier-harmonic mode bases for the supported object geometries.

Each basis is described in its local (canonical) frame.  Every mode is a
constant polarization vector times a scalar spectrum, which lets the
coupling code reduce vector contractions to a handful of matrix products.

Two spectra are exposed per basis:

* ``current_scalar(kx, ky, kz)``: the Fourier transform (kernel
  ``exp(-j k.r)``) of the current modes.
* ``field_scalar_conj(kx, ky, kz)``: ``conj(Phi(conj(k)))`` for the field
  (observation) modes, i.e. ``iiint conj(Phi(r)) exp(j k.r) d^3r``.  It is
  the analytic continuation used when an observed field is projected on
  the mode.

Surface field modes are packed with the 0-based linear index
``(nx + (Nx-1)/2) + Nx*(ny + (Ny-1)/2) + p*Nx*Ny + s*2*Nx*Ny``; current
modes use the same packing without the side term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .em_core import FrequencyContext, Pose, Wavevector, kz_branch
from .errors import IndexOutOfRange

XHAT = np.array([1.0, 0.0, 0.0])
YHAT = np.array([0.0, 1.0, 0.0])
ZHAT = np.array([0.0, 0.0, 1.0])


def sinc_spectrum(k, length: float, n: int = 0):
    """``sqrt(L) * sinc(k L / 2pi - n)`` with ``sinc(x) = sin(pi x)/(pi x)``.

    ``k`` may be complex (evanescent or rotated wavevectors).
    """
    if not length > 0:
        raise ValueError("length must be positive")
    return np.sqrt(length) * np.sinc(np.asarray(k) * length / (2.0 * np.pi) - n)


def harmonic_range(count: int) -> np.ndarray:
    """Signed harmonic numbers ``-(count-1)/2 .. (count-1)/2``."""
    if count < 1 or count % 2 == 0:
        raise ValueError(f"harmonic count must be odd and positive, got {count}")
    h = (count - 1) // 2
    return np.arange(-h, h + 1)


@dataclass(frozen=True)
class SurfaceModeIndex:
    nx: int
    ny: int
    p: int = 0
    s: int = 0

    def linear(self, Nx: int, Ny: int) -> int:
        hx, hy = (Nx - 1) // 2, (Ny - 1) // 2
        if abs(self.nx) > hx or abs(self.ny) > hy or self.p not in (0, 1) or self.s not in (0, 1):
            raise IndexOutOfRange(f"{self} outside a {Nx}x{Ny} surface")
        return (self.nx + hx) + Nx * (self.ny + hy) + self.p * Nx * Ny + self.s * 2 * Nx * Ny

    @classmethod
    def from_linear(cls, n: int, Nx: int, Ny: int) -> "SurfaceModeIndex":
        if not 0 <= n < 4 * Nx * Ny:
            raise IndexOutOfRange(f"mode {n} outside [0, {4 * Nx * Ny})")
        s, rem = divmod(n, 2 * Nx * Ny)
        p, rem = divmod(rem, Nx * Ny)
        iy, ix = divmod(rem, Nx)
        return cls(ix - (Nx - 1) // 2, iy - (Ny - 1) // 2, p, s)


class BasisSet:
    """Common interface.  Subclasses are frozen dataclasses."""

    kind: ClassVar[str] = "abstract"
    pose: Pose

    @property
    def n_field(self) -> int:
        return len(self.field_pols)

    @property
    def n_current(self) -> int:
        return len(self.current_pols)

    @property
    def mode_count(self) -> int:
        return self.n_field

    # local-frame polarization vectors, shape (n, 3)
    field_pols: np.ndarray
    current_pols: np.ndarray

    def field_scalar_conj(self, kx, ky, kz) -> np.ndarray:
        raise NotImplementedError

    def current_scalar(self, kx, ky, kz) -> np.ndarray:
        raise NotImplementedError

    def field_support(self) -> np.ndarray:
        """Local points whose convex hull contains the field-mode support."""
        raise NotImplementedError

    def current_support(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def extent(self) -> float:
        """Largest dimension, used by the far-field validity test."""
        pts = np.vstack([self.field_support(), self.current_support()])
        return float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)))

    def with_pose(self, pose: Pose):
        from dataclasses import replace

        return replace(self, pose=pose)


def _ones(kx):
    return np.ones((1, np.size(kx)), dtype=complex)


@dataclass(frozen=True)
class Dipole(BasisSet):
    """Infinitesimal y-directed dipole at the local origin (one mode)."""

    kind: ClassVar[str] = "infinitesimal_dipole"
    pose: Pose = field(default_factory=Pose)

    @property
    def field_pols(self):
        return YHAT[None, :]

    current_pols = field_pols

    def field_scalar_conj(self, kx, ky, kz):
        return _ones(kx)

    def current_scalar(self, kx, ky, kz):
        return _ones(kx)

    def field_support(self):
        return np.zeros((1, 3))

    current_support = field_support


@dataclass(frozen=True)
class Line(BasisSet):
    """y-directed line of length ``length`` carrying ``n_modes`` harmonics."""

    kind: ClassVar[str] = "line"
    length: float = 1.0
    n_modes: int = 1
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("line length must be positive")
        harmonic_range(self.n_modes)

    @property
    def harmonics(self):
        return harmonic_range(self.n_modes)

    @property
    def field_pols(self):
        return np.tile(YHAT, (self.n_modes, 1))

    current_pols = field_pols

    def _spec(self, ky):
        ky = np.atleast_1d(ky)
        return sinc_spectrum(ky[None, :], self.length, self.harmonics[:, None]).astype(complex)

    def field_scalar_conj(self, kx, ky, kz):
        return self._spec(ky)

    def current_scalar(self, kx, ky, kz):
        return self._spec(ky)

    def field_support(self):
        h = 0.5 * self.length
        return np.array([[0.0, -h, 0.0], [0.0, h, 0.0]])

    current_support = field_support

    def spatial(self, n_index: int, y):
        """Local spatial profile of mode ``n_index`` along the line."""
        n = self.harmonics[n_index]
        y = np.asarray(y, dtype=float)
        inside = np.abs(y) <= 0.5 * self.length
        return np.where(inside, np.exp(2j * np.pi * n * y / self.length) / np.sqrt(self.length), 0.0)


@dataclass(frozen=True)
class Surface(BasisSet):
    """Rectangular ``Lx x Ly`` surface of thickness ``delta``.

    Field modes sit on the two faces ``z = +delta/2`` (side 0) and
    ``z = -delta/2`` (side 1); current modes sit on ``z = 0``.  With
    ``thin=True`` the side phases are dropped (the ``delta -> 0`` limit).
    """

    kind: ClassVar[str] = "surface"
    Lx: float = 1.0
    Ly: float = 1.0
    Nx: int = 1
    Ny: int = 1
    delta: float = 0.0
    thin: bool = False
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("surface sides must be positive")
        if self.delta < 0:
            raise ValueError("thickness must be non-negative")
        harmonic_range(self.Nx)
        harmonic_range(self.Ny)

    @classmethod
    def with_default_thickness(cls, ctx: FrequencyContext, **kw) -> "Surface":
        kw.setdefault("delta", ctx.wavelength / 100.0)
        return cls(**kw)

    @property
    def n_harm(self) -> int:
        return self.Nx * self.Ny

    @property
    def harmonics(self):
        """``(nx, ny)`` arrays for the ``Nx*Ny`` harmonics in packing order."""
        nx = np.tile(harmonic_range(self.Nx), self.Ny)
        ny = np.repeat(harmonic_range(self.Ny), self.Nx)
        return nx, ny

    @property
    def center_index(self) -> int:
        return SurfaceModeIndex(0, 0).linear(self.Nx, self.Ny)

    def harmonic_wavenumbers(self):
        nx, ny = self.harmonics
        return 2 * np.pi * nx / self.Lx, 2 * np.pi * ny / self.Ly

    @property
    def eff_delta(self) -> float:
        return 0.0 if self.thin else self.delta

    @property
    def field_pols(self):
        N = self.n_harm
        one = np.vstack([np.tile(XHAT, (N, 1)), np.tile(YHAT, (N, 1))])
        return np.vstack([one, one])

    @property
    def current_pols(self):
        N = self.n_harm
        return np.vstack([np.tile(XHAT, (N, 1)), np.tile(YHAT, (N, 1))])

    def _harm_spec(self, kx, ky):
        kx = np.atleast_1d(kx)
        ky = np.atleast_1d(ky)
        nx, ny = self.harmonics
        sx = sinc_spectrum(kx[None, :], self.Lx, harmonic_range(self.Nx)[:, None])
        sy = sinc_spectrum(ky[None, :], self.Ly, harmonic_range(self.Ny)[:, None])
        # (Ny, Nx, Q) -> packing order nx fastest
        return (sy[:, None, :] * sx[None, :, :]).reshape(self.n_harm, -1).astype(complex)

    def current_scalar(self, kx, ky, kz):
        s = self._harm_spec(kx, ky)
        return np.vstack([s, s])

    def side_phase(self, kz, side: int, conj: bool = False):
        """``exp(-j kz (0.5 - s) delta)`` or, with ``conj``, its analytic conjugate."""
        sgn = 1.0 if conj else -1.0
        return np.exp(sgn * 1j * np.atleast_1d(kz) * (0.5 - side) * self.eff_delta)

    def field_scalar_conj(self, kx, ky, kz):
        s = self._harm_spec(kx, ky)
        s0 = s * self.side_phase(kz, 0, conj=True)[None, :]
        s1 = s * self.side_phase(kz, 1, conj=True)[None, :]
        return np.vstack([s0, s0, s1, s1])

    def field_spectrum(self, kx, ky, kz):
        """Non-conjugated scalar spectra of the field modes, ``(4N, Q)``."""
        s = self._harm_spec(kx, ky)
        s0 = s * self.side_phase(kz, 0)[None, :]
        s1 = s * self.side_phase(kz, 1)[None, :]
        return np.vstack([s0, s0, s1, s1])

    def field_support(self):
        hx, hy, hz = 0.5 * self.Lx, 0.5 * self.Ly, 0.5 * self.eff_delta
        return np.array([[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])

    def current_support(self):
        hx, hy = 0.5 * self.Lx, 0.5 * self.Ly
        return np.array([[sx * hx, sy * hy, 0.0] for sx in (-1, 1) for sy in (-1, 1)])

    def spatial(self, mode: SurfaceModeIndex, x, y):
        """Tangential profile of a field mode on its face, shape ``(3, ...)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (np.abs(x) <= 0.5 * self.Lx) & (np.abs(y) <= 0.5 * self.Ly)
        ph = np.exp(2j * np.pi * (mode.nx * x / self.Lx + mode.ny * y / self.Ly)) / np.sqrt(self.Lx * self.Ly)
        val = np.where(inside, ph, 0.0)
        pol = XHAT if mode.p == 0 else YHAT
        return pol.reshape((3,) + (1,) * val.ndim) * val


@dataclass(frozen=True)
class PlaneWaveProbe(BasisSet):
    """Two field modes (x and y polarization) observing the 2D spectrum of
    the field on the global plane ``z = z_obs`` at wavenumber ``(kx, ky)``.

    The coupling towards this probe has a closed form and is handled by
    :func:`smartem.coupling.assemble_plane_wave_probe`.
    """

    kind: ClassVar[str] = "plane_wave_probe"
    kx: float = 0.0
    ky: float = 0.0
    z_obs: float = 0.0
    pose: Pose = field(default_factory=Pose)

    @property
    def field_pols(self):
        return np.vstack([XHAT, YHAT])

    @property
    def current_pols(self):
        return np.zeros((0, 3))


@dataclass(frozen=True)
class HarmonicCurrent(BasisSet):
    """Elementary harmonic sheet current ``a exp(j k'.r_perp) delta(z - z_src)``."""

    kind: ClassVar[str] = "harmonic_current"
    kx: float = 0.0
    ky: float = 0.0
    z_src: float = 0.0
    polarization: tuple = (1.0, 0.0, 0.0)
    pose: Pose = field(default_factory=Pose)

    @property
    def field_pols(self):
        return np.zeros((0, 3))

    @property
    def current_pols(self):
        return np.asarray(self.polarization, dtype=float)[None, :]


def mode_spectrum(basis: BasisSet, n: int, k: Wavevector, ctx: FrequencyContext | None = None) -> np.ndarray:
    """Vector spectrum of field mode ``n`` (0-based) in the canonical pose.

    For surfaces the side phase is included.  For the probe and harmonic
    current the returned vector is the amplitude multiplying
    ``(2pi)^2 delta(kx - kx') delta(ky - ky')``; it vanishes off the design
    wavenumber.
    """
    kx, ky, kz = np.array([k.kx]), np.array([k.ky]), np.array([k.kz], dtype=complex)
    if isinstance(basis, PlaneWaveProbe):
        if n not in (0, 1):
            raise IndexOutOfRange(n)
        if (k.kx, k.ky) != (basis.kx, basis.ky):
            return np.zeros(3, dtype=complex)
        return (2 * np.pi) ** 2 * basis.field_pols[n] * np.exp(-1j * k.kz * basis.z_obs)
    if isinstance(basis, HarmonicCurrent):
        if n != 0:
            raise IndexOutOfRange(n)
        if (k.kx, k.ky) != (basis.kx, basis.ky):
            return np.zeros(3, dtype=complex)
        return (2 * np.pi) ** 2 * basis.current_pols[0] * np.exp(-1j * k.kz * basis.z_src)
    if not 0 <= n < basis.n_field:
        raise IndexOutOfRange(f"mode {n} outside [0, {basis.n_field})")
    if isinstance(basis, Surface):
        scal = basis.field_spectrum(kx, ky, kz)[n, 0]
    else:
        scal = np.conj(basis.field_scalar_conj(kx, ky, np.conj(kz))[n, 0])
    return basis.field_pols[n] * scal


def apply_pose(spectrum, pose: Pose):
    """Spectrum of a posed object from its canonical spectrum.

    ``spectrum`` maps ``k`` (shape ``(3, ...)``) to vectors ``(3, ...)``;
    the result maps global ``k`` to ``R Phi(R^T k) exp(-j p.k)``.
    """
    R = pose.rotation
    p = pose.position

    def posed(k):
        k = np.asarray(k)
        kl = np.tensordot(R.T, k, axes=1)
        return np.tensordot(R, np.asarray(spectrum(kl)), axes=1) * np.exp(-1j * np.tensordot(p, k, axes=1))

    return posed


def local_wavevectors(kx, ky, kz, rotation: np.ndarray):
    """Components of ``R^T k`` for global wavevector arrays."""
    k = np.stack([np.asarray(kx, dtype=complex), np.asarray(ky, dtype=complex), np.asarray(kz, dtype=complex)])
    kl = np.tensordot(rotation.T, k, axes=1)
    return kl[0], kl[1], kl[2]


def propagating_wavevector(kx, ky, ctx: FrequencyContext, above: bool = True):
    kz = kz_branch(kx, ky, ctx)
    return Wavevector(float(kx), float(ky), complex(kz if above else -kz))
