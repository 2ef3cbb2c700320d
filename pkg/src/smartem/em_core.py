"""Free-space constants, wavevector branches and rigid poses.

Phasor convention
-----------------
Fields carry an implicit ``exp(-j*omega*t)`` time dependence, so an outgoing
spherical wave is ``exp(+j*k0*r)/r`` and a plane wave leaving the plane
``z = 0`` towards ``+z`` varies as ``exp(+j*kz*z)`` with ``Im(kz) >= 0``.
Spatial Fourier transforms use the kernel ``exp(-j k.r)``.  Results for the
``exp(+j*omega*t)`` convention are the complex conjugates (with conjugated
surface admittances).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants

C0 = constants.c
MU0 = constants.mu_0
EPS0 = constants.epsilon_0


@dataclass(frozen=True)
class FrequencyContext:
    """Single-frequency free-space context.

    ``permittivity`` and ``permeability`` default to the CODATA vacuum values
    and may be overridden (e.g. ``1.0`` each for normalized-unit tests).
    """

    wavelength: float
    permittivity: float = EPS0
    permeability: float = MU0

    def __post_init__(self):
        for name in ("wavelength", "permittivity", "permeability"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be finite and positive, got {v!r}")

    @property
    def k0(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def light_speed(self) -> float:
        return 1.0 / np.sqrt(self.permittivity * self.permeability)

    @property
    def omega(self) -> float:
        return self.k0 * self.light_speed

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.permeability / self.permittivity))

    @classmethod
    def from_frequency(cls, frequency: float, **kw) -> "FrequencyContext":
        return cls(wavelength=C0 / frequency, **kw)


def kz_branch(kx, ky, ctx: FrequencyContext):
    """Longitudinal wavenumber with ``Re(kz) >= 0`` and ``Im(kz) >= 0``.

    Real for ``kx**2 + ky**2 <= k0**2`` and ``+j*sqrt(kx**2 + ky**2 - k0**2)``
    otherwise.  Accepts scalars or arrays; always returns complex.
    """
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    d = ctx.k0**2 - kx**2 - ky**2
    out = np.where(d >= 0, np.sqrt(np.abs(d)) + 0j, 1j * np.sqrt(np.abs(d)))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class Wavevector:
    kx: float
    ky: float
    kz: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.kx, self.ky, self.kz], dtype=complex)


def wavevector_pm(kx, ky, ctx: FrequencyContext, observer_above: bool) -> Wavevector:
    """Plane-wave wavevector reaching an observer above (``+kz``) or below (``-kz``)."""
    kz = kz_branch(kx, ky, ctx)
    return Wavevector(float(kx), float(ky), complex(kz if observer_above else -kz))


def rotation_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid placement: ``r_global = position + rotation @ r_local``."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-12, rtol=0):
            raise ValueError("rotation is not orthogonal")
        if abs(np.linalg.det(r) - 1.0) > 1e-12:
            raise ValueError("rotation must have det +1")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", r)

    @property
    def is_identity_rotation(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)))

    def relative_to(self, other: "Pose") -> "Pose":
        """Pose of ``self`` expressed in the local frame of ``other``."""
        rt = other.rotation.T
        return Pose(rt @ (self.position - other.position), rt @ self.rotation)


def translated(z: float = 0.0, x: float = 0.0, y: float = 0.0) -> Pose:
    return Pose(np.array([x, y, z], dtype=float))


# Vector helpers over the leading axis of shape (3, ...) arrays.

def cross(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return np.stack(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def dot(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def double_cross(k, v):
    """``k x (k x v)`` evaluated as ``k (k.v) - v (k.k)`` (non-Hermitian)."""
    return k * dot(k, v) - v * dot(k, k)
