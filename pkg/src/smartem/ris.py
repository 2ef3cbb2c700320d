"""Surface designs that redirect a plane wave toward a chosen direction.

Three strategies are provided:

* :func:`method1_periodic_admittance` - a sinusoidal electric/magnetic
  admittance pair (a Huygens-type sheet) whose period sets the reflection
  angle.
* :func:`method2_optimize` - numerical ascent on the admittance harmonics,
  keeping the radiated power fixed.
* :func:`method3_mode_converter` - a free-form constitutive matrix whose
  closed-loop response maps one incident mode onto one reflected mode.

All time-harmonic quantities use the ``exp(-j w t)`` convention.  Admittances
written for ``exp(+j w t)`` are conjugated on input.
"""

from __future__ import annotations

import os
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .basis import Surface, SurfaceModeIndex
from .constitutive import (
    ConstitutiveMatrix,
    Sinusoid,
    build_free_form,
    build_homogenized_sheet,
    expansion_matrix,
    homogenized_from_matrices,
)
from .coupling import assemble_harmonic_current, assemble_plane_wave_probe, assemble_self_surface
from .em_core import FrequencyContext
from .errors import BudgetExhausted, DegenerateSpec, HarmonicMismatch, SingularSystem
from .scene import lu_solve_with_condition, power_flux
from .transfer import XPOL, direct_term


@dataclass(frozen=True)
class ReflectionSpec:
    """In-plane (xz) redirection from ``theta_i`` to ``theta_r`` (radians)."""

    theta_i: float
    theta_r: float
    wavelength: float
    plane: str = "xz"

    def __post_init__(self):
        if self.plane != "xz":
            raise ValueError("only the xz plane is supported")
        for name in ("theta_i", "theta_r"):
            v = getattr(self, name)
            if not (np.isfinite(v) and abs(v) <= np.pi / 2):
                raise ValueError(f"{name} must lie in [-pi/2, pi/2]")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    @classmethod
    def from_degrees(cls, theta_i: float, theta_r: float, wavelength: float) -> "ReflectionSpec":
        return cls(np.radians(theta_i), np.radians(theta_r), wavelength)

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def k_in(self) -> float:
        return self.k0 * np.sin(self.theta_i)

    @property
    def k_out(self) -> float:
        return self.k0 * np.sin(self.theta_r)


def nearest_harmonic(k: float, L: float) -> int:
    """Harmonic number closest to ``k L / 2 pi``; exact ties go toward zero."""
    v = k * L / (2 * np.pi)
    return int(np.sign(v) * np.ceil(abs(v) - 0.5))


# --- Method 1 -------------------------------------------------------------


def method1_periodic_admittance(
    spec: ReflectionSpec,
    surf: Surface,
    ctx: FrequencyContext | None = None,
    harmonic_tol: float = 1e-2,
) -> ConstitutiveMatrix:
    """Sinusoidal sheet ``Y_JE = conj(j/eta) sin(k_r x)``, ``Y_MH = -eta^2 Y_JE``.

    The magnetic admittance sign makes the sheet a Huygens reflector for
    the magnetic-current sign used throughout the package (a y-directed
    magnetic sheet current jumps ``E_x`` by ``-M_y`` across +z).
    """
    ctx = ctx or FrequencyContext(spec.wavelength)
    if np.sin(spec.theta_r) == 0:
        raise DegenerateSpec("theta_r = 0 makes the admittance vanish identically")
    v = spec.k_out * surf.Lx / (2 * np.pi)
    if abs(v - np.round(v)) > harmonic_tol:
        warnings.warn(
            f"k_r Lx / 2pi = {v:.3f} is not an integer: admittance leaks into neighbouring harmonics",
            HarmonicMismatch,
            stacklevel=2,
        )
    amp = np.conj(1j / ctx.eta)
    y_je = Sinusoid(amp, spec.k_out)
    y_mh = Sinusoid(-(ctx.eta**2) * amp, spec.k_out)
    with warnings.catch_warnings():
        # a truncated sine on a finite aperture is expected to leak
        warnings.simplefilter("ignore")
        cm = build_homogenized_sheet(surf, ctx, y_je=y_je, y_mh=y_mh)
    cm.meta.update(method=1, k_r=spec.k_out, harmonic_position=v)
    return cm


# --- shared evaluation machinery -----------------------------------------


class DesignProblem:
    """Fast evaluation of ``H_xx(k_r; k_i)`` and radiated power for a surface.

    ``G`` is the surface self-coupling (large-surface form unless
    ``large_approx=False``); the source is a unit x-directed harmonic current
    on ``z = z_src`` and the probe sits on ``z = z_obs``.
    """

    def __init__(
        self,
        spec: ReflectionSpec,
        surf: Surface,
        ctx: FrequencyContext | None = None,
        z_src: float = 0.0,
        z_obs: float = 0.0,
        large_approx: bool = True,
    ):
        self.spec, self.surf = spec, surf
        self.ctx = ctx = ctx or FrequencyContext(spec.wavelength)
        self.z_src, self.z_obs = z_src, z_obs
        self.self_coupling = assemble_self_surface(surf, ctx, large_approx=large_approx)
        self.G = self.self_coupling.full
        ki, kr = np.array([spec.k_in]), np.array([spec.k_out])
        zero = np.zeros(1)
        src = assemble_harmonic_current(surf, ki, zero, z_src, XPOL, ctx)
        self.source = np.concatenate([src.G_EJ[0, :, 0], src.G_HJ[0, :, 0]])
        prb = assemble_plane_wave_probe(surf, kr, zero, z_obs, ctx)
        self.probe = np.concatenate([prb.G_EJ[0, 0, :], prb.G_EM[0, 0, :]])
        # incident field of unit tangential amplitude at the surface plane
        amp = abs(direct_term(ki, zero, z_src, surf.pose.position[2], ctx)[0])
        self.unit_incident = self.source / amp
        self.incident_power = float(abs(np.real(power_flux(surf, self.unit_incident, 1))))

    def currents(self, D: np.ndarray, f_inc: np.ndarray) -> np.ndarray:
        """Induced currents ``D (I - G D)^-1 f_inc``."""
        A = np.eye(self.G.shape[0]) - self.G @ D
        x, _ = lu_solve_with_condition(A, f_inc)
        return D @ x

    def transfer(self, D: np.ndarray) -> complex:
        return complex(self.probe @ self.currents(D, self.source))

    def radiated_power(self, D: np.ndarray) -> float:
        b = self.currents(D, self.unit_incident)
        return float(np.real(power_flux(self.surf, self.G @ b, "outward")))


def design_peak(grid, spec: ReflectionSpec, window: float = 0.02) -> float:
    """Largest ``|H|`` within ``window`` (in k/k0) of the design point of a grid."""
    kr, ki = np.sin(spec.theta_r), np.sin(spec.theta_i)
    rows = np.abs(grid.kx_norm - kr) <= window
    cols = np.abs(grid.kxp_norm - ki) <= window
    if not rows.any() or not cols.any():
        raise ValueError("grid does not contain the design point")
    return float(np.nanmax(np.abs(grid.H[np.ix_(rows, cols)])))


# --- Method 2 -------------------------------------------------------------


@dataclass
class OptimizationResult:
    constitutive: ConstitutiveMatrix
    objective_trace: list = field(default_factory=list)
    power_trace: list = field(default_factory=list)
    power_target: float = 0.0
    evaluations: int = 0
    iterations: int = 0
    exhausted: bool = False
    reason: str = ""

    @property
    def D(self) -> np.ndarray:
        return self.constitutive.D


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SMARTEM_THREADS", "1")))
    except ValueError:
        return 1


def method2_optimize(
    spec: ReflectionSpec,
    surf: Surface,
    ctx: FrequencyContext | None = None,
    initial: ConstitutiveMatrix | None = None,
    max_iterations: int = 40,
    max_evaluations: int = 20000,
    step: float = 0.05,
    min_step: float = 1e-6,
    fd_step: float = 1e-6,
    power_target: float | None = None,
    power_tol: float = 1e-9,
    problem: DesignProblem | None = None,
) -> OptimizationResult:
    """Projected gradient ascent of ``|H_xx(k_r; k_i)|`` over admittance harmonics.

    The unknowns are the real and imaginary parts of the ``X_JE`` and
    ``X_MH`` coefficient vectors (scaled to be dimensionless).  After each
    step the coefficients are rescaled by a scalar so that the radiated power
    under a unit normally incident wave equals ``power_target`` (default: the
    initial design's value).  A step is accepted only if the objective does
    not decrease; otherwise it is halved.  When the evaluation budget runs out
    the best iterate so far is returned with ``exhausted=True``.
    """
    ctx = ctx or FrequencyContext(spec.wavelength)
    prob = problem or DesignProblem(spec, surf, ctx)
    init = initial or method1_periodic_admittance(spec, surf, ctx)
    coeffs = init.meta.get("coefficients")
    if coeffs is None:
        raise ValueError("initial design must be a homogenized sheet with stored coefficients")
    eta, N = ctx.eta, surf.n_harm
    zero = np.zeros((N, N), dtype=complex)

    def unpack(x):
        je = (x[:N] + 1j * x[N : 2 * N]) / eta
        mh = (x[2 * N : 3 * N] + 1j * x[3 * N :]) * eta
        return je, mh

    def build_D(x):
        je, mh = unpack(x)
        return homogenized_from_matrices(
            expansion_matrix(je, surf, ctx), zero, zero, expansion_matrix(mh, surf, ctx)
        ).D

    evals = 0
    lock = threading.Lock()

    def tick():
        nonlocal evals
        with lock:
            evals += 1

    def objective(x):
        tick()
        return abs(prob.transfer(build_D(x)))

    def power(c, x):
        tick()
        return prob.radiated_power(build_D(c * x))

    x0 = np.concatenate(
        [coeffs["JE"].real * eta, coeffs["JE"].imag * eta, coeffs["MH"].real / eta, coeffs["MH"].imag / eta]
    )
    P0 = prob.radiated_power(build_D(x0)) if power_target is None else float(power_target)
    if not P0 > 0:
        raise SingularSystem("initial design radiates no power", float("inf"))

    def project(x):
        """Scale ``x`` so the radiated power equals ``P0``; ``None`` if impossible."""
        g = lambda c: power(c, x) / P0 - 1.0
        g1 = g(1.0)
        if abs(g1) <= power_tol:
            return x
        lo, hi = 1.0, 1.0
        glo = ghi = g1
        for _ in range(60):
            if glo * ghi < 0:
                break
            if g1 > 0:
                lo /= 1.5
                glo = g(lo)
            else:
                hi *= 1.5
                ghi = g(hi)
        else:
            return None
        if glo * ghi >= 0:
            return None
        c = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return c * x

    x = project(x0)
    if x is None:
        raise SingularSystem("cannot meet the power target with the initial design", float("inf"))
    fx = objective(x)
    px = prob.radiated_power(build_D(x))
    result = OptimizationResult(
        ConstitutiveMatrix(build_D(x), "homogenized_sheet", {"method": 2, "coefficients": dict(zip(("JE", "MH"), unpack(x)))}),
        [fx],
        [px],
        P0,
    )
    if max_iterations <= 0 or max_evaluations <= 0:
        result.constitutive = init
        result.objective_trace = [abs(prob.transfer(init.D))]
        result.power_trace = [prob.radiated_power(init.D)]
        result.evaluations = evals
        result.reason = "zero budget"
        return result

    n = x.size
    workers = _threads()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def gradient(x, fx):
        scale = max(np.max(np.abs(x)), 1.0)
        h = fd_step * scale

        def probe(i):
            e = np.zeros(n)
            e[i] = h
            return (objective(x + e) - objective(x - e)) / (2 * h)

        vals = list(pool.map(probe, range(n))) if pool else [probe(i) for i in range(n)]
        return np.array(vals)

    try:
        it = 0
        while it < max_iterations:
            if evals + 2 * n > max_evaluations:
                result.exhausted, result.reason = True, "evaluation budget exhausted"
                break
            g = gradient(x, fx)
            gn = np.linalg.norm(g)
            if gn == 0:
                result.reason = "zero gradient"
                break
            direction = g / gn * np.linalg.norm(x)
            accepted = False
            while step >= min_step:
                if evals >= max_evaluations:
                    break
                cand = project(x + step * direction)
                if cand is not None:
                    fc = objective(cand)
                    if fc >= fx:
                        x, fx, accepted = cand, fc, True
                        break
                step *= 0.5
            if not accepted:
                result.reason = "step below minimum" if step < min_step else "evaluation budget exhausted"
                result.exhausted = step >= min_step
                break
            it += 1
            step *= 1.5
            result.objective_trace.append(fx)
            result.power_trace.append(prob.radiated_power(build_D(x)))
        else:
            result.exhausted, result.reason = True, "iteration budget exhausted"
    finally:
        if pool:
            pool.shutdown()
    je, mh = unpack(x)
    result.constitutive = ConstitutiveMatrix(build_D(x), "homogenized_sheet", {"method": 2, "coefficients": {"JE": je, "MH": mh}})
    result.evaluations, result.iterations = evals, it
    if result.exhausted:
        result.constitutive.meta["flag"] = BudgetExhausted.__name__
    return result


# --- Method 3 -------------------------------------------------------------


def method3_target(spec: ReflectionSpec, surf: Surface, gain: complex, incident_side: int = 1) -> np.ndarray:
    """Single-entry target: x-field mode at the input harmonic -> x-current at the output harmonic."""
    n_in = nearest_harmonic(spec.k_in, surf.Lx)
    n_out = nearest_harmonic(spec.k_out, surf.Lx)
    Nx, Ny, N = surf.Nx, surf.Ny, surf.n_harm
    col = SurfaceModeIndex(n_in, 0, 0, incident_side).linear(Nx, Ny)
    row = SurfaceModeIndex(n_out, 0, 0, 0).linear(Nx, Ny)  # current modes use the side-0 packing
    T = np.zeros((4 * N, 8 * N), dtype=complex)
    T[row, col] = gain
    return T


def method3_mode_converter(
    spec: ReflectionSpec,
    surf: Surface,
    gain: complex = 1.0,
    ctx: FrequencyContext | None = None,
    incident_side: int = 1,
    problem: DesignProblem | None = None,
) -> ConstitutiveMatrix:
    """Free-form sheet whose closed-loop response is a single mode conversion.

    The gain is reduced, if needed, so that the power radiated for a unit
    incident wave does not exceed the incident power on the aperture.
    """
    ctx = ctx or FrequencyContext(spec.wavelength)
    prob = problem or DesignProblem(spec, surf, ctx)
    T = method3_target(spec, surf, gain, incident_side)
    if gain != 0:
        b = T @ prob.unit_incident
        p_out = float(np.real(power_flux(surf, prob.G @ b, "outward")))
        if p_out > prob.incident_power:
            T = T * np.sqrt(prob.incident_power / p_out)
    cm = build_free_form(T, prob.G)
    cm.meta.update(method=3, target=T, gain=complex(T[np.nonzero(T)][0]) if T.any() else 0j)
    return cm


def off_design_suppression(grid, spec: ReflectionSpec, tol: float = 1e-9) -> float:
    """Design-column peak over the largest other-column peak, in dB."""
    ki = np.sin(spec.theta_i)
    cols = np.abs(grid.kxp_norm - ki) <= tol
    if not cols.any():
        raise ValueError("grid lacks the design input column")
    A = np.abs(grid.H)
    design = np.nanmax(A[:, cols])
    others = np.nanmax(A[:, ~cols]) if (~cols).any() else 0.0
    if others == 0:
        return float("inf")
    return float(20 * np.log10(design / others))


def harmonic_axis(surf: Surface, wavelength: float, limit: float = 1.0) -> np.ndarray:
    """Normalized wavenumbers ``n lambda / Lx`` of the propagating surface harmonics."""
    step = wavelength / surf.Lx
    n = np.arange(-np.floor(limit / step), np.floor(limit / step) + 1)
    return n * step
