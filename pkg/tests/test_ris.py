import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smartem.basis import Surface
from smartem.constitutive import free_form_residual, harmonic_product_matrix
from smartem.em_core import FrequencyContext, translated
from smartem.errors import DegenerateSpec, HarmonicMismatch
from smartem.ris import (
    DesignProblem,
    ReflectionSpec,
    design_peak,
    harmonic_axis,
    method1_periodic_admittance,
    method2_optimize,
    method3_mode_converter,
    method3_target,
    nearest_harmonic,
    off_design_suppression,
)
from smartem.scene import Emo
from smartem.transfer import sweep_grid, transfer_xx

LAM = 0.1


@pytest.fixture
def surf():
    return Surface(Lx=1.06, Ly=1.06, Nx=11, Ny=1, delta=0.001, thin=True, pose=translated(z=0.5))


@pytest.fixture
def spec():
    return ReflectionSpec.from_degrees(0.0, 22.0, LAM)


def test_reflection_spec_validation():
    s = ReflectionSpec.from_degrees(10.0, 22.0, LAM)
    assert s.k_out == pytest.approx(2 * np.pi / LAM * np.sin(np.radians(22)))
    with pytest.raises(ValueError):
        ReflectionSpec(0.0, 2.0, LAM)
    with pytest.raises(ValueError):
        ReflectionSpec(np.nan, 0.3, LAM)
    with pytest.raises(ValueError):
        ReflectionSpec(0.0, 0.3, LAM, plane="yz")
    with pytest.raises(ValueError):
        ReflectionSpec(0.0, 0.3, -1.0)


@settings(max_examples=100, deadline=None)
@given(v=st.floats(-12, 12), L=st.floats(0.1, 3.0))
def test_nearest_harmonic_rounds_half_toward_zero(v, L):
    k = 2 * np.pi * v / L
    n = nearest_harmonic(k, L)
    exact = k * L / (2 * np.pi)
    assert abs(n - exact) <= 0.5 + 1e-9
    if abs(abs(exact - np.trunc(exact)) - 0.5) < 1e-12:
        assert abs(n) < abs(exact)


def test_method1_rejects_normal_reflection(surf):
    with pytest.raises(DegenerateSpec):
        method1_periodic_admittance(ReflectionSpec.from_degrees(0.0, 0.0, LAM), surf)


def test_method1_leakage_warning(surf, spec):
    with pytest.warns(HarmonicMismatch):
        cm = method1_periodic_admittance(spec, surf)
    assert cm.meta["harmonic_position"] == pytest.approx(np.sin(np.radians(22)) * 1.06 / LAM)
    X = cm.meta["coefficients"]["JE"]
    nx, _ = surf.harmonics
    top2 = set(nx[np.argsort(np.abs(X))[-2:]])
    assert top2 == {-4, 4}


def test_method1_is_combination_of_shift_matrices(surf, spec, ctx):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HarmonicMismatch)
        cm = method1_periodic_admittance(spec, surf, ctx)
    N = surf.n_harm
    D = cm.D
    XJE = 2 * D[:N, :N]
    XMH = 2 * D[2 * N : 3 * N, 4 * N : 5 * N]
    coeffs = cm.meta["coefficients"]
    rebuilt = sum(coeffs["JE"][j] * harmonic_product_matrix((jx, 0), surf, ctx) for j, jx in enumerate(surf.harmonics[0]))
    assert np.allclose(XJE, rebuilt, atol=1e-15)
    assert np.allclose(XMH, -(ctx.eta**2) * XJE)
    # no J from H, no M from E
    assert not np.any(D[: 2 * N, 4 * N :]) and not np.any(D[2 * N :, : 4 * N])


def test_method1_redirects_toward_design_angle(surf, spec, ctx):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HarmonicMismatch)
        cm = method1_periodic_admittance(spec, surf, ctx)
    ax = np.round(np.linspace(-1, 1, 101), 12)
    g = sweep_grid([Emo(surf, cm)], ctx, ax, np.array([0.0]))
    col = np.abs(g.H[:, 0])
    assert abs(ax[np.argmax(col)] - np.sin(np.radians(22))) <= 0.02


def test_design_problem_matches_full_pipeline(surf, spec, ctx):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HarmonicMismatch)
        cm = method1_periodic_admittance(spec, surf, ctx)
    prob = DesignProblem(spec, surf, ctx)
    h = transfer_xx([Emo(surf, cm)], ctx, (spec.k_in, 0.0), (spec.k_out, 0.0))
    assert prob.transfer(cm.D) == pytest.approx(h, rel=1e-10)
    # unit wave at normal incidence over the aperture
    assert prob.incident_power == pytest.approx(surf.Lx * surf.Ly / (2 * ctx.eta), rel=1e-12)


@pytest.fixture
def small_problem(ctx):
    s = Surface(Lx=1.06, Ly=1.06, Nx=7, Ny=1, delta=0.001, thin=True, pose=translated(z=0.5))
    sp = ReflectionSpec.from_degrees(0.0, 22.0, LAM)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HarmonicMismatch)
        init = method1_periodic_admittance(sp, s, ctx)
    return s, sp, init, DesignProblem(sp, s, ctx)


def test_method2_zero_budget_returns_initial(small_problem, ctx):
    s, sp, init, prob = small_problem
    res = method2_optimize(sp, s, ctx, init, max_iterations=0, problem=prob)
    assert res.D is init.D
    assert res.iterations == 0 and not res.exhausted


def test_method2_ascends_under_power_constraint(small_problem, ctx):
    s, sp, init, prob = small_problem
    res = method2_optimize(sp, s, ctx, init, max_iterations=4, problem=prob)
    trace = np.array(res.objective_trace)
    assert np.all(np.diff(trace) >= 0)
    assert trace[-1] > trace[0]
    dev = np.abs(np.array(res.power_trace) - res.power_target) / res.power_target
    assert np.all(dev < 1e-6)
    assert abs(prob.transfer(res.D)) >= abs(prob.transfer(init.D))


def test_method2_budget_exhausted_is_flagged(small_problem, ctx):
    s, sp, init, prob = small_problem
    res = method2_optimize(sp, s, ctx, init, max_iterations=50, max_evaluations=60, problem=prob)
    assert res.exhausted
    assert res.constitutive.meta["flag"] == "BudgetExhausted"
    assert abs(prob.transfer(res.D)) >= abs(prob.transfer(init.D)) * (1 - 1e-12)


def test_method3_zero_gain(surf, spec, ctx):
    cm = method3_mode_converter(spec, surf, 0.0, ctx)
    assert not np.any(cm.D)


def test_method3_round_trip_and_target(surf, spec, ctx):
    cm = method3_mode_converter(spec, surf, 1.0, ctx)
    T = cm.meta["target"]
    assert np.count_nonzero(T) == 1
    prob = DesignProblem(spec, surf, ctx)
    assert free_form_residual(cm.D, prob.G, T) < 1e-8
    # passivity: reflected power of a unit incident wave does not exceed the incident power
    b = T @ prob.unit_incident
    assert prob.radiated_power(cm.D) <= prob.incident_power * (1 + 1e-9)
    raw = method3_target(spec, surf, 1.0)
    assert np.array_equal(np.nonzero(raw), np.nonzero(T))
    assert b.any()


def test_method3_suppresses_other_inputs(surf, spec, ctx):
    cm = method3_mode_converter(spec, surf, 1.0, ctx)
    ax_in = harmonic_axis(surf, LAM)
    ax_out = np.round(np.linspace(-1, 1, 101), 12)
    g = sweep_grid([Emo(surf, cm)], ctx, ax_out, ax_in)
    assert off_design_suppression(g, spec) >= 20.0
    kr = np.sin(spec.theta_r)
    peak_row = ax_out[np.argmax(np.abs(g.H[:, np.argmin(np.abs(ax_in))]))]
    assert abs(peak_row - nearest_harmonic(spec.k_out, surf.Lx) * LAM / surf.Lx) <= 0.02
    assert abs(peak_row - kr) <= 0.05


def test_harmonic_axis_and_design_peak(surf, spec):
    ax = harmonic_axis(surf, LAM)
    assert np.all(np.abs(ax) <= 1) and 0.0 in ax
    assert np.allclose(np.diff(ax), LAM / surf.Lx)

    class G:
        kx_norm = np.array([0.3, 0.37, 0.45])
        kxp_norm = np.array([0.0])
        H = np.array([[1.0], [3.0], [7.0]])

    assert design_peak(G, spec) == 3.0
    G.kxp_norm = np.array([0.5])
    with pytest.raises(ValueError):
        design_peak(G, spec)
