import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smartem.basis import (
    Dipole,
    HarmonicCurrent,
    Line,
    PlaneWaveProbe,
    Surface,
    SurfaceModeIndex,
    apply_pose,
    harmonic_range,
    mode_spectrum,
    sinc_spectrum,
)
from smartem.em_core import FrequencyContext, Pose, Wavevector, rotation_y, rotation_z, translated
from smartem.errors import IndexOutOfRange
from smartem.validation import check_orthonormality, surface_gram_matrix


def test_sinc_spectrum_examples():
    L = 0.37
    assert sinc_spectrum(0.0, L, 0) == pytest.approx(np.sqrt(L))
    assert sinc_spectrum(2 * np.pi / L, L, 1) == pytest.approx(np.sqrt(L))
    assert abs(sinc_spectrum(0.0, L, 1)) < 1e-15
    with pytest.raises(ValueError):
        sinc_spectrum(0.0, 0.0)


def test_harmonic_range_requires_odd():
    assert list(harmonic_range(5)) == [-2, -1, 0, 1, 2]
    for bad in (0, 2, -1):
        with pytest.raises(ValueError):
            harmonic_range(bad)


def test_mode_counts():
    assert Dipole().n_field == 1
    assert Line(length=0.2, n_modes=5).n_field == 5
    s = Surface(Lx=0.3, Ly=0.2, Nx=3, Ny=5)
    assert s.n_field == 4 * 15 and s.n_current == 2 * 15
    assert PlaneWaveProbe().n_field == 2
    assert HarmonicCurrent().n_current == 1
    with pytest.raises(ValueError):
        Surface(Nx=2)


def test_mode_spectrum_examples(ctx):
    k = Wavevector(0.3 * ctx.k0, -0.2 * ctx.k0, 0.5 * ctx.k0 + 0j)
    assert np.allclose(mode_spectrum(Dipole(), 0, k), [0, 1, 0])

    s = Surface(Lx=0.3, Ly=0.2, Nx=3, Ny=3, delta=ctx.wavelength / 100)
    n = SurfaceModeIndex(0, 0, 0, 0).linear(3, 3)
    got = mode_spectrum(s, n, Wavevector(0.0, 0.0, ctx.k0 + 0j))
    expect = np.array([1, 0, 0]) * np.sqrt(0.3 * 0.2) * np.exp(-0.5j * ctx.k0 * s.delta)
    assert np.allclose(got, expect, atol=1e-14)

    line = Line(length=0.25, n_modes=3)
    assert np.allclose(mode_spectrum(line, 1, Wavevector(0.0, 0.0, ctx.k0 + 0j)), [0, np.sqrt(0.25), 0])

    with pytest.raises(IndexOutOfRange):
        mode_spectrum(s, s.n_field, k)
    with pytest.raises(IndexOutOfRange):
        mode_spectrum(PlaneWaveProbe(), 2, k)


def test_probe_and_harmonic_current_are_delta_like(ctx):
    probe = PlaneWaveProbe(kx=0.1 * ctx.k0, z_obs=0.3)
    kz = np.sqrt(ctx.k0**2 - probe.kx**2) + 0j
    on = mode_spectrum(probe, 0, Wavevector(probe.kx, 0.0, kz))
    assert np.allclose(on, (2 * np.pi) ** 2 * np.array([1, 0, 0]) * np.exp(-1j * kz * 0.3))
    assert np.allclose(mode_spectrum(probe, 1, Wavevector(0.2 * ctx.k0, 0.0, kz)), 0)
    src = HarmonicCurrent(kx=0.0, z_src=-0.1, polarization=(0.0, 1.0, 0.0))
    assert np.allclose(mode_spectrum(src, 0, Wavevector(0.0, 0.0, ctx.k0 + 0j))[1], (2 * np.pi) ** 2 * np.exp(0.1j * ctx.k0))


def test_apply_pose_examples(ctx):
    def const_x(k):
        k = np.asarray(k)
        out = np.zeros((3,) + k.shape[1:], dtype=complex)
        out[0] = 1.0
        return out

    k = np.array([[0.2], [0.1], [0.7]]) * ctx.k0
    assert np.allclose(apply_pose(const_x, Pose())(k), const_x(k))

    d = 0.13
    shifted = apply_pose(const_x, translated(z=d))(k)
    assert np.allclose(shifted, const_x(k) * np.exp(-1j * k[2] * d))

    flipped = apply_pose(const_x, Pose(np.zeros(3), rotation_y(np.pi)))(k)
    assert np.allclose(flipped[:, 0], [-1, 0, 0])


def test_apply_pose_rotates_argument(ctx):
    # a spectrum that depends on kx only: after a 90 degree turn about z it must depend on ky
    line = Line(length=0.2, n_modes=1)

    def canonical(k):
        return line.field_pols[0][:, None] * line.current_scalar(k[0], k[1], k[2])[0][None, :]

    R = rotation_z(np.pi / 2)
    posed = apply_pose(canonical, Pose(np.zeros(3), R))
    k = np.array([[1.3 * ctx.k0], [0.4 * ctx.k0], [0.0]])
    expect = R @ canonical(R.T @ k)
    assert np.allclose(posed(k), expect)
    assert np.allclose(posed(k)[:, 0], [-sinc_spectrum(-1.3 * ctx.k0, 0.2), 0, 0])


def test_surface_orthonormality():
    res = check_orthonormality()
    assert res.passed, res.line()
    assert res.seconds < 10.0


def test_distinct_sides_are_orthogonal():
    # the two faces are distinct planes; within each face the family is orthonormal
    s = Surface(Lx=0.4, Ly=0.3, Nx=3, Ny=3)
    G = surface_gram_matrix(s)
    assert np.allclose(G, np.eye(G.shape[0]), atol=1e-9)


def test_completeness_surrogate():
    n = np.arange(-1000, 1001)
    for A, B in [(-3.0, 3.0), (0.3, -1.7), (2.5, 2.5), (-0.49, 0.51), (1.234, -2.9)]:
        total = np.sum(np.sinc(A - n) * np.sinc(B - n))
        assert abs(total - np.sinc(A - B)) < 1e-3


@settings(max_examples=40, deadline=None)
@given(
    kx=st.floats(-3, 3),
    ky=st.floats(-3, 3),
    kzr=st.floats(-2, 2),
    kzi=st.floats(0, 2),
    n=st.integers(0, 4 * 9 - 1),
)
def test_surface_modes_are_tangent(kx, ky, kzr, kzi, n):
    ctx = FrequencyContext(0.1)
    s = Surface(Lx=0.3, Ly=0.2, Nx=3, Ny=3, delta=0.001)
    v = mode_spectrum(s, n, Wavevector(kx * ctx.k0, ky * ctx.k0, complex(kzr, kzi) * ctx.k0))
    assert v[2] == 0


@settings(max_examples=60, deadline=None)
@given(Nx=st.sampled_from([1, 3, 5, 7]), Ny=st.sampled_from([1, 3, 5]), data=st.data())
def test_mode_index_bijection(Nx, Ny, data):
    n = data.draw(st.integers(0, 4 * Nx * Ny - 1))
    m = SurfaceModeIndex.from_linear(n, Nx, Ny)
    assert m.linear(Nx, Ny) == n
    assert abs(m.nx) <= (Nx - 1) // 2 and abs(m.ny) <= (Ny - 1) // 2


def test_mode_index_packing_and_errors():
    assert SurfaceModeIndex(-1, -1, 0, 0).linear(3, 3) == 0
    assert SurfaceModeIndex(1, 1, 1, 1).linear(3, 3) == 35
    assert SurfaceModeIndex(0, 0, 1, 0).linear(3, 3) == 4 + 9
    with pytest.raises(IndexOutOfRange):
        SurfaceModeIndex(2, 0).linear(3, 3)
    with pytest.raises(IndexOutOfRange):
        SurfaceModeIndex.from_linear(36, 3, 3)
    with pytest.raises(IndexError):
        SurfaceModeIndex(0, 0, 2).linear(3, 3)


def test_thin_surface_drops_side_phase(ctx):
    s = Surface(Lx=0.2, Ly=0.2, delta=0.01, thin=True)
    k = Wavevector(0.0, 0.0, ctx.k0 + 0j)
    assert np.allclose(mode_spectrum(s, 0, k), mode_spectrum(s, 2, k))


def test_basis_is_immutable():
    s = Surface()
    with pytest.raises(Exception):
        s.Lx = 2.0
