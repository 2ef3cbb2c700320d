import os

import numpy as np
import pytest

from smartem.basis import Surface
from smartem.constitutive import build_impedance_sheet, constant_admittance
from smartem.em_core import translated
from smartem.scene import Emo
from smartem.transfer import (
    CSV_HEADER,
    TransferFunctionGrid,
    atomic_write,
    closed_form_plate,
    direct_term,
    grid_to_csv,
    pec_limit_plate,
    sweep_grid,
    transfer_xx,
)
from smartem.validation import check_closed_form_plate


def thin_plate(L=0.53, N=7, z=0.5, Ny=None):
    return Surface(Lx=L, Ly=L, Nx=N, Ny=N if Ny is None else Ny, delta=0.0, thin=True, pose=translated(z=z))


def test_empty_scene_is_direct_coupling(ctx):
    k = 0.3 * ctx.k0
    h = transfer_xx([], ctx, (k, 0.0), (k, 0.0), z_src=0.0, z_obs=0.2, include_direct=True)
    assert h == pytest.approx(complex(direct_term(k, 0.0, 0.0, 0.2, ctx)[0]), rel=1e-12)
    normal = direct_term(0.0, 0.0, 0.0, 0.2, ctx)[0]
    assert normal == pytest.approx(-ctx.eta / 2 * np.exp(0.2j * ctx.k0), rel=1e-12)
    ax = np.linspace(-0.9, 0.9, 7)
    g = sweep_grid([], ctx, ax, ax, z_obs=0.2, include_direct=True)
    assert np.allclose(np.diag(g.H), direct_term(ax * ctx.k0, 0.0, 0.0, 0.2, ctx))
    assert not np.any(g.H - np.diag(np.diag(g.H)))
    assert transfer_xx([], ctx, (k, 0.0), (0.0, 0.0), z_obs=0.2, include_direct=True) == 0


def test_transparent_plate_matches_empty_scene(ctx):
    s = thin_plate()
    k_in, k_out = (0.2 * ctx.k0, 0.0), (-0.4 * ctx.k0, 0.0)
    assert transfer_xx([Emo(s)], ctx, k_in, k_out) == 0
    h0 = transfer_xx([], ctx, k_in, k_in, z_obs=-0.1, include_direct=True)
    h1 = transfer_xx([Emo(s)], ctx, k_in, k_in, z_obs=-0.1, include_direct=True)
    assert h1 == h0


def test_pipeline_matches_closed_form_on_grid():
    res = check_closed_form_plate()
    assert res.passed, res.line()


def test_pec_plate_pipeline_matches_closed_form(ctx):
    s = thin_plate(N=5)
    cm = build_impedance_sheet(s, ctx, pec=True)
    ax = np.linspace(-0.95, 0.95, 21)
    g = sweep_grid([Emo(s, cm)], ctx, ax, ax)
    kk = ax * ctx.k0
    zeros = np.zeros((1, ax.size))
    ref = closed_form_plate(cm.meta["Y"], s.Lx, s.Ly, 5, 5, 0.5, (kk[None, :], zeros), (kk[:, None], zeros.T), ctx)
    assert np.max(np.abs(g.H - ref)) / np.max(np.abs(ref)) < 1e-6


def test_single_point_grid_equals_transfer_xx(ctx):
    s = thin_plate(N=3)
    emos = [Emo(s, constant_admittance(s, ctx, 1 / 120.0))]
    g = sweep_grid(emos, ctx, [0.25], [-0.1])
    h = transfer_xx(emos, ctx, (-0.1 * ctx.k0, 0.0), (0.25 * ctx.k0, 0.0))
    assert g.H.shape == (1, 1)
    assert g.H[0, 0] == pytest.approx(h, rel=1e-12)


def test_normal_plate_mirror_symmetry(ctx):
    s = thin_plate(N=5)
    ax = np.linspace(-1, 1, 41)
    g = sweep_grid([Emo(s, build_impedance_sheet(s, ctx, 80.0))], ctx, ax, ax)
    assert np.max(np.abs(g.H - g.H[::-1, ::-1])) <= 1e-8 * np.max(np.abs(g.H))
    assert g.nan_count == 0


def test_swapping_planes_preserves_magnitude(ctx):
    s = thin_plate(N=5)
    emos = [Emo(s, build_impedance_sheet(s, ctx, 80.0))]
    ax = np.linspace(-0.9, 0.9, 19)
    a = sweep_grid(emos, ctx, ax, ax, z_src=0.1, z_obs=-0.2)
    b = sweep_grid(emos, ctx, ax, ax, z_src=-0.2, z_obs=0.1)
    assert np.max(np.abs(np.abs(a.H) - np.abs(b.H.T))) <= 1e-8 * np.max(np.abs(a.H))


def test_closed_form_examples(ctx):
    assert closed_form_plate(0.0, 0.5, 0.5, 3, 3, 0.3, (0.0, 0.0), (0.2 * ctx.k0, 0.0), ctx) == 0
    L, pz = 2.0, 0.3
    Y = 1e9 / ctx.eta
    h = closed_form_plate(Y, L, L, 5, 5, pz, (0.0, 0.0), (0.0, 0.0), ctx)
    ref = pec_limit_plate(L, L, pz, (0.0, 0.0), (0.0, 0.0), ctx)
    assert h == pytest.approx(ref, rel=1e-8)
    assert np.angle(h) == pytest.approx(np.angle(np.exp(2j * pz * ctx.k0)), abs=1e-8)


def test_full_polarization_matches_scalar_for_ky_zero(ctx):
    kk = np.linspace(-0.8, 0.8, 9) * ctx.k0
    z = np.zeros_like(kk)
    a = closed_form_plate(0.01, 0.53, 0.53, 3, 3, 0.5, (kk, z), (kk[::-1], z), ctx)
    b = closed_form_plate(0.01, 0.53, 0.53, 3, 3, 0.5, (kk, z), (kk[::-1], z), ctx, full_polarization=True)
    assert np.allclose(a, b, rtol=1e-10)


def test_csv_export_and_atomic_write(tmp_path):
    g = TransferFunctionGrid(np.array([-0.5, 0.5]), np.array([0.0]), np.array([[1 + 1j], [np.nan]]))
    text = grid_to_csv(g)
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    kx, kxp, mag, ph = lines[1].split(",")
    assert float(kx) == -0.5 and float(kxp) == 0.0
    assert float(mag) == pytest.approx(np.sqrt(2)) and float(ph) == pytest.approx(np.pi / 4)
    assert lines[2].endswith("nan,nan")
    out = tmp_path / "grid.csv"
    atomic_write(out, text)
    assert out.read_text() == text
    assert [p.name for p in tmp_path.iterdir()] == ["grid.csv"]


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    with pytest.raises(TypeError):
        atomic_write(tmp_path / "x.csv", None)
    assert os.listdir(tmp_path) == []


def test_grid_axes_must_increase():
    with pytest.raises(ValueError):
        TransferFunctionGrid(np.array([0.5, 0.1]), np.array([0.0]), np.zeros((2, 1)))
