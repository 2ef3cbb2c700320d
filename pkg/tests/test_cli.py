import json
import os
from pathlib import Path

import numpy as np
import pytest

from smartem import cli
from smartem.em_core import FrequencyContext
from smartem.transfer import pec_limit_plate

SCENES = Path(__file__).resolve().parent.parent / "scenes"


def read_grid(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data["kx_norm"], data["kxp_norm"], data["abs_H"] * np.exp(1j * data["arg_H_rad"])


def write_scene(tmp_path, doc, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_transfer_empty_scene_baseline(tmp_path):
    out = tmp_path / "empty.csv"
    assert cli.main(["transfer", str(SCENES / "empty.json"), "--out", str(out)]) == 0
    kx, kxp, H = read_grid(out)
    assert kx.size == 19 * 19
    on = np.isclose(kx, kxp)
    ctx = FrequencyContext(0.1)
    # source and probe share z = 0, so the baseline is -eta/2 * kz/k0 on the diagonal
    expect = ctx.eta / 2 * np.sqrt(1 - kx[on] ** 2)
    assert np.allclose(np.abs(H[on]), expect, rtol=1e-8)
    assert np.all(H[~on] == 0)
    man = json.loads((tmp_path / "empty.csv.manifest.json").read_text())
    for key in ("command", "input_sha256", "tool_version", "seed", "wall_clock_s", "warnings", "outputs"):
        assert key in man
    assert man["outputs"] == ["empty.csv"]
    assert len(man["input_sha256"]) == 64


def test_transfer_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    scene = str(SCENES / "ris_redirect.json")
    doc = json.loads(Path(scene).read_text())
    doc["emos"][0]["constitutive"] = {"type": "impedance", "z": 40.0}
    scene = write_scene(tmp_path, doc)
    for out in (a, b):
        assert cli.main(["transfer", scene, "--out", str(out), "--kx", "-1", "1", "41", "--kxp", "-1", "1", "41"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_transfer_pec_plate_matches_pec_limit(tmp_path):
    out = tmp_path / "pec.csv"
    assert cli.main(["transfer", str(SCENES / "pec_plate.json"), "--out", str(out)]) == 0
    kx, kxp, H = read_grid(out)
    ctx = FrequencyContext(0.1)
    ref = pec_limit_plate(1.06, 1.06, 0.5, (kxp * ctx.k0, 0 * kxp), (kx * ctx.k0, 0 * kx), ctx)
    err = np.max(np.abs(H - ref)) / np.max(np.abs(ref))
    assert err < 1e-2, f"relative error {err:.3f} on the propagating band"


def test_malformed_scene_exit_code(tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert cli.main(["transfer", str(SCENES / "malformed.json"), "--out", str(out)]) == 2
    assert "invalid scene" in capsys.readouterr().err
    assert not out.exists() and list(tmp_path.iterdir()) == []
    assert cli.main(["transfer", str(tmp_path / "missing.json"), "--out", str(out)]) == 2


@pytest.mark.parametrize(
    "patch",
    [
        {"unknown": 1},
        {"frequency": {}},
        {"emos": [{"type": "surface", "Nx": 4}]},
        {"emos": [{"type": "dipole", "current": [1.0]}]},
        {"emos": [{"type": "surface", "Nx": 1, "constitutive": {"type": "free_form", "target": [[9, 0, 1.0]]}}]},
    ],
)
def test_schema_violations_exit_2(tmp_path, patch):
    doc = {"frequency": {"wavelength": 0.1}, "emos": []}
    doc.update(patch)
    out = tmp_path / "x.csv"
    assert cli.main(["transfer", write_scene(tmp_path, doc), "--out", str(out)]) == 2
    assert not out.exists()


def test_non_utf8_scene_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_bytes(b"\xff\xfe{}")
    assert cli.main(["transfer", str(p), "--out", str(tmp_path / "x.csv")]) == 2


def test_numerical_failure_exit_3(tmp_path):
    # the fifth harmonic of a 5-wavelength plate is grazing: kz = 0
    doc = {
        "frequency": {"wavelength": 0.1},
        "emos": [{"type": "surface", "Lx": 0.5, "Ly": 0.5, "Nx": 11, "Ny": 1, "thin": True,
                  "pose": {"position": [0, 0, 0.5]}, "constitutive": {"type": "impedance", "z": 10.0}}],
        "sweep": {"kx_norm": {"start": -0.5, "stop": 0.5, "num": 3}, "kxp_norm": {"start": 0, "stop": 0, "num": 1}},
    }
    out = tmp_path / "x.csv"
    assert cli.main(["transfer", write_scene(tmp_path, doc), "--out", str(out)]) == 3
    assert not out.exists()


def test_design_requires_unique_surface(tmp_path):
    prefix = str(tmp_path / "d")
    assert cli.main(["design-ris", str(SCENES / "two_surfaces.json"), "--method", "1", "--out-prefix", prefix]) == 4
    assert cli.main(["design-ris", str(SCENES / "empty.json"), "--method", "1", "--out-prefix", prefix]) == 4
    assert list(tmp_path.iterdir()) == []


def test_design_method1_outputs(tmp_path):
    prefix = str(tmp_path / "m1")
    args = ["design-ris", str(SCENES / "ris_redirect.json"), "--method", "1", "--out-prefix", prefix, "--kxp", "0", "0", "1"]
    assert cli.main(args) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["m1.manifest.json", "m1_D.csv", "m1_coefficients.json", "m1_grid.csv"]
    man = json.loads((tmp_path / "m1.manifest.json").read_text())
    assert abs(man["grid_peak"][0] - 0.38) <= 0.02 and man["grid_peak"][1] == 0.0
    assert any("HarmonicMismatch" in w for w in man["warnings"])
    coeffs = json.loads((tmp_path / "m1_coefficients.json").read_text())
    assert len(coeffs["harmonics"]) == 25 and len(coeffs["X_JE"]) == 25
    rows = (tmp_path / "m1_D.csv").read_text().splitlines()
    assert rows[0] == "row,col,re,im" and len(rows) > 1


def test_design_method2_small_budget(tmp_path):
    doc = json.loads((SCENES / "ris_redirect.json").read_text())
    doc["emos"][0]["Nx"] = 9
    doc["design"]["max_iterations"] = 2
    prefix = str(tmp_path / "m2")
    args = ["design-ris", write_scene(tmp_path, doc), "--method", "2", "--out-prefix", prefix,
            "--kx", "0.38", "0.38", "1", "--kxp", "0", "0", "1"]
    assert cli.main(args) == 0
    man = json.loads((tmp_path / "m2.manifest.json").read_text())
    trace = man["objective_trace"]
    assert len(trace) == 3 and all(b >= a for a, b in zip(trace, trace[1:]))
    assert man["budget_exhausted"] is True and man["seed"] == 0


def test_design_method3_reports_suppression(tmp_path):
    prefix = str(tmp_path / "m3")
    args = ["design-ris", str(SCENES / "ris_redirect.json"), "--method", "3", "--out-prefix", prefix,
            "--kx", "-1", "1", "51", "--kxp", "-1", "1", "11"]
    assert cli.main(args) == 0
    man = json.loads((tmp_path / "m3.manifest.json").read_text())
    sup = man["off_design_suppression_db"]
    assert sup["harmonic_aligned_inputs"] >= 20.0
    assert "sweep_inputs" in sup


def test_radiation_pattern(tmp_path):
    out = tmp_path / "pattern.csv"
    assert cli.main(["radiation-pattern", str(SCENES / "dipole_over_plate.json"), "--out", str(out)]) == 0
    data = np.genfromtxt(out, delimiter=",", names=True)
    assert data.size == 33 and data.dtype.names == ("theta_deg", "abs_E_times_r")
    vals = data["abs_E_times_r"]
    assert np.all(np.isfinite(vals)) and np.all(vals >= 0)
    assert np.allclose(vals, vals[::-1], rtol=1e-6)
    assert (tmp_path / "pattern.csv.manifest.json").exists()


@pytest.mark.parametrize("suite", ["weyl", "orthonormality", "coupling-oracle", "closed-form-plate"])
def test_validate_suites_pass(suite, capsys):
    assert cli.main(["validate", suite]) == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS")


def test_validate_failure_exit_1(monkeypatch, capsys):
    from smartem import validation

    failing = lambda: validation.CheckResult("forced", 1.0, 0.5)
    monkeypatch.setitem(validation.SUITES, "weyl", [failing])
    assert cli.main(["validate", "weyl"]) == 1
    assert capsys.readouterr().out.startswith("FAIL")


def test_thread_cap_sets_blas_variables(monkeypatch):
    for var in ("SMARTEM_THREADS",) + cli._THREAD_VARS:
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv("SMARTEM_THREADS", "2")
    cli._cap_threads()
    assert all(os.environ[v] == "2" for v in cli._THREAD_VARS)


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
