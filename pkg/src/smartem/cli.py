"""Command line entry point: ``smartem {transfer,design-ris,radiation-pattern,validate}``.

Exit codes: 0 success, 1 validation failure, 2 invalid scene file,
3 numerical failure, 4 scene without a unique surface.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

EXIT_OK, EXIT_VALIDATE, EXIT_SCHEMA, EXIT_NUMERIC, EXIT_NO_SURFACE = 0, 1, 2, 3, 4
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _cap_threads() -> None:
    # must run before numpy is imported to affect the BLAS pool
    n = os.environ.get("SMARTEM_THREADS")
    if n:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, n)


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


class _Run:
    """Collects warnings and writes the manifest that accompanies every output."""

    def __init__(self, command: str, cfg=None, seed=None):
        self.command, self.cfg, self.seed = command, cfg, seed
        self.t0 = time.perf_counter()
        self.outputs: list[str] = []
        self.extra: dict = {}
        self._wctx = warnings.catch_warnings(record=True)
        self.caught = self._wctx.__enter__()
        warnings.simplefilter("always")

    def close(self):
        self._wctx.__exit__(None, None, None)

    def manifest(self) -> dict:
        seen = []
        for w in self.caught:
            msg = f"{w.category.__name__}: {w.message}"
            if msg not in seen:
                seen.append(msg)
        return {
            "command": self.command,
            "input_sha256": getattr(self.cfg, "digest", ""),
            "tool_version": _version(),
            "seed": self.seed,
            "wall_clock_s": round(time.perf_counter() - self.t0, 6),
            "warnings": seen,
            "outputs": self.outputs,
            **self.extra,
        }

    def write(self, path: str, text: str):
        from .transfer import atomic_write

        atomic_write(path, text)
        self.outputs.append(os.path.basename(path))

    def finish(self, manifest_path: str):
        from .transfer import atomic_write

        self.close()
        atomic_write(manifest_path, json.dumps(_jsonable(self.manifest()), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _axis(args_axis, cfg_axis):
    from .scene_io import DEFAULT_AXIS, axis_values

    if args_axis is not None:
        start, stop, num = args_axis
        return axis_values({"start": float(start), "stop": float(stop), "num": int(num)})
    return axis_values(cfg_axis or DEFAULT_AXIS)


def _sweep(cfg, emos, args, kxp=None, scene_kw=None):
    from .transfer import sweep_grid

    sw = cfg.sweep
    kx = _axis(getattr(args, "kx", None), sw.get("kx_norm"))
    if kxp is None:
        kxp = _axis(getattr(args, "kxp", None), sw.get("kxp_norm"))
    return sweep_grid(
        emos,
        cfg.ctx,
        kx,
        kxp,
        z_src=sw.get("z_src", 0.0),
        z_obs=sw.get("z_obs", 0.0),
        ky_norm=sw.get("ky_norm", 0.0),
        kyp_norm=sw.get("kyp_norm", 0.0),
        include_direct=sw.get("include_direct", False),
        grid=cfg.grid,
        self_coupling=sw.get("self_coupling", "large"),
        **(scene_kw or {}),
    )


# --- commands -------------------------------------------------------------


def cmd_transfer(args) -> int:
    from .scene_io import load_scene
    from .transfer import grid_to_csv

    cfg = load_scene(args.scene)
    run = _Run("transfer", cfg)
    try:
        grid = _sweep(cfg, cfg.emos, args)
        run.write(args.out, grid_to_csv(grid))
        run.extra.update(condition=grid.meta.get("condition"), nan_count=grid.nan_count, peak=grid.peak())
    except BaseException:
        run.close()
        raise
    run.finish(args.out + ".manifest.json")
    return EXIT_OK


def _coefficients_doc(cm, surf) -> dict:
    nx, ny = surf.harmonics
    doc = {"harmonics": [[int(a), int(b)] for a, b in zip(nx, ny)]}
    for key, val in cm.meta.get("coefficients", {}).items():
        doc[f"X_{key}"] = [[float(v.real), float(v.imag)] for v in val]
    if "target" in cm.meta:
        T = cm.meta["target"]
        doc["target"] = [[int(r), int(c), [float(T[r, c].real), float(T[r, c].imag)]] for r, c in zip(*T.nonzero())]
    return doc


def _matrix_csv(D) -> str:
    from .transfer import _fmt

    lines = ["row,col,re,im"]
    for r, c in zip(*D.nonzero()):
        v = D[r, c]
        lines.append(f"{r},{c},{_fmt(v.real)},{_fmt(v.imag)}")
    return "\n".join(lines) + "\n"


def cmd_design_ris(args) -> int:
    import dataclasses

    import numpy as np

    from . import ris
    from .scene_io import as_complex, load_scene
    from .transfer import grid_to_csv

    cfg = load_scene(args.scene)
    surfaces = cfg.surfaces
    if len(surfaces) != 1:
        print(f"error: design-ris needs exactly one surface, found {len(surfaces)}", file=sys.stderr)
        return EXIT_NO_SURFACE
    des = cfg.design
    theta_i = args.theta_i if args.theta_i is not None else des.get("theta_i_deg", 0.0)
    theta_r = args.theta_r if args.theta_r is not None else des.get("theta_r_deg", 22.0)
    seed = args.seed if args.seed is not None else des.get("seed", 0)
    spec = ris.ReflectionSpec.from_degrees(theta_i, theta_r, cfg.ctx.wavelength)
    idx = surfaces[0]
    surf = cfg.emos[idx].basis
    run = _Run(f"design-ris --method {args.method}", cfg, seed)
    prefix = args.out_prefix
    try:
        z = dict(z_src=cfg.sweep.get("z_src", 0.0), z_obs=cfg.sweep.get("z_obs", 0.0))
        prob = ris.DesignProblem(spec, surf, cfg.ctx, **z)
        if args.method == 1:
            cm = ris.method1_periodic_admittance(spec, surf, cfg.ctx)
        elif args.method == 2:
            res = ris.method2_optimize(
                spec,
                surf,
                cfg.ctx,
                max_iterations=des.get("max_iterations", 40),
                max_evaluations=des.get("max_evaluations", 20000),
                problem=prob,
            )
            cm = res.constitutive
            run.extra.update(
                objective_trace=res.objective_trace,
                power_target=res.power_target,
                iterations=res.iterations,
                budget_exhausted=res.exhausted,
                stop_reason=res.reason,
            )
        else:
            gain = as_complex(des.get("gain", 1.0)) if args.gain is None else complex(args.gain)
            cm = ris.method3_mode_converter(spec, surf, gain, cfg.ctx, problem=prob)
        emos = list(cfg.emos)
        emos[idx] = dataclasses.replace(emos[idx], constitutive=cm)
        grid = _sweep(cfg, emos, args)
        run.write(prefix + "_D.csv", _matrix_csv(cm.D))
        run.write(prefix + "_coefficients.json", json.dumps(_jsonable(_coefficients_doc(cm, surf)), indent=2) + "\n")
        run.write(prefix + "_grid.csv", grid_to_csv(grid))
        run.extra.update(
            design_transfer_abs=abs(prob.transfer(cm.D)),
            radiated_power=prob.radiated_power(cm.D),
            grid_peak=grid.peak(),
            condition=grid.meta.get("condition"),
        )
        try:
            run.extra["design_peak"] = ris.design_peak(grid, spec)
        except ValueError:
            pass
        if args.method == 3:
            aligned = _sweep(cfg, emos, args, kxp=ris.harmonic_axis(surf, cfg.ctx.wavelength))
            run.extra["off_design_suppression_db"] = {
                "harmonic_aligned_inputs": ris.off_design_suppression(aligned, spec),
            }
            if np.any(np.abs(grid.kxp_norm - np.sin(spec.theta_i)) <= 1e-9):
                run.extra["off_design_suppression_db"]["sweep_inputs"] = ris.off_design_suppression(grid, spec)
    except BaseException:
        run.close()
        raise
    run.finish(prefix + ".manifest.json")
    return EXIT_OK


def cmd_radiation_pattern(args) -> int:
    import numpy as np

    from .errors import PointInsideSlab
    from .scene import Scene, evaluate_field
    from .scene_io import axis_values, load_scene
    from .transfer import _fmt

    cfg = load_scene(args.scene)
    pat = cfg.pattern
    thetas = axis_values(pat.get("theta_deg", {"start": -90.0, "stop": 90.0, "num": 181}))
    phi = np.radians(pat.get("phi_deg", 0.0))
    dist = pat.get("distance", 1000.0 * cfg.ctx.wavelength)
    run = _Run("radiation-pattern", cfg)
    try:
        sol = Scene(cfg.emos, cfg.ctx, cfg.grid, self_coupling=cfg.sweep.get("self_coupling", "large")).solve()
        lines = ["theta_deg,abs_E_times_r"]
        bad = 0
        for th in thetas:
            t = np.radians(th)
            r = dist * np.array([np.sin(t) * np.cos(phi), np.sin(t) * np.sin(phi), np.cos(t)])
            try:
                E, _ = evaluate_field(r, sol, far_field=True)
                val = float(np.linalg.norm(E) * dist)
            except PointInsideSlab:
                val, bad = float("nan"), bad + 1
            lines.append(f"{_fmt(th)},{_fmt(val)}")
        run.write(args.out, "\n".join(lines) + "\n")
        run.extra.update(nan_count=bad, distance=dist, condition=sol.condition)
    except BaseException:
        run.close()
        raise
    run.finish(args.out + ".manifest.json")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_suite

    results = run_suite(args.suite)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATE


# --- dispatch -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smartem", description="Wavenumber-domain scattering and surface design.")
    sub = p.add_subparsers(dest="command", required=True)

    def grid_flags(sp):
        sp.add_argument("--kx", nargs=3, metavar=("START", "STOP", "NUM"), help="output axis in units of k0")
        sp.add_argument("--kxp", nargs=3, metavar=("START", "STOP", "NUM"), help="input axis in units of k0")

    t = sub.add_parser("transfer", help="sweep the transfer function over a wavenumber grid")
    t.add_argument("scene")
    t.add_argument("--out", required=True, help="CSV output path")
    grid_flags(t)
    t.set_defaults(func=cmd_transfer)

    d = sub.add_parser("design-ris", help="design a redirecting surface")
    d.add_argument("scene")
    d.add_argument("--method", type=int, choices=(1, 2, 3), required=True)
    d.add_argument("--out-prefix", required=True)
    d.add_argument("--theta-i", type=float, help="incidence angle in degrees")
    d.add_argument("--theta-r", type=float, help="reflection angle in degrees")
    d.add_argument("--gain", type=float, help="method 3 conversion gain")
    d.add_argument("--seed", type=int)
    grid_flags(d)
    d.set_defaults(func=cmd_design_ris)

    r = sub.add_parser("radiation-pattern", help="far-field |E| versus angle")
    r.add_argument("scene")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_radiation_pattern)

    v = sub.add_parser("validate", help="run an oracle suite")
    v.add_argument("suite", choices=("weyl", "orthonormality", "coupling-oracle", "closed-form-plate", "all"))
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    _cap_threads()
    args = build_parser().parse_args(argv)
    import numpy as np

    from .errors import SchemaError, SmartEMError

    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: invalid scene: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SmartEMError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"error: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
