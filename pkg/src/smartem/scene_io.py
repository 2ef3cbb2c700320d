"""JSON scene documents: schema, validation and conversion to objects.

Angles in scene files are in degrees.  Complex values are written either as
a plain number or as a ``[re, im]`` pair.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .basis import Dipole, Line, Surface
from .constitutive import (
    Constant,
    ConstitutiveMatrix,
    Sampled,
    Sinusoid,
    build_free_form,
    build_homogenized_sheet,
    build_impedance_sheet,
)
from .coupling import assemble_self_surface
from .em_core import FrequencyContext, Pose, rotation_y, rotation_z
from .errors import SchemaError
from .quadrature import SpectralGrid

_complex = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}
_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_pose = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "position": _vec3,
        "rotation_y_deg": {"type": "number"},
        "rotation_z_deg": {"type": "number"},
    },
}
_surface_fn = {
    "oneOf": [
        _complex,
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["sinusoid"],
            "properties": {
                "sinusoid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["amplitude"],
                    "properties": {
                        "amplitude": _complex,
                        "kx_norm": {"type": "number"},
                        "ky_norm": {"type": "number"},
                        "kind": {"enum": ["sin", "cos"]},
                    },
                }
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["sampled"],
            "properties": {"sampled": {"type": "array", "items": {"type": "array", "items": _complex}}},
        },
    ]
}
_constitutive = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"const": "homogenized"},
                "y_je": _surface_fn,
                "y_jh": _surface_fn,
                "y_me": _surface_fn,
                "y_mh": _surface_fn,
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {"type": {"const": "impedance"}, "z": _complex, "pec": {"type": "boolean"}},
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["type", "target"],
            "properties": {
                "type": {"const": "free_form"},
                "target": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "prefixItems": [{"type": "integer"}, {"type": "integer"}, _complex],
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
            },
        },
    ]
}
_emo = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"enum": ["surface", "dipole", "line"]},
        "name": {"type": "string"},
        "pose": _pose,
        "Lx": {"type": "number", "exclusiveMinimum": 0},
        "Ly": {"type": "number", "exclusiveMinimum": 0},
        "Nx": {"type": "integer", "minimum": 1},
        "Ny": {"type": "integer", "minimum": 1},
        "thickness": {"type": "number", "minimum": 0},
        "thin": {"type": "boolean"},
        "length": {"type": "number", "exclusiveMinimum": 0},
        "n_modes": {"type": "integer", "minimum": 1},
        "current": {"type": "array", "items": _complex},
        "constitutive": _constitutive,
    },
}
_axis = {
    "type": "object",
    "additionalProperties": False,
    "required": ["start", "stop", "num"],
    "properties": {"start": {"type": "number"}, "stop": {"type": "number"}, "num": {"type": "integer", "minimum": 1}},
}

SCENE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["frequency", "emos"],
    "properties": {
        "frequency": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "wavelength": {"type": "number", "exclusiveMinimum": 0},
                "frequency_hz": {"type": "number", "exclusiveMinimum": 0},
                "permittivity": {"type": "number", "exclusiveMinimum": 0},
                "permeability": {"type": "number", "exclusiveMinimum": 0},
            },
            "oneOf": [{"required": ["wavelength"]}, {"required": ["frequency_hz"]}],
        },
        "emos": {"type": "array", "items": _emo},
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_max_factor": {"type": "number", "exclusiveMinimum": 1},
                "n_radial": {"type": "integer", "minimum": 4},
                "n_angular": {"type": "integer", "minimum": 4},
                "loss_delta": {"type": "number", "exclusiveMinimum": 0},
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kx_norm": _axis,
                "kxp_norm": _axis,
                "ky_norm": {"type": "number"},
                "kyp_norm": {"type": "number"},
                "z_src": {"type": "number"},
                "z_obs": {"type": "number"},
                "include_direct": {"type": "boolean"},
                "self_coupling": {"enum": ["large", "exact"]},
            },
        },
        "design": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta_i_deg": {"type": "number", "minimum": -90, "maximum": 90},
                "theta_r_deg": {"type": "number", "minimum": -90, "maximum": 90},
                "gain": _complex,
                "max_iterations": {"type": "integer", "minimum": 0},
                "max_evaluations": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
            },
        },
        "pattern": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta_deg": _axis,
                "phi_deg": {"type": "number"},
                "distance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

DEFAULT_AXIS = {"start": -1.0, "stop": 1.0, "num": 201}


def as_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def axis_values(spec: dict) -> np.ndarray:
    return np.round(np.linspace(spec["start"], spec["stop"], spec["num"]), 12)


@dataclass
class SceneConfig:
    ctx: FrequencyContext
    emos: list
    grid: SpectralGrid
    sweep: dict = field(default_factory=dict)
    design: dict = field(default_factory=dict)
    pattern: dict = field(default_factory=dict)
    digest: str = ""
    raw: dict = field(default_factory=dict)

    @property
    def surfaces(self):
        return [i for i, e in enumerate(self.emos) if isinstance(e.basis, Surface)]


def validate_document(doc) -> None:
    try:
        jsonschema.validate(doc, SCENE_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {exc.message}") from exc


def _pose(d: dict | None) -> Pose:
    d = d or {}
    R = rotation_z(np.radians(d.get("rotation_z_deg", 0.0))) @ rotation_y(np.radians(d.get("rotation_y_deg", 0.0)))
    return Pose(np.asarray(d.get("position", [0.0, 0.0, 0.0]), dtype=float), R)


def _surface_function(v, ctx: FrequencyContext):
    if v is None:
        return 0.0
    if isinstance(v, dict) and "sinusoid" in v:
        s = v["sinusoid"]
        return Sinusoid(
            as_complex(s["amplitude"]), s.get("kx_norm", 0.0) * ctx.k0, s.get("ky_norm", 0.0) * ctx.k0, s.get("kind", "sin")
        )
    if isinstance(v, dict) and "sampled" in v:
        return Sampled(np.array([[as_complex(c) for c in row] for row in v["sampled"]]))
    return Constant(as_complex(v))


def _constitutive(block: dict, surf: Surface, ctx: FrequencyContext) -> ConstitutiveMatrix:
    kind = block["type"]
    if kind == "homogenized":
        fns = {k: _surface_function(block.get(k), ctx) for k in ("y_je", "y_jh", "y_me", "y_mh")}
        return build_homogenized_sheet(surf, ctx, **fns)
    if kind == "impedance":
        z = block.get("z")
        return build_impedance_sheet(surf, ctx, None if z is None else as_complex(z), pec=block.get("pec", False))
    N = surf.n_harm
    T = np.zeros((4 * N, 8 * N), dtype=complex)
    for r, c, v in block["target"]:
        if not (0 <= r < 4 * N and 0 <= c < 8 * N):
            raise SchemaError(f"free-form target entry ({r}, {c}) outside a {4 * N}x{8 * N} matrix")
        T[r, c] = as_complex(v)
    return build_free_form(T, assemble_self_surface(surf, ctx).full)


def _emo(d: dict, ctx: FrequencyContext):
    from .scene import Emo

    pose = _pose(d.get("pose"))
    kind = d["type"]
    if "Nx" in d and kind != "surface":
        raise SchemaError(f"{kind} objects take no harmonic counts")
    for n in ("Nx", "Ny", "n_modes"):
        if n in d and d[n] % 2 == 0:
            raise SchemaError(f"{n} must be odd")
    if kind == "surface":
        basis = Surface(
            Lx=d.get("Lx", 1.0), Ly=d.get("Ly", 1.0), Nx=d.get("Nx", 1), Ny=d.get("Ny", 1),
            delta=d.get("thickness", ctx.wavelength / 100.0), thin=d.get("thin", False), pose=pose,
        )
    elif kind == "dipole":
        basis = Dipole(pose=pose)
    else:
        basis = Line(length=d["length"], n_modes=d.get("n_modes", 1), pose=pose)
    cm = None
    if "constitutive" in d:
        if kind != "surface":
            raise SchemaError("constitutive blocks are supported on surfaces only")
        cm = _constitutive(d["constitutive"], basis, ctx)
    impressed = None
    if "current" in d:
        cur = np.array([as_complex(c) for c in d["current"]])
        if cur.size != 2 * basis.n_current:
            raise SchemaError(f"current vector needs {2 * basis.n_current} entries")
        impressed = cur
    return Emo(basis, cm, impressed, name=d.get("name", ""))


def parse_scene(doc: dict, digest: str = "") -> SceneConfig:
    validate_document(doc)
    fr = doc["frequency"]
    mat = {k: fr[k] for k in ("permittivity", "permeability") if k in fr}
    if "wavelength" in fr:
        ctx = FrequencyContext(fr["wavelength"], **mat)
    else:
        ctx = FrequencyContext.from_frequency(fr["frequency_hz"], **mat)
    grid = SpectralGrid(**doc.get("quadrature", {}))
    try:
        emos = [_emo(d, ctx) for d in doc["emos"]]
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    return SceneConfig(ctx, emos, grid, doc.get("sweep", {}), doc.get("design", {}), doc.get("pattern", {}), digest, doc)


def load_scene(path) -> SceneConfig:
    """Read, validate and build a scene file (raises :class:`SchemaError`)."""
    with open(path, "rb") as fh:
        data = fh.read()
    digest = hashlib.sha256(data).hexdigest()
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"not a UTF-8 JSON document: {exc}") from exc
    return parse_scene(doc, digest)
