"""JSON schemas for every JSON file the package reads or writes.

``python -m viewalign.schemas docs/schemas`` dumps them as ``*.schema.json``.
"""

import json
import sys
from pathlib import Path

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_color = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 3, "maxItems": 3}

INTRINSICS_SCHEMA = {
    "type": "object",
    "required": ["fx", "fy", "cx", "cy"],
    "properties": {
        "fx": {"type": "number", "exclusiveMinimum": 0},
        "fy": {"type": "number", "exclusiveMinimum": 0},
        "cx": {"type": "number"},
        "cy": {"type": "number"},
    },
}

POSE_SCHEMA = {
    "type": "object",
    "required": ["rotation", "translation"],
    "properties": {
        "rotation": {"type": "array", "items": _vec3, "minItems": 3, "maxItems": 3},
        "translation": _vec3,
    },
}

_texture = {
    "type": "object",
    "properties": {
        "type": {"enum": ["solid", "checker", "gradient"]},
        "colors": {"type": "array", "items": _color, "minItems": 1, "maxItems": 2},
        "color": _color,
        "size": {"type": "number", "exclusiveMinimum": 0},
        "axis": _vec3,
    },
}

CAMERA_SCHEMA = {
    "type": "object",
    "required": ["intrinsics", "width", "height"],
    "properties": {
        "intrinsics": INTRINSICS_SCHEMA,
        "pose": POSE_SCHEMA,
        "look_at": {
            "type": "object",
            "required": ["eye", "target"],
            "properties": {"eye": _vec3, "target": _vec3, "up": _vec3},
        },
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "near": {"type": "number", "exclusiveMinimum": 0},
        "far": {"type": "number", "exclusiveMinimum": 0},
    },
    "oneOf": [{"required": ["pose"]}, {"required": ["look_at"]}],
}

SCENE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SceneSpec",
    "type": "object",
    "required": ["primitives", "cameras"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "primitives": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["type", "center", "normal"],
                        "properties": {
                            "type": {"const": "plane"},
                            "center": _vec3,
                            "normal": _vec3,
                            "u_axis": _vec3,
                            "half_extent": {
                                "oneOf": [
                                    {"type": "null"},
                                    {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                                     "minItems": 2, "maxItems": 2},
                                ]
                            },
                            "texture": _texture,
                        },
                    },
                    {
                        "type": "object",
                        "required": ["type", "center", "radius"],
                        "properties": {
                            "type": {"const": "sphere"},
                            "center": _vec3,
                            "radius": {"type": "number", "exclusiveMinimum": 0},
                            "texture": _texture,
                        },
                    },
                ]
            },
        },
        "cameras": {"type": "array", "minItems": 1, "items": CAMERA_SCHEMA},
        "generation": {
            "type": "object",
            "properties": {
                "anchor": {"type": "integer", "minimum": 0},
                "object": {"type": "integer", "minimum": 0},
                "dsd_scale": {"type": "number", "exclusiveMinimum": 0},
                "dsd_noise": {"type": "number", "minimum": 0},
                "mono_bias": {
                    "type": "object",
                    "required": ["kind"],
                    "properties": {"kind": {"enum": ["scale", "affine", "ramp"]}},
                },
                "sparse_count": {"type": "integer", "minimum": 1},
                "sparse_pixel_noise": {"type": "number", "minimum": 0},
            },
        },
    },
}

SOLVER_SCHEMA = {
    "title": "SolverConfig",
    "type": "object",
    "properties": {
        "max_iters": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "minimum": 0},
        "damping_init": {"type": "number", "exclusiveMinimum": 0},
        "use_projection_residual": {"type": "boolean"},
    },
    "additionalProperties": False,
}

SPARSE_SCHEMA = {
    "title": "SparseDepthSet",
    "type": "object",
    "required": ["width", "height", "samples"],
    "properties": {
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "samples": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["pixel", "depth"],
                "properties": {
                    "pixel": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "depth": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}

REPORT_SCHEMA = {
    "title": "AlignmentReport",
    "type": "object",
    "required": ["intrinsics", "scale", "residual", "iterations"],
    "properties": {
        "intrinsics": INTRINSICS_SCHEMA,
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "residual": {"type": "number", "minimum": 0},
        "iterations": {"type": "integer", "minimum": 0},
        "trace": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "projection_rms": {"type": ["number", "null"], "minimum": 0},
    },
}

DEPTH_SIDECAR_SCHEMA = {
    "title": "DepthSidecar",
    "description": "Written next to every depth PFM as <name>.pfm.json. Invalid pixels are stored as 0.",
    "type": "object",
    "required": ["convention", "invalid_value"],
    "properties": {
        "convention": {"enum": ["metric", "relative"]},
        "invalid_value": {"const": 0},
    },
}

EVAL_SCHEMA = {
    "title": "EvalReport",
    "description": "psnr_masked is Infinity (JSON extension) for identical images.",
    "type": "object",
    "required": ["psnr_masked", "ssim", "warp_consistency", "l_si"],
    "properties": {
        "psnr_masked": {"type": "number"},
        "ssim": {"type": "number", "minimum": -1, "maximum": 1},
        "warp_consistency": {"type": ["number", "null"], "minimum": 0},
        "l_si": {"type": ["number", "null"], "minimum": 0},
    },
}

ALL = {
    "scene": SCENE_SCHEMA,
    "solver": SOLVER_SCHEMA,
    "sparse": SPARSE_SCHEMA,
    "report": REPORT_SCHEMA,
    "depth_sidecar": DEPTH_SIDECAR_SCHEMA,
    "eval": EVAL_SCHEMA,
}


def dump(outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, schema in ALL.items():
        (out / f"{name}.schema.json").write_text(json.dumps(schema, indent=2) + "\n")


if __name__ == "__main__":
    dump(sys.argv[1] if len(sys.argv) > 1 else "docs/schemas")
