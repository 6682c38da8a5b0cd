"""Readers and writers: PFM depth, PPM/PNG images, PLY Gaussians and points, JSON.

Depth PFM files store invalid pixels as 0 and get a ``<file>.json`` sidecar
holding the depth convention. Readers raise :class:`ParseError` with the
byte offset of the problem and never return partially read data.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError
from .geometry import DepthConvention, DepthMap, ImageRGB, Mask

# ---------------------------------------------------------------------------
# header tokenizer shared by the Netpbm-style formats

_WS = b" \t\r\n"


def _header_tokens(data: bytes, count: int, comments: bool = True):
    """Read ``count`` whitespace-separated tokens; return them and the offset
    just past the single whitespace byte that ends the last one."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WS:
            pos += 1
        if comments and pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise ParseError("truncated header", pos)
        start = pos
        while pos < n and data[pos] not in _WS:
            pos += 1
        if pos >= n:
            raise ParseError("truncated header", pos)
        tokens.append((data[start:pos], start))
    return tokens, pos + 1


def _int_token(tok, what):
    raw, off = tok
    try:
        v = int(raw)
    except ValueError:
        raise ParseError(f"bad {what} {raw!r}", off) from None
    if v <= 0:
        raise ParseError(f"{what} must be positive", off)
    return v


# ---------------------------------------------------------------------------
# PFM


def write_pfm(path, array, little_endian: bool = True) -> None:
    """Write a float32 ``(H, W)`` or ``(H, W, 3)`` array, rows bottom-to-top."""
    a = np.asarray(array, dtype=np.float32)
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM holds (H, W) or (H, W, 3) arrays, got {a.shape}")
    H, W = a.shape[:2]
    scale = -1.0 if little_endian else 1.0
    dtype = np.dtype("<f4" if little_endian else ">f4")
    header = b"%s\n%d %d\n%s\n" % (tag, W, H, repr(scale).encode())
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(a[::-1]).astype(dtype).tobytes())


def parse_pfm(data: bytes) -> np.ndarray:
    (tag, w, h, scale), pos = _header_tokens(data, 4, comments=False)
    if tag[0] == b"Pf":
        channels = 1
    elif tag[0] == b"PF":
        channels = 3
    else:
        raise ParseError(f"not a PFM file (magic {tag[0]!r})", 0)
    W, H = _int_token(w, "width"), _int_token(h, "height")
    try:
        s = float(scale[0])
    except ValueError:
        raise ParseError(f"bad scale {scale[0]!r}", scale[1]) from None
    if s == 0 or not np.isfinite(s):
        raise ParseError("scale must be non-zero and finite", scale[1])
    dtype = np.dtype("<f4" if s < 0 else ">f4")
    need = W * H * channels * 4
    if len(data) - pos < need:
        raise ParseError(f"truncated data: need {need} bytes, have {len(data) - pos}", len(data))
    arr = np.frombuffer(data, dtype=dtype, count=W * H * channels, offset=pos)
    shape = (H, W) if channels == 1 else (H, W, 3)
    return arr.reshape(shape)[::-1].astype(np.float32)


def read_pfm(path) -> np.ndarray:
    return parse_pfm(Path(path).read_bytes())


def write_depth(path, depth: DepthMap) -> None:
    """PFM with invalid pixels as 0 plus a JSON sidecar with the convention."""
    write_pfm(path, np.where(depth.valid, depth.values, 0.0))
    sidecar = {"convention": depth.convention.value, "invalid_value": 0}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_depth(path, convention: DepthConvention | str | None = None) -> DepthMap:
    """Read a depth PFM; the convention comes from the argument, then the sidecar,
    then defaults to metric."""
    vals = read_pfm(path).astype(np.float64)
    if vals.ndim != 2:
        raise ParseError("depth PFM must be single-channel (Pf)", 0)
    if convention is None:
        side = Path(str(path) + ".json")
        convention = json.loads(side.read_text())["convention"] if side.exists() else DepthConvention.METRIC
    valid = np.isfinite(vals) & (vals > 0)
    return DepthMap(np.where(valid, vals, 0.0), valid, DepthConvention(convention))


# ---------------------------------------------------------------------------
# PPM (P6) and PNG


def to_uint8(img) -> np.ndarray:
    p = img.pixels if isinstance(img, ImageRGB) else np.asarray(img, dtype=np.float64)
    return np.round(np.clip(p, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, img) -> None:
    a = img if (isinstance(img, np.ndarray) and img.dtype == np.uint8) else to_uint8(img)
    H, W = a.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (W, H))
        f.write(np.ascontiguousarray(a).tobytes())


def parse_ppm(data: bytes) -> np.ndarray:
    """Decode P6 bytes into a ``(H, W, 3)`` uint8 (or uint16 for maxval > 255) array."""
    (magic, w, h, mx), pos = _header_tokens(data, 4)
    if magic[0] != b"P6":
        raise ParseError(f"not a binary PPM (magic {magic[0]!r})", 0)
    W, H, maxval = _int_token(w, "width"), _int_token(h, "height"), _int_token(mx, "maxval")
    if maxval > 65535:
        raise ParseError("maxval above 65535", mx[1])
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = W * H * 3 * dtype.itemsize
    if len(data) - pos < need:
        raise ParseError(f"truncated data: need {need} bytes, have {len(data) - pos}", len(data))
    arr = np.frombuffer(data, dtype=dtype, count=W * H * 3, offset=pos).reshape(H, W, 3)
    return arr.copy() if maxval < 256 else arr.astype(np.uint16)


def read_ppm(path) -> ImageRGB:
    raw = parse_ppm(Path(path).read_bytes())
    scale = 255.0 if raw.dtype == np.uint8 else 65535.0
    return ImageRGB(raw.astype(np.float64) / scale)


def write_png(path, img) -> None:
    """8-bit RGB PNG for images, 8-bit grayscale (0/255) for masks."""
    if isinstance(img, Mask):
        Image.fromarray(np.where(img.bits, 255, 0).astype(np.uint8)).save(path, format="PNG")
    else:
        Image.fromarray(to_uint8(img)).save(path, format="PNG")


def read_png(path) -> ImageRGB:
    try:
        with Image.open(path) as im:
            im.load()
            a = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, SyntaxError) as e:
        raise ParseError(f"cannot decode PNG {path}: {e}", 0) from e
    return ImageRGB(a)


def read_mask_png(path) -> Mask:
    try:
        with Image.open(path) as im:
            im.load()
            a = np.asarray(im.convert("L"))
    except (OSError, SyntaxError) as e:
        raise ParseError(f"cannot decode PNG {path}: {e}", 0) from e
    return Mask(a > 127)


def read_image(path) -> ImageRGB:
    return read_ppm(path) if str(path).lower().endswith((".ppm", ".pnm")) else read_png(path)


def write_image(path, img) -> None:
    (write_ppm if str(path).lower().endswith(".ppm") else write_png)(path, img)


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_PLY_NAMES = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort", "i4": "int", "u4": "uint",
              "f4": "float", "f8": "double"}

GAUSSIAN_PROPERTIES = (
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    "red", "green", "blue", "opacity",
)


def write_ply(path, elements: dict, binary: bool = True) -> None:
    """Write named structured arrays (``{element: array}``) as PLY."""
    fmt = "binary_little_endian" if binary else "ascii"
    lines = ["ply", f"format {fmt} 1.0"]
    for name, arr in elements.items():
        lines.append(f"element {name} {len(arr)}")
        for field in arr.dtype.names:
            lines.append(f"property {_PLY_NAMES[arr.dtype[field].str[1:]]} {field}")
    lines.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        for arr in elements.values():
            if binary:
                le = arr.dtype.newbyteorder("<")
                f.write(np.ascontiguousarray(arr.astype(le)).tobytes())
            else:
                for row in arr:
                    f.write((" ".join(_ascii_value(row[k]) for k in arr.dtype.names) + "\n").encode("ascii"))


def _ascii_value(v) -> str:
    if isinstance(v, np.float32):
        # shortest string that parses back to the same float32
        return np.format_float_scientific(v, unique=True)
    if isinstance(v, np.floating):
        return repr(float(v))
    return str(int(v))


def parse_ply(data: bytes) -> dict:
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("missing PLY magic or end_header", 0 if not data.startswith(b"ply") else len(data))
    nl = data.find(b"\n", end)
    if nl < 0:
        raise ParseError("truncated header", len(data))
    header = data[:nl].decode("ascii", errors="replace").splitlines()
    body = nl + 1

    fmt = None
    elements = []  # [name, count, [(prop, dtype)]]
    offset = 0
    for line in header:
        line_off = offset
        offset += len(line) + 1
        parts = line.split()
        if not parts or parts[0] in ("ply", "comment", "obj_info", "end_header"):
            continue
        if parts[0] == "format":
            if len(parts) != 3 or parts[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise ParseError(f"unsupported format line {line!r}", line_off)
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise ParseError(f"bad element line {line!r}", line_off)
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before any element", line_off)
            if parts[1] == "list":
                raise ParseError("list properties are not supported", line_off)
            if len(parts) != 3 or parts[1] not in _PLY_TYPES:
                raise ParseError(f"bad property line {line!r}", line_off)
            elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
        else:
            raise ParseError(f"unknown header keyword {parts[0]!r}", line_off)
    if fmt is None:
        raise ParseError("missing format line", 0)

    out = {}
    if fmt == "ascii":
        text = data[body:]
        rows = text.split(b"\n")
        r = 0
        pos = body
        for name, count, props in elements:
            dt = np.dtype([(p, t) for p, t in props])
            arr = np.zeros(count, dtype=dt)
            for i in range(count):
                while r < len(rows) and not rows[r].strip():
                    pos += len(rows[r]) + 1
                    r += 1
                if r >= len(rows):
                    raise ParseError(f"truncated {name} data at row {i}", len(data))
                vals = rows[r].split()
                if len(vals) != len(props):
                    raise ParseError(f"expected {len(props)} values in {name} row {i}, got {len(vals)}", pos)
                try:
                    arr[i] = tuple(float(v) if np.dtype(t).kind == "f" else int(v) for v, (_, t) in zip(vals, props))
                except ValueError:
                    raise ParseError(f"bad number in {name} row {i}", pos) from None
                pos += len(rows[r]) + 1
                r += 1
            out[name] = arr
    else:
        order = "<" if fmt == "binary_little_endian" else ">"
        pos = body
        for name, count, props in elements:
            dt = np.dtype([(p, order + t) for p, t in props])
            need = dt.itemsize * count
            if len(data) - pos < need:
                raise ParseError(f"truncated {name} data: need {need} bytes, have {len(data) - pos}", len(data))
            arr = np.frombuffer(data, dtype=dt, count=count, offset=pos)
            out[name] = arr.astype(dt.newbyteorder("="))
            pos += need
    return out


def read_ply(path) -> dict:
    return parse_ply(Path(path).read_bytes())


def write_gaussians_ply(path, cloud, binary: bool = True) -> None:
    """Gaussian set as a ``vertex`` element with double properties
    x, y, z, scale_0..2 (linear), rot_0..3 (w, x, y, z), red, green, blue
    (in [0, 1]) and opacity."""
    dt = np.dtype([(p, "f8") for p in GAUSSIAN_PROPERTIES])
    arr = np.zeros(len(cloud), dtype=dt)
    cols = np.hstack([cloud.mu, cloud.scale, cloud.rot, cloud.color, cloud.opacity[:, None]])
    for i, p in enumerate(GAUSSIAN_PROPERTIES):
        arr[p] = cols[:, i]
    write_ply(path, {"vertex": arr}, binary)


def read_gaussians_ply(path):
    from .splat import GaussianCloud

    v = read_ply(path).get("vertex")
    if v is None:
        raise ParseError("no vertex element", 0)
    missing = [p for p in GAUSSIAN_PROPERTIES if p not in v.dtype.names]
    if missing:
        raise ParseError(f"missing Gaussian properties {missing}", 0)
    col = lambda *names: np.stack([v[n].astype(np.float64) for n in names], axis=1)  # noqa: E731
    return GaussianCloud(
        col("x", "y", "z"),
        col("scale_0", "scale_1", "scale_2"),
        col("rot_0", "rot_1", "rot_2", "rot_3"),
        col("red", "green", "blue"),
        v["opacity"].astype(np.float64),
    )


def write_points_ply(path, points, colors=None, binary: bool = True) -> None:
    """Point cloud: double x, y, z and optional uchar red, green, blue."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    fields = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    if colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    arr = np.zeros(len(pts), dtype=fields)
    arr["x"], arr["y"], arr["z"] = pts.T
    if colors is not None:
        c = np.asarray(colors)
        c = c if c.dtype == np.uint8 else to_uint8(c)
        arr["red"], arr["green"], arr["blue"] = c.reshape(-1, 3).T
    write_ply(path, {"vertex": arr}, binary)


def read_points_ply(path):
    v = read_ply(path)["vertex"]
    pts = np.stack([v["x"], v["y"], v["z"]], axis=1).astype(np.float64)
    if "red" in v.dtype.names:
        return pts, np.stack([v["red"], v["green"], v["blue"]], axis=1)
    return pts, None


# ---------------------------------------------------------------------------
# JSON


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        # JSONDecodeError reports a character position; convert to bytes
        raise ParseError(f"invalid JSON: {e.msg}", len(text[: e.pos].encode())) from e

