"""Procedural scenes with exact depth, visibility and correspondence oracles.

Stand-ins for the learned components of the pipeline: ``raycast`` gives
ground-truth color and depth, ``make_dsd`` a relative-scale stereo depth,
``make_mono`` a biased monocular depth, ``sample_sfm`` sparse metric depth.
All randomness comes from a Philox generator keyed by an explicit seed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .errors import DomainError, InsufficientDataError
from .geometry import (
    Camera, DepthConvention, DepthMap, ImageRGB, Intrinsics, Mask, Pose, SparseDepthSet, look_at, pixel_grid,
)
from .schemas import SCENE_SCHEMA

NO_HIT = -1


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based generator; identical streams on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


def worker_count() -> int:
    """Thread cap from ``VEIGAR_THREADS`` (default 1)."""
    raw = os.environ.get("VEIGAR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# textures and primitives


@dataclass(frozen=True)
class Texture:
    kind: str = "solid"  # solid | checker | gradient
    colors: tuple = ((0.8, 0.8, 0.8), (0.2, 0.2, 0.2))
    size: float = 1.0  # checker cell size or gradient period
    axis: tuple = (1.0, 0.0, 0.0)

    def shade(self, points: np.ndarray, uv: np.ndarray) -> np.ndarray:
        c0 = np.asarray(self.colors[0], dtype=np.float64)
        c1 = np.asarray(self.colors[1] if len(self.colors) > 1 else self.colors[0], dtype=np.float64)
        if self.kind == "solid":
            return np.broadcast_to(c0, points.shape).copy()
        if self.kind == "checker":
            cell = np.floor(uv[:, 0] / self.size) + np.floor(uv[:, 1] / self.size)
            odd = (cell.astype(np.int64) % 2).astype(bool)
            return np.where(odd[:, None], c1, c0)
        if self.kind == "gradient":
            s = points @ np.asarray(self.axis, dtype=np.float64)
            t = 0.5 + 0.5 * np.sin(2 * math.pi * s / self.size)
            return (1 - t)[:, None] * c0 + t[:, None] * c1
        raise DomainError(f"unknown texture kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"type": self.kind, "colors": [list(c) for c in self.colors], "size": self.size,
                "axis": list(self.axis)}

    @classmethod
    def from_dict(cls, d: dict) -> "Texture":
        colors = d.get("colors") or [d.get("color", [0.8, 0.8, 0.8])]
        return cls(d.get("type", "solid"), tuple(tuple(float(v) for v in c) for c in colors),
                   float(d.get("size", 1.0)), tuple(d.get("axis", (1.0, 0.0, 0.0))))


@dataclass(frozen=True)
class Plane:
    """Rectangle (or infinite plane when ``half_extent`` is None)."""

    center: tuple
    normal: tuple
    u_axis: tuple = (1.0, 0.0, 0.0)
    half_extent: tuple | None = None
    texture: Texture = field(default_factory=Texture)

    def frame(self):
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        u = np.asarray(self.u_axis, dtype=np.float64)
        u = u - (u @ n) * n
        u = u / np.linalg.norm(u)
        return n, u, np.cross(n, u)

    def intersect(self, origin, dirs):
        n, u, v = self.frame()
        c = np.asarray(self.center, dtype=np.float64)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((c - origin) @ n) / denom
        t = np.where(np.abs(denom) > 1e-12, t, np.inf)
        pts = origin + t[:, None] * dirs
        local = pts - c
        uv = np.stack([local @ u, local @ v], axis=1)
        if self.half_extent is not None:
            inside = (np.abs(uv[:, 0]) <= self.half_extent[0]) & (np.abs(uv[:, 1]) <= self.half_extent[1])
            t = np.where(inside, t, np.inf)
        return t, uv

    def to_dict(self) -> dict:
        return {"type": "plane", "center": list(self.center), "normal": list(self.normal),
                "u_axis": list(self.u_axis),
                "half_extent": list(self.half_extent) if self.half_extent is not None else None,
                "texture": self.texture.to_dict()}


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    texture: Texture = field(default_factory=Texture)

    def intersect(self, origin, dirs, t_min=0.0):
        c = np.asarray(self.center, dtype=np.float64)
        oc = origin - c
        A = np.einsum("ij,ij->i", dirs, dirs)
        B = 2.0 * (dirs @ oc)
        C = oc @ oc - self.radius**2
        disc = B * B - 4 * A * C
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        # numerically stable roots
        q = -0.5 * (B + np.where(B >= 0, sq, -sq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = q / A
            r2 = np.where(q != 0, C / q, r1)
        lo, hi = np.minimum(r1, r2), np.maximum(r1, r2)
        t = np.where(lo >= t_min, lo, np.where(hi >= t_min, hi, np.inf))
        t = np.where(hit, t, np.inf)
        pts = origin + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
        d = (pts - c) / self.radius
        # (longitude, latitude) scaled to arc length for checker textures
        uv = np.stack([np.arctan2(d[:, 0], d[:, 2]), np.arcsin(np.clip(d[:, 1], -1, 1))], axis=1) * self.radius
        return t, uv

    def to_dict(self) -> dict:
        return {"type": "sphere", "center": list(self.center), "radius": self.radius,
                "texture": self.texture.to_dict()}


def _primitive_from_dict(d: dict):
    tex = Texture.from_dict(d.get("texture", {}))
    if d["type"] == "plane":
        he = d.get("half_extent")
        return Plane(tuple(d["center"]), tuple(d["normal"]), tuple(d.get("u_axis", (1.0, 0.0, 0.0))),
                     tuple(he) if he is not None else None, tex)
    if d["type"] == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]), tex)
    raise DomainError(f"unknown primitive type {d['type']!r}")


def _camera_from_dict(d: dict) -> Camera:
    if "look_at" in d:
        la = d["look_at"]
        pose = look_at(la["eye"], la["target"], la.get("up", (0.0, -1.0, 0.0)))
    else:
        pose = Pose.from_dict(d["pose"])
    return Camera(Intrinsics.from_dict(d["intrinsics"]), pose, int(d["width"]), int(d["height"]),
                  float(d.get("near", 0.01)), float(d.get("far", 1000.0)))


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple
    rig: tuple
    seed: int = 0
    generation: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if not self.primitives:
            raise DomainError("scene needs at least one primitive")
        if not self.rig:
            raise DomainError("scene needs at least one camera")
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "rig", tuple(self.rig))

    def without(self, primitive_id: int) -> "SceneSpec":
        """Same scene with one primitive removed (ids of the others shift)."""
        self._check_id(primitive_id)
        prims = tuple(p for i, p in enumerate(self.primitives) if i != primitive_id)
        return SceneSpec(prims, self.rig, self.seed, self.generation)

    def _check_id(self, primitive_id):
        if not (isinstance(primitive_id, (int, np.integer)) and 0 <= primitive_id < len(self.primitives)):
            raise DomainError(f"unknown primitive id {primitive_id!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        jsonschema.validate(d, SCENE_SCHEMA)
        prims = tuple(_primitive_from_dict(p) for p in d["primitives"])
        rig = tuple(_camera_from_dict(c) for c in d["cameras"])
        return cls(prims, rig, int(d.get("seed", 0)), dict(d.get("generation", {})))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "primitives": [p.to_dict() for p in self.primitives],
            "cameras": [c.to_dict() for c in self.rig],
            "generation": dict(self.generation),
        }


# ---------------------------------------------------------------------------
# ray casting


def camera_rays(cam: Camera, pixels) -> tuple[np.ndarray, np.ndarray]:
    """World origin and directions scaled so the ray parameter is camera z."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    K = cam.intrinsics
    d_cam = np.stack([(px[:, 0] - K.cx) / K.fx, (px[:, 1] - K.cy) / K.fy, np.ones(len(px))], axis=1)
    return cam.pose.center, d_cam @ cam.pose.rotation


def _cast_chunk(scene: SceneSpec, cam: Camera, px):
    origin, dirs = camera_rays(cam, px)
    best = np.full(len(px), np.inf)
    prim = np.full(len(px), NO_HIT, dtype=np.int64)
    uv = np.zeros((len(px), 2))
    for i, p in enumerate(scene.primitives):
        if isinstance(p, Sphere):
            t, puv = p.intersect(origin, dirs, cam.near)
        else:
            t, puv = p.intersect(origin, dirs)
        t = np.where((t >= cam.near) & (t <= cam.far), t, np.inf)
        closer = t < best
        best = np.where(closer, t, best)
        prim = np.where(closer, i, prim)
        uv = np.where(closer[:, None], puv, uv)
    pts = origin + np.where(np.isfinite(best), best, 0.0)[:, None] * dirs
    color = np.zeros((len(px), 3))
    for i, p in enumerate(scene.primitives):
        sel = prim == i
        if np.any(sel):
            color[sel] = p.texture.shade(pts[sel], uv[sel])
    return best, prim, color


def cast_pixels(scene: SceneSpec, cam: Camera, pixels):
    """Cast rays through arbitrary (sub-pixel) coordinates.

    Returns ``(z, primitive_id, color)``; misses have ``z = inf`` and id -1.
    """
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    workers = min(worker_count(), max(1, len(px) // 4096))
    if workers <= 1:
        return _cast_chunk(scene, cam, px)
    chunks = np.array_split(px, workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda c: _cast_chunk(scene, cam, c), chunks))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


@dataclass
class RaycastResult:
    image: ImageRGB
    depth: DepthMap
    primitive: np.ndarray  # (H, W) id of the nearest hit, -1 for background


def raycast(scene: SceneSpec, cam: Camera, background=(0.0, 0.0, 0.0)) -> RaycastResult:
    """Exact color and metric z-depth per pixel; background pixels are invalid."""
    pix = pixel_grid(cam.width, cam.height).reshape(-1, 2)
    z, prim, color = cast_pixels(scene, cam, pix)
    hit = prim != NO_HIT
    color[~hit] = background
    H, W = cam.height, cam.width
    depth = DepthMap(np.where(hit, z, 0.0).reshape(H, W), hit.reshape(H, W), DepthConvention.METRIC)
    return RaycastResult(ImageRGB(np.clip(color, 0.0, 1.0).reshape(H, W, 3)), depth, prim.reshape(H, W))


# ---------------------------------------------------------------------------
# degraded depth sources


def make_dsd(gt: DepthMap, s: float, noise_sigma: float = 0.0, seed: int = 0) -> DepthMap:
    """Relative-scale stereo depth ``s * gt * (1 + eps)``, ``eps ~ N(0, sigma^2)``."""
    if not s > 0:
        raise DomainError("dsd scale must be positive")
    vals = s * gt.values
    if noise_sigma > 0:
        eps = rng_for(seed).standard_normal(gt.shape)
        vals = vals * (1.0 + noise_sigma * eps)
    vals = np.where(gt.valid, np.maximum(vals, 1e-9), 0.0)
    return DepthMap(vals, gt.valid, DepthConvention.RELATIVE)


@dataclass(frozen=True)
class Scale:
    c: float


@dataclass(frozen=True)
class Affine:
    a: float
    b: float


@dataclass(frozen=True)
class Ramp:
    """Additive ``a + b_x * x + b_y * y`` in pixel coordinates."""

    a: float
    b_x: float
    b_y: float


def bias_from_dict(d: dict):
    kind = d["kind"].lower()
    if kind == "scale":
        return Scale(float(d["c"]))
    if kind == "affine":
        return Affine(float(d["a"]), float(d["b"]))
    if kind == "ramp":
        return Ramp(float(d["a"]), float(d["b_x"]), float(d["b_y"]))
    raise DomainError(f"unknown bias kind {kind!r}")


def make_mono(gt: DepthMap, bias, seed: int = 0, noise_sigma: float = 0.0) -> DepthMap:
    """Monocular-style depth: ``gt`` distorted by a closed-form bias.

    Raises:
        DomainError: the bias drives a valid pixel to non-positive depth.
    """
    d = gt.values
    if isinstance(bias, Scale):
        out = bias.c * d
    elif isinstance(bias, Affine):
        out = bias.a * d + bias.b
    elif isinstance(bias, Ramp):
        g = pixel_grid(gt.width, gt.height)
        out = d + bias.a + bias.b_x * g[..., 0] + bias.b_y * g[..., 1]
    else:
        raise DomainError(f"unsupported bias {bias!r}")
    if noise_sigma > 0:
        out = out * (1.0 + noise_sigma * rng_for(seed).standard_normal(gt.shape))
    out = np.where(gt.valid, out, 0.0)
    if np.any(out[gt.valid] <= 0):
        raise DomainError("bias produces non-positive depth")
    return DepthMap(out, gt.valid, DepthConvention.RELATIVE)


def sample_sfm(scene: SceneSpec, cam: Camera, n: int, pixel_noise: float = 0.0, seed: int = 0,
               depth: DepthMap | None = None) -> SparseDepthSet:
    """``n`` distinct valid pixels with their exact metric depth.

    ``pixel_noise`` jitters the reported pixel position (std, pixels) while
    keeping the depth of the original surface point.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    gt = depth if depth is not None else raycast(scene, cam).depth
    flat = np.flatnonzero(gt.valid.ravel())
    if n > len(flat):
        raise InsufficientDataError(f"requested {n} samples but only {len(flat)} valid pixels")
    rng = rng_for(seed)
    pick = flat[rng.choice(len(flat), size=n, replace=False)]
    px = np.stack([pick % gt.width, pick // gt.width], axis=1).astype(np.float64)
    z = gt.values.ravel()[pick]
    if pixel_noise > 0:
        px = px + pixel_noise * rng.standard_normal(px.shape)
        px[:, 0] = np.clip(px[:, 0], 0, gt.width - 1)
        px[:, 1] = np.clip(px[:, 1], 0, gt.height - 1)
    return SparseDepthSet(px, z, gt.width, gt.height)


def make_mask(scene: SceneSpec, cam: Camera, primitive_id: int) -> Mask:
    """Pixels whose nearest hit is ``primitive_id``."""
    scene._check_id(primitive_id)
    return Mask(raycast(scene, cam).primitive == primitive_id)


@dataclass
class Correspondences:
    src: np.ndarray  # (N, 2) integer pixels in the source view
    depth: np.ndarray  # (N,) source z-depth
    dst: np.ndarray  # (N, 2) continuous pixels in the target view


def correspondences(scene: SceneSpec, cam_a: Camera, cam_b: Camera, n: int | None = None, seed: int = 0,
                    tol: float = 1e-7) -> Correspondences:
    """Ground-truth matches between two views, restricted to mutually visible points.

    The target pixel comes from a homogeneous ``K [R | t]`` projection of the
    ray-hit world point, and visibility is confirmed by re-casting the ray
    through that pixel in ``cam_b``.
    """
    pix = pixel_grid(cam_a.width, cam_a.height).reshape(-1, 2)
    z, prim, _ = cast_pixels(scene, cam_a, pix)
    hit = prim != NO_HIT
    pix, z, prim = pix[hit], z[hit], prim[hit]
    origin, dirs = camera_rays(cam_a, pix)
    world = origin + z[:, None] * dirs

    P = cam_b.intrinsics.matrix @ np.hstack([cam_b.pose.rotation, cam_b.pose.translation[:, None]])
    h = np.hstack([world, np.ones((len(world), 1))]) @ P.T
    zb = h[:, 2]
    front = zb > cam_b.near
    uv = h[:, :2] / np.where(front, zb, 1.0)[:, None]
    inside = front & (uv[:, 0] >= 0) & (uv[:, 0] <= cam_b.width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= cam_b.height - 1)
    zr, pr, _ = cast_pixels(scene, cam_b, uv[inside])
    seen = np.zeros(len(uv), dtype=bool)
    seen[inside] = (pr == prim[inside]) & (np.abs(zr - zb[inside]) <= tol * np.maximum(zb[inside], 1.0))

    idx = np.flatnonzero(seen)
    if n is not None and n < len(idx):
        idx = np.sort(rng_for(seed).choice(idx, size=n, replace=False))
    return Correspondences(pix[idx], z[idx], uv[idx])


def orbit_rig(n: int, K: Intrinsics, width: int, height: int, target=(0.0, 0.0, 5.0), radius: float = 1.0,
              near: float = 0.1, far: float = 100.0) -> list[Camera]:
    """Cameras on a small circle in the z=0 plane, all looking at ``target``."""
    cams = []
    for i in range(n):
        ang = 2 * math.pi * i / n
        eye = (radius * math.cos(ang), 0.5 * radius * math.sin(ang), 0.0)
        cams.append(Camera(K, look_at(eye, target), width, height, near, far))
    return cams


# ---------------------------------------------------------------------------
# Gaussian-built scenes for the splatting tests


def two_plane_gaussians(n: int = 50, seed: int = 0, front_fraction: float = 0.5):
    """Ground-truth Gaussian scene: a back wall and a smaller front card.

    Gaussians sit on a jittered grid on each plane with smoothly varying
    colors. Returns ``(cloud, front_ids)``.
    """
    from .splat import GaussianCloud

    rng = rng_for(seed)
    n_front = int(round(n * front_fraction))
    n_back = n - n_front

    def grid_on(count, z, half, jitter):
        side = int(math.ceil(math.sqrt(count)))
        g = np.linspace(-half, half, side)
        xx, yy = np.meshgrid(g, g)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)[:count]
        pts = pts + jitter * rng.uniform(-1, 1, pts.shape)
        return np.hstack([pts, np.full((count, 1), z)]), 2 * half / max(side - 1, 1)

    back, sb = grid_on(n_back, 6.0, 2.2, 0.05)
    front, sf = grid_on(n_front, 4.0, 0.9, 0.03)
    mu = np.vstack([back, front])
    scale = np.vstack([
        np.tile([0.55 * sb, 0.55 * sb, 0.05], (n_back, 1)),
        np.tile([0.55 * sf, 0.55 * sf, 0.04], (n_front, 1)),
    ])
    rot = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    u = (mu[:, 0] - mu[:, 0].min()) / np.ptp(mu[:, 0])
    v = (mu[:, 1] - mu[:, 1].min()) / np.ptp(mu[:, 1])
    color = np.stack([0.2 + 0.6 * u, 0.3 + 0.4 * v, 0.7 - 0.5 * u * v], axis=1)
    color[n_back:] = np.stack([0.9 - 0.5 * v[n_back:], 0.2 + 0.5 * u[n_back:], 0.25 + 0.1 * u[n_back:]], axis=1)
    opacity = np.full(n, 0.9)
    return GaussianCloud(mu, scale, rot, color, opacity), np.arange(n_back, n)
