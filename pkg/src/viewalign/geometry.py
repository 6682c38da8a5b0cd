"""Pinhole cameras, rigid transforms and the raster containers.

Conventions:
    * Pixel centers sit at integer coordinates; ``(x, y)`` = (column, row).
    * Depth is camera-frame z, not distance along the ray.
    * A :class:`Pose` maps world (or anchor) coordinates into its camera
      frame: ``X_cam = R @ X_world + t``.

All containers are immutable; their arrays are flagged read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, DomainError

ORTHO_TOL = 1e-9


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Intrinsics:
    """Skewless pinhole intrinsics (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.fx > 0 and self.fy > 0 and math.isfinite(self.fx) and math.isfinite(self.fy)):
            raise DomainError(f"focal lengths must be positive and finite, got fx={self.fx}, fy={self.fy}")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise DomainError("principal point must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy])

    @classmethod
    def from_array(cls, a) -> "Intrinsics":
        fx, fy, cx, cy = (float(v) for v in a)
        return cls(fx, fy, cx, cy)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``X -> R X + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.rotation, np.float64)
        t = _frozen(self.translation, np.float64).reshape(3)
        if R.shape != (3, 3):
            raise DomainError(f"rotation must be 3x3, got {R.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise DomainError("pose entries must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            raise DomainError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise DomainError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        """Transform ``(..., 3)`` points."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        return pose_compose(self, other)

    def inverse(self) -> "Pose":
        return pose_inverse(self)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.array(d["rotation"]), np.array(d["translation"]))


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Return ``a ∘ b`` (apply ``b`` first, then ``a``)."""
    R = a.rotation @ b.rotation
    # Re-orthonormalize to stop drift accumulating over long chains.
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    return Pose(R, a.rotation @ b.translation + a.translation)


def pose_inverse(a: Pose) -> Pose:
    Rt = a.rotation.T
    return Pose(Rt, -Rt @ a.translation)


def relative_pose(src: Pose, dst: Pose) -> Pose:
    """Pose taking ``src``-camera coordinates to ``dst``-camera coordinates."""
    return pose_compose(dst, pose_inverse(src))


def rotation_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    K = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def look_at(eye, target, up=(0.0, -1.0, 0.0)) -> Pose:
    """World-to-camera pose for a camera at ``eye`` looking at ``target``.

    Camera axes follow the vision convention (x right, y down, z forward);
    ``up`` is the world direction that should appear towards -y.
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(np.asarray(up, dtype=np.float64), z)
    x = -x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return Pose(R, -R @ eye)


# ---------------------------------------------------------------------------
# lift / reproject


def lift(p, depth, K: Intrinsics) -> np.ndarray:
    """Back-project pixel(s) ``p`` at z-depth ``depth`` into the camera frame.

    Works on a single pixel ``(2,)`` or a batch ``(N, 2)`` with ``depth`` of
    shape ``(N,)``.
    """
    p = np.asarray(p, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    if np.any(~(d > 0)) or np.any(~np.isfinite(d)):
        raise DomainError("depth must be positive and finite")
    x = d * (p[..., 0] - K.cx) / K.fx
    y = d * (p[..., 1] - K.cy) / K.fy
    return np.stack([x, y, np.broadcast_to(d, x.shape)], axis=-1)


def reproject(X, K: Intrinsics):
    """Project camera-frame point(s) to pixels. Returns ``(pixel, z)``."""
    X = np.asarray(X, dtype=np.float64)
    z = X[..., 2]
    if np.any(~(z > 0)):
        raise BehindCameraError("point is at or behind the camera plane")
    u = K.fx * X[..., 0] / z + K.cx
    v = K.fy * X[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1), z.copy() if isinstance(z, np.ndarray) else float(z)


def pixel_grid(width: int, height: int) -> np.ndarray:
    """``(H, W, 2)`` array of integer pixel-center coordinates ``(x, y)``."""
    ys, xs = np.mgrid[0:height, 0:width]
    return np.stack([xs, ys], axis=-1).astype(np.float64)


# ---------------------------------------------------------------------------
# raster containers


class DepthConvention(str, enum.Enum):
    METRIC = "metric"
    RELATIVE = "relative"


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Dense depth with a per-pixel validity mask.

    ``values`` is ``(H, W)``; entries where ``valid`` is false carry no
    meaning (zero after construction).
    """

    values: np.ndarray
    valid: np.ndarray | None = None
    convention: DepthConvention = DepthConvention.METRIC

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise DomainError(f"depth values must be 2-D, got shape {vals.shape}")
        if self.valid is None:
            valid = np.isfinite(vals) & (vals > 0)
        else:
            valid = np.array(self.valid, dtype=bool, copy=True)
            if valid.shape != vals.shape:
                raise DomainError("valid mask shape does not match depth values")
            bad = valid & ~(np.isfinite(vals) & (vals > 0))
            if np.any(bad):
                raise DomainError(f"{int(bad.sum())} valid depth entries are non-positive or non-finite")
        vals[~valid] = 0.0
        vals.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "convention", DepthConvention(self.convention))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def scaled(self, s: float, convention: "DepthConvention | None" = None) -> "DepthMap":
        return DepthMap(self.values * s, self.valid, convention or self.convention)

    def __eq__(self, other):
        if not isinstance(other, DepthMap):
            return NotImplemented
        return (
            np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values, other.values)
            and self.convention == other.convention
        )


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """``(H, W, 3)`` float image with channels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64, copy=True)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DomainError(f"image must have shape (H, W, 3), got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            raise DomainError("image channels must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def __eq__(self, other):
        if not isinstance(other, ImageRGB):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class Mask:
    """Per-pixel boolean; true marks the object / inpainted region."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool, copy=True)
        if b.ndim != 2:
            raise DomainError(f"mask must be 2-D, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def full(cls, height: int, width: int, value: bool = True) -> "Mask":
        return cls(np.full((height, width), value, dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


@dataclass(frozen=True, eq=False)
class SparseDepthSet:
    """Sparse metric depth samples: ``pixels`` ``(N, 2)`` and ``depths`` ``(N,)``.

    ``width``/``height`` give the image rectangle the pixels must fall in
    (``[0, W-1] x [0, H-1]``).
    """

    pixels: np.ndarray
    depths: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        px = _frozen(self.pixels, np.float64).reshape(-1, 2)
        d = _frozen(self.depths, np.float64).reshape(-1)
        if len(px) != len(d):
            raise DomainError("pixels and depths differ in length")
        if np.any(~(d > 0)) or not np.all(np.isfinite(d)):
            raise DomainError("sparse depths must be positive and finite")
        inside = (
            (px[:, 0] >= 0) & (px[:, 0] <= self.width - 1) & (px[:, 1] >= 0) & (px[:, 1] <= self.height - 1)
        )
        if not np.all(inside):
            raise DomainError("sparse sample outside the image rectangle")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "depths", d)

    def __len__(self) -> int:
        return len(self.depths)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "samples": [
                {"pixel": [float(x), float(y)], "depth": float(z)}
                for (x, y), z in zip(self.pixels, self.depths)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SparseDepthSet":
        samples = d["samples"]
        px = np.array([s["pixel"] for s in samples], dtype=np.float64).reshape(-1, 2)
        z = np.array([s["depth"] for s in samples], dtype=np.float64)
        return cls(px, z, int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class Camera:
    intrinsics: Intrinsics
    pose: Pose
    width: int
    height: int
    near: float = 0.01
    far: float = 1000.0

    def __post_init__(self):
        if not (0 < self.near < self.far):
            raise DomainError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        if self.width < 1 or self.height < 1:
            raise DomainError("camera resolution must be positive")

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "pose": self.pose.to_dict(),
            "width": self.width,
            "height": self.height,
            "near": self.near,
            "far": self.far,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            Intrinsics.from_dict(d["intrinsics"]),
            Pose.from_dict(d["pose"]),
            int(d["width"]),
            int(d["height"]),
            float(d.get("near", 0.01)),
            float(d.get("far", 1000.0)),
        )


def bilinear_sample(depth: DepthMap, pixels) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``depth`` at continuous ``(N, 2)`` pixel coordinates.

    Returns ``(values, ok)``; ``ok`` is false where the point is outside the
    grid or a neighbour carrying non-zero weight is invalid.
    """
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    H, W = depth.shape
    x, y = px[:, 0], px[:, 1]
    inside = (x >= 0) & (x <= W - 1) & (y >= 0) & (y <= H - 1)
    x0 = np.clip(np.floor(x), 0, max(W - 2, 0)).astype(np.int64)
    y0 = np.clip(np.floor(y), 0, max(H - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    ax = np.where(inside, x - x0, 0.0)
    ay = np.where(inside, y - y0, 0.0)
    w = [(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay]
    idx = [(y0, x0), (y0, x1), (y1, x0), (y1, x1)]
    vals = np.zeros(len(px))
    ok = inside.copy()
    for wk, (yy, xx) in zip(w, idx):
        vals += wk * depth.values[yy, xx]
        ok &= (wk == 0) | depth.valid[yy, xx]
    return vals, ok
