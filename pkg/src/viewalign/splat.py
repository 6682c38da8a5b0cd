"""Toy differentiable 3D Gaussian splatting.

Rendering is exhaustive per pixel (no tiles). Quaternions are ``(w, x, y, z)``
and are normalized before use, so gradients w.r.t. ``rot`` are taken through
the normalization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError
from .geometry import Camera, DepthMap, ImageRGB, Mask, pixel_grid
from .losses import LossWeights, total_loss, total_loss_grad

logger = logging.getLogger(__name__)

COV2D_BLUR = 0.3
ALPHA_MIN = 1.0 / 255.0
DEPTH_ALPHA_MIN = 1e-4


@dataclass(frozen=True, eq=False)
class Gaussian3D:
    mu: np.ndarray
    scale: np.ndarray
    rot: np.ndarray
    color: np.ndarray
    opacity: float

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64).reshape(3)
        scale = np.array(self.scale, dtype=np.float64).reshape(3)
        rot = np.array(self.rot, dtype=np.float64).reshape(4)
        color = np.array(self.color, dtype=np.float64).reshape(3)
        if np.any(scale <= 0):
            raise DomainError("Gaussian scales must be positive")
        if abs(np.linalg.norm(rot) - 1.0) > 1e-9:
            raise DomainError("rotation quaternion must have unit norm")
        if not 0.0 <= self.opacity <= 1.0:
            raise DomainError("opacity must lie in [0, 1]")
        if np.any(color < 0) or np.any(color > 1):
            raise DomainError("color must lie in [0, 1]")
        for name, val in (("mu", mu), ("scale", scale), ("rot", rot), ("color", color)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "opacity", float(self.opacity))


@dataclass
class GaussianCloud:
    """Struct-of-arrays Gaussian set used by the renderer and optimizer."""

    mu: np.ndarray  # (N, 3)
    scale: np.ndarray  # (N, 3)
    rot: np.ndarray  # (N, 4)
    color: np.ndarray  # (N, 3)
    opacity: np.ndarray  # (N,)

    PARAMS = ("mu", "scale", "rot", "color", "opacity")

    def __post_init__(self):
        n = len(self.opacity)
        self.mu = np.array(self.mu, dtype=np.float64).reshape(n, 3)
        self.scale = np.array(self.scale, dtype=np.float64).reshape(n, 3)
        self.rot = np.array(self.rot, dtype=np.float64).reshape(n, 4)
        self.color = np.array(self.color, dtype=np.float64).reshape(n, 3)
        self.opacity = np.array(self.opacity, dtype=np.float64).reshape(n)

    def __len__(self):
        return len(self.opacity)

    @classmethod
    def from_list(cls, gaussians) -> "GaussianCloud":
        gs = list(gaussians)
        if not gs:
            return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0))
        return cls(
            np.stack([g.mu for g in gs]),
            np.stack([g.scale for g in gs]),
            np.stack([g.rot for g in gs]),
            np.stack([g.color for g in gs]),
            np.array([g.opacity for g in gs]),
        )

    def to_list(self) -> list[Gaussian3D]:
        return [
            Gaussian3D(self.mu[i], self.scale[i], self.rot[i] / np.linalg.norm(self.rot[i]),
                       self.color[i], float(self.opacity[i]))
            for i in range(len(self))
        ]

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(*(getattr(self, p).copy() for p in self.PARAMS))

    def subset(self, idx) -> "GaussianCloud":
        return GaussianCloud(*(getattr(self, p)[idx] for p in self.PARAMS))


def as_cloud(gaussians) -> GaussianCloud:
    return gaussians if isinstance(gaussians, GaussianCloud) else GaussianCloud.from_list(gaussians)


# ---------------------------------------------------------------------------
# covariance


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrices for ``(..., 4)`` quaternions (normalized first)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return R.reshape(q.shape[:-1] + (3, 3))


def _rotmat_dq(q) -> np.ndarray:
    """``(N, 4, 3, 3)`` derivatives of the rotation w.r.t. a unit quaternion."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    o = np.zeros_like(w)
    dw = [o, -2 * z, 2 * y, 2 * z, o, -2 * x, -2 * y, 2 * x, o]
    dx = [o, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x]
    dy = [-4 * y, 2 * x, 2 * w, 2 * x, o, 2 * z, -2 * w, 2 * z, -4 * y]
    dz = [-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, o]
    out = np.stack([np.stack(d, axis=-1) for d in (dw, dx, dy, dz)], axis=-2)
    return out.reshape(q.shape[:-1] + (4, 3, 3))


def covariance_from(scale, rot) -> np.ndarray:
    """``R diag(scale)^2 R^T`` for one or many Gaussians."""
    R = quat_to_rotmat(rot)
    s2 = np.asarray(scale, dtype=np.float64) ** 2
    return (R * s2[..., None, :]) @ np.swapaxes(R, -1, -2)


def gaussian_density(x, g: Gaussian3D) -> float:
    d = np.asarray(x, dtype=np.float64) - g.mu
    cov = covariance_from(g.scale, g.rot)
    return float(np.exp(-0.5 * d @ np.linalg.solve(cov, d)))


# ---------------------------------------------------------------------------
# projection


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    z: float


@dataclass
class _Projection:
    Xc: np.ndarray  # (N, 3) camera-frame means
    mean2d: np.ndarray  # (N, 2)
    J: np.ndarray  # (N, 2, 3)
    M: np.ndarray  # (N, 3, 3) camera-frame 3D covariance
    cov2d: np.ndarray  # (N, 2, 2)
    visible: np.ndarray  # (N,) bool


def _project_all(cloud: GaussianCloud, cam: Camera) -> _Projection:
    K, W = cam.intrinsics, cam.pose.rotation
    Xc = cam.pose.apply(cloud.mu)
    X, Y, Z = Xc[:, 0], Xc[:, 1], Xc[:, 2]
    visible = (Z > cam.near) & (Z < cam.far)
    Zs = np.where(visible, Z, 1.0)
    mean2d = np.stack([K.fx * X / Zs + K.cx, K.fy * Y / Zs + K.cy], axis=1)
    n = len(cloud)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = K.fx / Zs
    J[:, 0, 2] = -K.fx * X / Zs**2
    J[:, 1, 1] = K.fy / Zs
    J[:, 1, 2] = -K.fy * Y / Zs**2
    M = W @ covariance_from(cloud.scale, cloud.rot) @ W.T
    cov2d = J @ M @ np.swapaxes(J, 1, 2) + COV2D_BLUR * np.eye(2)
    return _Projection(Xc, mean2d, J, M, cov2d, visible)


def project_gaussian(g: Gaussian3D, cam: Camera) -> ProjectedGaussian | None:
    """EWA footprint of one Gaussian; ``None`` if it is outside the clip range."""
    proj = _project_all(GaussianCloud.from_list([g]), cam)
    if not proj.visible[0]:
        return None
    return ProjectedGaussian(proj.mean2d[0], proj.cov2d[0], float(proj.Xc[0, 2]))


# ---------------------------------------------------------------------------
# rendering


@dataclass
class RenderResult:
    image: ImageRGB
    depth: DepthMap
    alpha: np.ndarray  # (H, W) accumulated opacity


@dataclass
class _Forward:
    proj: _Projection
    order: np.ndarray
    alphas: list = field(default_factory=list)  # per sorted Gaussian, (P,) effective alpha
    trans: list = field(default_factory=list)  # per sorted Gaussian, (P,) transmittance before it
    deltas: list = field(default_factory=list)
    color: np.ndarray | None = None
    num: np.ndarray | None = None
    acc: np.ndarray | None = None


def _forward(cloud: GaussianCloud, cam: Camera) -> _Forward:
    proj = _project_all(cloud, cam)
    z = proj.Xc[:, 2]
    vis = np.flatnonzero(proj.visible)
    order = vis[np.argsort(z[vis], kind="stable")]
    pix = pixel_grid(cam.width, cam.height).reshape(-1, 2)
    P = len(pix)
    fw = _Forward(proj, order)
    C = np.zeros((P, 3))
    num = np.zeros(P)
    acc = np.zeros(P)
    T = np.ones(P)
    for k in order:
        Q = np.linalg.inv(proj.cov2d[k])
        d = pix - proj.mean2d[k]
        power = -0.5 * (Q[0, 0] * d[:, 0] ** 2 + 2 * Q[0, 1] * d[:, 0] * d[:, 1] + Q[1, 1] * d[:, 1] ** 2)
        a = cloud.opacity[k] * np.exp(power)
        a[a < ALPHA_MIN] = 0.0
        wgt = T * a
        C += wgt[:, None] * cloud.color[k]
        num += wgt * z[k]
        acc += wgt
        fw.alphas.append(a)
        fw.trans.append(T)
        fw.deltas.append(d)
        T = T * (1.0 - a)
    fw.color, fw.num, fw.acc = C, num, acc
    return fw


def _result(fw: _Forward, cam: Camera) -> RenderResult:
    H, W = cam.height, cam.width
    valid = fw.acc >= DEPTH_ALPHA_MIN
    depth = np.where(valid, fw.num / np.where(valid, fw.acc, 1.0), 0.0)
    img = np.clip(fw.color, 0.0, 1.0).reshape(H, W, 3)
    return RenderResult(
        ImageRGB(img),
        DepthMap(depth.reshape(H, W), valid.reshape(H, W)),
        np.clip(fw.acc, 0.0, 1.0).reshape(H, W),
    )


def render(gaussians, cam: Camera) -> RenderResult:
    """Front-to-back alpha compositing of the Gaussians seen by ``cam``.

    Depth is the alpha-weighted mean camera z, invalid where the
    accumulated alpha is below 1e-4. Empty scenes render black.
    """
    cloud = as_cloud(gaussians)
    return _result(_forward(cloud, cam), cam)


def _zeros_like_cloud(cloud: GaussianCloud) -> GaussianCloud:
    return GaussianCloud(*(np.zeros_like(getattr(cloud, p)) for p in GaussianCloud.PARAMS))


def _backward(cloud: GaussianCloud, cam: Camera, fw: _Forward, up_color, up_depth) -> GaussianCloud:
    grads = _zeros_like_cloud(cloud)
    P = cam.width * cam.height
    gC = np.asarray(up_color, dtype=np.float64).reshape(P, 3)
    gD = np.zeros(P) if up_depth is None else np.asarray(up_depth, dtype=np.float64).reshape(P)
    valid = fw.acc >= DEPTH_ALPHA_MIN
    A = np.where(valid, fw.acc, 1.0)
    D = np.where(valid, fw.num / A, 0.0)
    gD = np.where(valid, gD, 0.0)
    gD_over_A = gD / A

    proj = fw.proj
    z = proj.Xc[:, 2]
    n_vis = len(fw.order)
    g_mean2d = np.zeros((len(cloud), 2))
    g_cov2d = np.zeros((len(cloud), 2, 2))
    g_z = np.zeros(len(cloud))

    rest_c = np.zeros((P, 3))
    rest_n = np.zeros(P)
    rest_a = np.zeros(P)
    for i in range(n_vis - 1, -1, -1):
        k = fw.order[i]
        a, T, d = fw.alphas[i], fw.trans[i], fw.deltas[i]
        wgt = a * T
        grads.color[k] = wgt @ gC
        g_z[k] += wgt @ gD_over_A
        g_a = T * (np.einsum("pc,pc->p", gC, cloud.color[k] - rest_c)
                   + gD_over_A * ((z[k] - rest_n) - D * (1.0 - rest_a)))
        rest_c = a[:, None] * cloud.color[k] + (1.0 - a)[:, None] * rest_c
        rest_n = a * z[k] + (1.0 - a) * rest_n
        rest_a = a + (1.0 - a) * rest_a

        live = a > 0
        if not np.any(live):
            continue
        g_a, a_l, d = g_a[live], a[live], d[live]
        grads.opacity[k] = g_a @ (a_l / cloud.opacity[k])
        g_pow = g_a * a_l
        Q = np.linalg.inv(proj.cov2d[k])
        Qd = d @ Q
        g_mean2d[k] = g_pow @ Qd
        gQ = -0.5 * np.einsum("p,pi,pj->ij", g_pow, d, d)
        g_cov2d[k] = -Q @ gQ @ Q

    # chain through the EWA projection to the 3D parameters
    K, W = cam.intrinsics, cam.pose.rotation
    idx = fw.order
    if len(idx) == 0:
        return grads
    J, M, Xc = proj.J[idx], proj.M[idx], proj.Xc[idx]
    gcov = g_cov2d[idx]
    gM = np.swapaxes(J, 1, 2) @ gcov @ J
    gJ = 2.0 * gcov @ J @ M
    X, Y, Z = Xc[:, 0], Xc[:, 1], Xc[:, 2]
    gX = np.zeros((len(idx), 3))
    gX[:, 0] = gJ[:, 0, 2] * (-K.fx / Z**2) + g_mean2d[idx, 0] * K.fx / Z
    gX[:, 1] = gJ[:, 1, 2] * (-K.fy / Z**2) + g_mean2d[idx, 1] * K.fy / Z
    gX[:, 2] = (
        gJ[:, 0, 0] * (-K.fx / Z**2) + gJ[:, 0, 2] * (2 * K.fx * X / Z**3)
        + gJ[:, 1, 1] * (-K.fy / Z**2) + gJ[:, 1, 2] * (2 * K.fy * Y / Z**3)
        - g_mean2d[idx, 0] * K.fx * X / Z**2 - g_mean2d[idx, 1] * K.fy * Y / Z**2
        + g_z[idx]
    )
    grads.mu[idx] = gX @ W

    gSigma = W.T @ gM @ W
    q = cloud.rot[idx]
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    qh = q / qn
    R = quat_to_rotmat(qh)
    s = cloud.scale[idx]
    grads.scale[idx] = 2.0 * s * np.einsum("nji,njk,nki->ni", R, gSigma, R)
    gR = 2.0 * gSigma @ R * (s**2)[:, None, :]
    g_qh = np.einsum("nij,nkij->nk", gR, _rotmat_dq(qh))
    grads.rot[idx] = (g_qh - qh * np.sum(qh * g_qh, axis=1, keepdims=True)) / qn
    return grads


def render_grad(gaussians, cam: Camera, up_color, up_depth=None) -> GaussianCloud:
    """Backpropagate per-pixel ``dL/dC`` ``(H, W, 3)`` and ``dL/dDepth`` ``(H, W)``.

    Returns a :class:`GaussianCloud` whose arrays hold the gradients.
    Pixels with invalid rendered depth ignore ``up_depth``; Gaussians outside
    the clip range get zero gradients.
    """
    cloud = as_cloud(gaussians)
    fw = _forward(cloud, cam)
    return _backward(cloud, cam, fw, up_color, up_depth)


# ---------------------------------------------------------------------------
# optimization


@dataclass
class View:
    camera: Camera
    target: ImageRGB
    depth: DepthMap  # predicted (mono) depth, any scale
    valid: Mask


@dataclass
class OptimizeConfig:
    steps: int = 300
    lr_mu: float = 2e-3
    lr_scale: float = 2e-3
    lr_rot: float = 5e-3
    lr_color: float = 2e-2
    lr_opacity: float = 2e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-12
    min_scale: float = 1e-4
    divergence_threshold: float = 1e6

    def learning_rates(self) -> dict:
        return {"mu": self.lr_mu, "scale": self.lr_scale, "rot": self.lr_rot,
                "color": self.lr_color, "opacity": self.lr_opacity}


@dataclass
class OptimizeResult:
    gaussians: GaussianCloud
    trace: list  # raw total loss before each step
    smoothed: list  # running minimum of ``trace``
    breakdown: list  # per-step summed component terms


def views_loss(cloud: GaussianCloud, views, w: LossWeights, with_grad: bool = True):
    """Total loss summed over views, and optionally its parameter gradients."""
    total = 0.0
    parts_sum = {"si": 0.0, "l1": 0.0, "ssim": 0.0}
    grads = _zeros_like_cloud(cloud) if with_grad else None
    for v in views:
        fw = _forward(cloud, v.camera)
        res = _result(fw, v.camera)
        loss, parts = total_loss(res.image, v.target, res.depth, v.depth, v.valid, w)
        total += loss
        for key in parts_sum:
            parts_sum[key] += parts[key]
        if with_grad:
            g_img, g_depth = total_loss_grad(res.image, v.target, res.depth, v.depth, v.valid, w)
            g = _backward(cloud, v.camera, fw, g_img, g_depth)
            for p in GaussianCloud.PARAMS:
                getattr(grads, p)[...] += getattr(g, p)
    return total, parts_sum, grads


def optimize(gaussians, views, w: LossWeights | None = None, cfg: OptimizeConfig | None = None,
             callback=None) -> OptimizeResult:
    """Adam on the summed training objective with per-parameter step sizes.

    After each step quaternions are renormalized, scales clamped to
    ``cfg.min_scale`` and colors/opacities clipped to [0, 1].

    Raises:
        DivergenceError: loss non-finite or above ``cfg.divergence_threshold``.
    """
    if not views:
        raise DomainError("optimize needs at least one view")
    w = w or LossWeights()
    cfg = cfg or OptimizeConfig()
    cloud = as_cloud(gaussians).copy()
    lrs = cfg.learning_rates()
    m = {p: np.zeros_like(getattr(cloud, p)) for p in GaussianCloud.PARAMS}
    v = {p: np.zeros_like(getattr(cloud, p)) for p in GaussianCloud.PARAMS}
    trace, smoothed, breakdown = [], [], []

    for step in range(1, cfg.steps + 1):
        loss, parts, grads = views_loss(cloud, views, w)
        trace.append(loss)
        smoothed.append(min(loss, smoothed[-1]) if smoothed else loss)
        breakdown.append(parts)
        if not np.isfinite(loss) or loss > cfg.divergence_threshold:
            raise DivergenceError(f"loss {loss:g} at step {step} exceeds {cfg.divergence_threshold:g}", trace)
        if callback is not None:
            callback(step, loss, parts)
        for p in GaussianCloud.PARAMS:
            g = getattr(grads, p)
            m[p] = cfg.beta1 * m[p] + (1 - cfg.beta1) * g
            v[p] = cfg.beta2 * v[p] + (1 - cfg.beta2) * g * g
            mhat = m[p] / (1 - cfg.beta1**step)
            vhat = v[p] / (1 - cfg.beta2**step)
            getattr(cloud, p)[...] -= lrs[p] * mhat / (np.sqrt(vhat) + cfg.eps)
        cloud.rot /= np.linalg.norm(cloud.rot, axis=1, keepdims=True)
        np.maximum(cloud.scale, cfg.min_scale, out=cloud.scale)
        np.clip(cloud.color, 0.0, 1.0, out=cloud.color)
        np.clip(cloud.opacity, 0.0, 1.0, out=cloud.opacity)
    return OptimizeResult(cloud, trace, smoothed, breakdown)


def make_views(gaussians, cameras, masks=None, depth_scale: float = 1.0) -> list[View]:
    """Self-rendered training views (targets and predicted depth from the Gaussians)."""
    views = []
    for i, cam in enumerate(cameras):
        res = render(gaussians, cam)
        valid = masks[i] if masks is not None else Mask(res.depth.valid)
        views.append(View(cam, res.image, res.depth.scaled(depth_scale), valid))
    return views


__all__ = [
    "Camera", "Gaussian3D", "GaussianCloud", "ProjectedGaussian", "RenderResult", "View",
    "OptimizeConfig", "OptimizeResult", "covariance_from", "gaussian_density", "project_gaussian",
    "render", "render_grad", "optimize", "views_loss", "make_views", "quat_to_rotmat",
]
