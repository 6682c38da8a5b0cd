"""Implicit-intrinsics / scale estimation and boundary-supervised depth completion."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, DomainError, InsufficientDataError, NoSupervisionError
from .geometry import DepthMap, Intrinsics, Mask, Pose, SparseDepthSet, bilinear_sample, pixel_grid
from .projection import mask_boundary

logger = logging.getLogger(__name__)

MIN_SAMPLES = 5
DEPTH_FLOOR = 1e-6


@dataclass
class SolverConfig:
    max_iters: int = 100
    tol: float = 1e-10
    damping_init: float = 1e-3
    use_projection_residual: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {k: d[k] for k in ("max_iters", "tol", "damping_init", "use_projection_residual") if k in d}
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "SolverConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AlignmentReport:
    intrinsics: Intrinsics
    scale: float
    residual: float  # RMS of s*D - d over the sparse set, scene units
    iterations: int
    trace: list = field(default_factory=list)
    projection_rms: float | None = None  # pixels; projection-residual mode only

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "scale": self.scale,
            "residual": self.residual,
            "iterations": self.iterations,
            "trace": list(self.trace),
            "projection_rms": self.projection_rms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentReport":
        return cls(
            Intrinsics.from_dict(d["intrinsics"]),
            float(d["scale"]),
            float(d["residual"]),
            int(d["iterations"]),
            list(d.get("trace", [])),
            d.get("projection_rms"),
        )


def levenberg_marquardt(fun, x0, cfg: SolverConfig, check_rank: bool = True):
    """Minimize ``0.5 * |r(x)|^2`` with Marquardt-scaled damping.

    ``fun(x)`` returns ``(r, J)``. Each step solves the damped problem as an
    augmented least-squares system (better conditioned than the normal
    equations). Only cost-decreasing steps are accepted, so the returned
    trace of costs is monotone non-increasing.

    With ``check_rank`` a rank-deficient initial Jacobian raises; without it
    the damped steps pick the minimum-norm update along flat directions.

    Returns:
        ``(x, trace, iterations)``.
    """
    x = np.array(x0, dtype=np.float64)
    r, J = fun(x)
    cost = 0.5 * float(r @ r)
    trace = [cost]

    sv = np.linalg.svd(J, compute_uv=False)
    if check_rank and (len(sv) < len(x) or sv[-1] <= 1e-10 * sv[0]):
        raise DegenerateGeometryError("normal equations are singular; parameters not identifiable")

    lam = cfg.damping_init
    it = 0
    while it < cfg.max_iters and cost > 0:
        it += 1
        col = np.linalg.norm(J, axis=0)
        A = np.vstack([J, np.diag(np.sqrt(lam) * col)])
        b = np.concatenate([-r, np.zeros(len(x))])
        step = np.linalg.lstsq(A, b, rcond=None)[0]
        x_new = x + step
        r_new, J_new = fun(x_new)
        cost_new = 0.5 * float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new < cost:
            rel_drop = (cost - cost_new) / cost
            x, r, J, cost = x_new, r_new, J_new, cost_new
            trace.append(cost)
            lam = max(lam / 10.0, 1e-15)
            if rel_drop < cfg.tol:
                break
        else:
            lam *= 10.0
            if lam > 1e16:
                break
    return x, trace, it


def _projection_residual(theta, p, dsd_depth, metric_depth, rel: Pose, K: Intrinsics):
    """Pixel discrepancy between the implicit and calibrated projections.

    ``theta`` = (log s, fx, fy, cx, cy) of the implicit intrinsics.
    """
    log_s, fx, fy, cx, cy = theta
    s = math.exp(log_s)
    z = s * dsd_depth
    dx = (p[:, 0] - cx) / fx
    dy = (p[:, 1] - cy) / fy
    Xt = np.stack([z * dx, z * dy, z], axis=1)

    # calibrated reference projection (constant in theta)
    Xr = np.stack(
        [metric_depth * (p[:, 0] - K.cx) / K.fx, metric_depth * (p[:, 1] - K.cy) / K.fy, metric_depth], axis=1
    )
    Yr = rel.apply(Xr)
    Y = rel.apply(Xt)
    if np.any(Y[:, 2] <= 0) or np.any(Yr[:, 2] <= 0):
        raise DomainError("correspondence projects behind the target camera")
    u = K.fx * Y[:, 0] / Y[:, 2] + K.cx
    v = K.fy * Y[:, 1] / Y[:, 2] + K.cy
    ur = K.fx * Yr[:, 0] / Yr[:, 2] + K.cx
    vr = K.fy * Yr[:, 1] / Yr[:, 2] + K.cy
    r = np.concatenate([u - ur, v - vr])

    n = len(p)
    dX = np.zeros((n, 3, 5))
    dX[:, :, 0] = Xt
    dX[:, 0, 1] = -z * dx / fx
    dX[:, 0, 3] = -z / fx
    dX[:, 1, 2] = -z * dy / fy
    dX[:, 1, 4] = -z / fy
    dY = np.einsum("ij,njk->nik", rel.rotation, dX)
    inv_z = 1.0 / Y[:, 2]
    du = K.fx * (dY[:, 0, :] * inv_z[:, None] - (Y[:, 0] * inv_z**2)[:, None] * dY[:, 2, :])
    dv = K.fy * (dY[:, 1, :] * inv_z[:, None] - (Y[:, 1] * inv_z**2)[:, None] * dY[:, 2, :])
    return r, np.concatenate([du, dv], axis=0)


def fit_implicit_intrinsics(dsd: DepthMap, sparse: SparseDepthSet, init: Intrinsics,
                            cfg: SolverConfig | None = None, rel: Pose | None = None,
                            calibrated: Intrinsics | None = None) -> AlignmentReport:
    """Align relative-scale stereo depth to sparse metric depth.

    The depth residual ``s * D(p) - d(p)`` over the sparse set fixes the
    global scale ``s`` (solved in log space). With
    ``cfg.use_projection_residual`` the implicit intrinsics are fitted too:
    the residual vector then also holds the pixel discrepancy between
    projecting ``p`` into the view related by ``rel`` through
    (implicit intrinsics, ``s * D``) and through (``calibrated``, ``d``).

    Args:
        dsd: Relative-scale dense depth, sampled bilinearly at sparse pixels.
        sparse: Metric depth samples.
        init: Starting intrinsics; returned unchanged in depth-only mode.
        rel: Anchor-to-target pose, required for the projection residual.
        calibrated: Calibrated intrinsics of the reference projection;
            defaults to ``init``.

    Raises:
        InsufficientDataError: fewer than 5 sparse samples.
        DegenerateGeometryError: singular normal equations, e.g. every
            sample at the same pixel, which ties focal length to principal
            point in the projection residual.
    """
    cfg = cfg or SolverConfig()
    if len(sparse) < MIN_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_SAMPLES} sparse samples, got {len(sparse)}")
    D, ok = bilinear_sample(dsd, sparse.pixels)
    if not np.all(ok):
        raise DomainError(f"{int((~ok).sum())} sparse samples have no valid stereo depth")
    d = sparse.depths

    if not cfg.use_projection_residual:
        def fun(theta):
            s = math.exp(theta[0])
            return s * D - d, (s * D)[:, None]

        theta, trace, iters = levenberg_marquardt(fun, np.zeros(1), cfg)
        s = math.exp(theta[0])
        K_tilde = init
        proj_rms = None
    else:
        if rel is None:
            raise DomainError("projection residual needs the relative pose")
        K = calibrated or init
        p = sparse.pixels

        def fun(theta):
            s = math.exp(theta[0])
            r_d = s * D - d
            J_d = np.zeros((len(D), 5))
            J_d[:, 0] = s * D
            r_p, J_p = _projection_residual(theta, p, D, d, rel, K)
            return np.concatenate([r_d, r_p]), np.concatenate([J_d, J_p], axis=0)

        theta0 = np.concatenate([[0.0], init.as_array()])
        theta, trace, iters = levenberg_marquardt(fun, theta0, cfg)
        s = math.exp(theta[0])
        K_tilde = Intrinsics.from_array(theta[1:])
        r_p, _ = _projection_residual(theta, p, D, d, rel, K)
        proj_rms = float(np.sqrt(np.mean(r_p**2)))

    resid = float(np.sqrt(np.mean((s * D - d) ** 2)))
    logger.debug("alignment finished: s=%.9g rms=%.3g after %d iterations", s, resid, iters)
    return AlignmentReport(K_tilde, s, resid, iters, trace, proj_rms)


# ---------------------------------------------------------------------------
# depth completion


@dataclass
class DepthCorrector:
    """Spatially varying depth correction ``exp(g) * d + offset + poly(x, y)``.

    ``poly`` is a per-axis quadratic in coordinates normalized to [-1, 1]
    over the image.
    """

    width: int
    height: int
    log_scale: float = 0.0
    offset: float = 0.0
    coef_x: tuple = (0.0, 0.0)  # linear, quadratic
    coef_y: tuple = (0.0, 0.0)

    N_PARAMS = 6

    def params(self) -> np.ndarray:
        return np.array([self.log_scale, self.offset, *self.coef_x, *self.coef_y], dtype=np.float64)

    def with_params(self, theta) -> "DepthCorrector":
        t = [float(v) for v in theta]
        return DepthCorrector(self.width, self.height, t[0], t[1], (t[2], t[3]), (t[4], t[5]))

    def normalized(self, pixels) -> tuple[np.ndarray, np.ndarray]:
        px = np.asarray(pixels, dtype=np.float64)
        hx = max((self.width - 1) / 2.0, 1.0)
        hy = max((self.height - 1) / 2.0, 1.0)
        return (px[..., 0] - (self.width - 1) / 2.0) / hx, (px[..., 1] - (self.height - 1) / 2.0) / hy

    def features(self, d, pixels) -> np.ndarray:
        """Partial derivatives of the corrected depth w.r.t. the parameters."""
        u, v = self.normalized(pixels)
        return np.stack([math.exp(self.log_scale) * d, np.ones_like(u), u, u * u, v, v * v], axis=-1)

    def __call__(self, d, pixels) -> np.ndarray:
        u, v = self.normalized(pixels)
        return (
            math.exp(self.log_scale) * np.asarray(d, dtype=np.float64)
            + self.offset
            + self.coef_x[0] * u + self.coef_x[1] * u * u
            + self.coef_y[0] * v + self.coef_y[1] * v * v
        )

    def is_identity(self, atol=1e-9) -> bool:
        return bool(np.all(np.abs(self.params()) <= atol))


@dataclass
class CompletionConfig:
    max_iters: int = 100
    tol: float = 1e-10
    damping_init: float = 1e-3


def completion_loss(theta, corrector: DepthCorrector, mono_b, dsd_b, pix_b):
    """Boundary loss and its gradient w.r.t. the corrector parameters."""
    c = corrector.with_params(theta)
    r = c(mono_b, pix_b) - dsd_b
    grad = 2.0 * (c.features(mono_b, pix_b).T @ r)
    return float(r @ r), grad


def complete_depth(mono: DepthMap, dsd: DepthMap, mask: Mask, boundary_radius: int = 2,
                   cfg: CompletionConfig | None = None):
    """Fill the masked region of ``dsd`` with corrected mono depth.

    The corrector is fitted on the squared mono/stereo mismatch over the
    ring of pixels just outside the mask, then applied inside it. The fit
    starts from the linear least-squares solution and is polished with
    Levenberg-Marquardt steps on the residual, which share the analytic
    gradient of :func:`completion_loss` but do not stall when depth along the
    ring is nearly constant (scale and offset then become almost collinear).
    Pixels outside the mask are copied from ``dsd`` untouched.

    Returns:
        ``(refined, corrector, final_loss)``.
    """
    cfg = cfg or CompletionConfig()
    if mono.shape != dsd.shape or mono.shape != mask.shape:
        raise DomainError("mono, dsd and mask dimensions differ")
    ring = mask_boundary(mask, boundary_radius).bits
    if not ring.any():
        raise NoSupervisionError("mask boundary is empty; nothing supervises the corrector")
    if not np.all(dsd.valid[ring]):
        raise DomainError("stereo depth must be valid on the mask boundary")
    if not np.all(mono.valid[ring | mask.bits]):
        raise DomainError("mono depth must be valid on the mask and its boundary")

    H, W = mono.shape
    grid = pixel_grid(W, H)
    pix_b = grid[ring]
    mono_b = mono.values[ring]
    dsd_b = dsd.values[ring]

    corrector = DepthCorrector(W, H)

    def fun(theta):
        c = corrector.with_params(theta)
        return c(mono_b, pix_b) - dsd_b, c.features(mono_b, pix_b)

    # F is linear in exp(g), so a linear least-squares solve gives an exact
    # start whenever the fitted scale is positive.
    theta0 = corrector.params()
    lin = np.linalg.lstsq(corrector.features(mono_b, pix_b), dsd_b, rcond=None)[0]
    if lin[0] > 0:
        theta0 = np.concatenate([[math.log(lin[0])], lin[1:]])
    solver = SolverConfig(cfg.max_iters, cfg.tol, cfg.damping_init)
    # collinear features (e.g. constant depth along the ring) leave several
    # exact fits; any of them is acceptable, so no rank check here
    theta, _, _ = levenberg_marquardt(fun, theta0, solver, check_rank=False)
    corrector = corrector.with_params(theta)
    final, _ = completion_loss(theta, corrector, mono_b, dsd_b, pix_b)

    inside = mask.bits
    values = np.array(dsd.values)
    corrected = np.maximum(corrector(mono.values[inside], grid[inside]), DEPTH_FLOOR)
    values[inside] = corrected
    valid = np.where(inside, mono.valid, dsd.valid)
    refined = DepthMap(values, valid, dsd.convention)
    return refined, corrector, final


def boundary_loss_uncorrected(mono: DepthMap, dsd: DepthMap, mask: Mask, boundary_radius: int = 2) -> float:
    """Boundary loss with the corrector switched off (identity)."""
    ring = mask_boundary(mask, boundary_radius).bits
    r = mono.values[ring] - dsd.values[ring]
    return float(r @ r)
