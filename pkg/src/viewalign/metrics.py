"""Evaluation metrics."""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import DomainError, InsufficientDataError, NoValidPixelsError
from .geometry import DepthMap, ImageRGB, Intrinsics, Mask, Pose, bilinear_sample
from .losses import ssim  # noqa: F401  (re-exported for evaluation)
from .projection import project_pixels_masked

logger = logging.getLogger(__name__)


def _clamped(x):
    p = x.pixels if isinstance(x, ImageRGB) else np.asarray(x, dtype=np.float64)
    if p.min(initial=0.0) < 0.0 or p.max(initial=0.0) > 1.0:
        logger.warning("PSNR input outside [0, 1]; clamping")
        p = np.clip(p, 0.0, 1.0)
    return p


def psnr_masked(a, b, region: Mask | None = None) -> float:
    """PSNR over the channels of ``region`` for images in [0, 1].

    Returns ``math.inf`` when the region matches exactly.
    """
    pa, pb = _clamped(a), _clamped(b)
    if pa.shape != pb.shape:
        raise DomainError(f"image shapes differ: {pa.shape} vs {pb.shape}")
    sel = np.ones(pa.shape[:2], dtype=bool) if region is None else region.bits
    if not sel.any():
        raise NoValidPixelsError("PSNR region is empty")
    mse = float(np.mean((pa[sel] - pb[sel]) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def warp_consistency(depth: DepthMap, rel: Pose, K_src: Intrinsics, K_dst: Intrinsics, src_pixels,
                     dst_pixels) -> float:
    """Mean pixel distance between depth-projected and ground-truth matches.

    ``src_pixels`` are anchor pixels (depth is sampled there), ``dst_pixels``
    their true positions in the target view. A match projected behind the
    target camera makes the error infinite.
    """
    src = np.asarray(src_pixels, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst_pixels, dtype=np.float64).reshape(-1, 2)
    if len(src) == 0:
        raise InsufficientDataError("need at least one correspondence")
    if len(src) != len(dst):
        raise DomainError("source and target correspondence counts differ")
    d, ok = bilinear_sample(depth, src)
    if not np.all(ok):
        raise DomainError(f"{int((~ok).sum())} correspondences lack valid depth")
    p, _, front = project_pixels_masked(src, d, K_src, rel, K_dst)
    if not np.all(front):
        return math.inf
    return float(np.mean(np.linalg.norm(p - dst, axis=1)))
