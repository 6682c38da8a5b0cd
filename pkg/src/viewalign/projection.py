"""Depth-based anchor-to-target projection and forward warping."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import BehindCameraError, DomainError
from .geometry import DepthMap, ImageRGB, Intrinsics, Mask, Pose, lift, pixel_grid, reproject

# z-buffer entries closer than this are treated as a tie
ZBUF_TIE_EPS = 1e-12


def project_pixel(p, depth, K_src: Intrinsics, rel: Pose, K_dst: Intrinsics):
    """Map anchor pixel(s) ``p`` with depth ``depth`` into the target view.

    Lifts with ``K_src``, applies ``rel`` and reprojects with ``K_dst``.
    Passing implicit intrinsics as ``K_src`` (and relative-scale depth)
    gives the implicit-intrinsics variant of the same mapping.

    Returns:
        ``(p_target, z_target)``.

    Raises:
        BehindCameraError: the transformed point has z <= 0; drop the pixel.
    """
    X = rel.apply(lift(p, depth, K_src))
    return reproject(X, K_dst)


def project_pixels_masked(p, depth, K_src: Intrinsics, rel: Pose, K_dst: Intrinsics):
    """Batch version of :func:`project_pixel` that reports instead of raising.

    Returns ``(p_target (N, 2), z_target (N,), ok (N,))``; entries with
    ``ok`` false landed behind the target camera and hold NaN.
    """
    X = rel.apply(lift(p, depth, K_src))
    z = X[:, 2]
    ok = z > 0
    safe_z = np.where(ok, z, 1.0)
    u = np.where(ok, K_dst.fx * X[:, 0] / safe_z + K_dst.cx, np.nan)
    v = np.where(ok, K_dst.fy * X[:, 1] / safe_z + K_dst.cy, np.nan)
    return np.stack([u, v], axis=-1), np.where(ok, z, np.nan), ok


def _round_half_up(x):
    return np.floor(x + 0.5).astype(np.int64)


def warp_image(anchor: ImageRGB, depth: DepthMap, rel: Pose, K_src: Intrinsics, K_dst: Intrinsics,
               out_shape=None):
    """Forward-splat ``anchor`` into the target view through ``depth``.

    Each valid anchor pixel lands on the nearest target pixel. Collisions go
    to the smallest target z; candidates within ``ZBUF_TIE_EPS`` of the
    minimum are broken by the lowest row-major source index.

    Args:
        out_shape: ``(H, W)`` of the target; defaults to the anchor size.

    Returns:
        ``(warped, holes, zbuf)``: the warped image (black in holes), the
        mask of target pixels that received nothing, and the winning
        target-frame z per pixel.
    """
    if anchor.shape != depth.shape:
        raise DomainError(f"anchor {anchor.shape} and depth {depth.shape} dimensions differ")
    H, W = out_shape if out_shape is not None else anchor.shape

    src_idx = np.flatnonzero(depth.valid.ravel())
    grid = pixel_grid(anchor.width, anchor.height).reshape(-1, 2)[src_idx]
    d = depth.values.ravel()[src_idx]

    warped = np.zeros((H, W, 3))
    zbuf = np.zeros((H, W))
    hit = np.zeros(H * W, dtype=bool)
    if len(src_idx):
        pt, zt, ok = project_pixels_masked(grid, d, K_src, rel, K_dst)
        ix = _round_half_up(np.where(ok, pt[:, 0], -1.0))
        iy = _round_half_up(np.where(ok, pt[:, 1], -1.0))
        ok &= (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
        tgt = (iy * W + ix)[ok]
        src = src_idx[ok]
        z = zt[ok]

        zmin = np.full(H * W, np.inf)
        np.minimum.at(zmin, tgt, z)
        contender = z <= zmin[tgt] + ZBUF_TIE_EPS
        winner = np.full(H * W, np.iinfo(np.int64).max)
        np.minimum.at(winner, tgt[contender], src[contender])

        hit[tgt] = True
        flat_px = anchor.pixels.reshape(-1, 3)
        w_src = winner[hit]
        warped.reshape(-1, 3)[hit] = flat_px[w_src]
        # the winner's own z, which may differ from zmin by < ZBUF_TIE_EPS
        z_of_src = np.zeros(anchor.width * anchor.height)
        z_of_src[src] = z
        zbuf.ravel()[hit] = z_of_src[w_src]

    holes = ~hit.reshape(H, W)
    return ImageRGB(warped), Mask(holes), DepthMap(zbuf, ~holes, depth.convention)


def composite(warped: ImageRGB, holes: Mask, target: ImageRGB, region: Mask) -> ImageRGB:
    """Paste warped content into ``target`` inside ``region`` where it exists.

    Hole pixels and everything outside ``region`` keep the target's original
    content.
    """
    take = region.bits & ~holes.bits
    out = np.where(take[..., None], warped.pixels, target.pixels)
    return ImageRGB(out)


def mask_boundary(m: Mask, radius: int = 1) -> Mask:
    """Pixels outside ``m`` within Chebyshev distance ``radius`` of it."""
    if radius < 1:
        raise DomainError("radius must be >= 1")
    if not m.bits.any():
        return Mask(np.zeros_like(m.bits))
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    grown = ndimage.binary_dilation(m.bits, structure=structure)
    return Mask(grown & ~m.bits)
