"""Training losses with analytic gradients.

Image arguments may be :class:`ImageRGB` or plain ``(H, W, 3)`` arrays;
depth arguments :class:`DepthMap` or ``(H, W)`` arrays (non-positive or
non-finite entries of a plain array count as invalid). Gradients are
returned as plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, NoValidPixelsError
from .geometry import DepthMap, ImageRGB, Mask

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class LossWeights:
    lambda_depth: float = 0.5
    lambda_color: float = 0.8
    lambda_ssim: float = 0.2

    def __post_init__(self):
        for name in ("lambda_depth", "lambda_color", "lambda_ssim"):
            v = float(getattr(self, name))
            if not v >= 0:
                raise DomainError(f"{name} must be non-negative, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def parse(cls, text: str) -> "LossWeights":
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights must be 'depth,color,ssim'")
        return cls(*parts)


def _depth(x):
    if isinstance(x, DepthMap):
        return x.values, x.valid
    a = np.asarray(x, dtype=np.float64)
    return a, np.isfinite(a) & (a > 0)


def _pixels(x):
    return x.pixels if isinstance(x, ImageRGB) else np.asarray(x, dtype=np.float64)


def _bits(m, shape):
    if m is None:
        return np.ones(shape, dtype=bool)
    b = m.bits if isinstance(m, Mask) else np.asarray(m, dtype=bool)
    if b.shape != shape:
        raise DomainError(f"mask shape {b.shape} does not match {shape}")
    return b


# ---------------------------------------------------------------------------
# scale-invariant depth


def _log_errors(rendered, predicted, valid):
    d, vd = _depth(rendered)
    t, vt = _depth(predicted)
    if d.shape != t.shape:
        raise DomainError(f"depth shapes differ: {d.shape} vs {t.shape}")
    sel = _bits(valid, d.shape) & vd & vt
    n = int(sel.sum())
    if n == 0:
        raise NoValidPixelsError("no pixel is valid in both depth maps and the mask")
    e = np.zeros(d.shape)
    e[sel] = np.log(d[sel]) - np.log(t[sel])
    return d, e, sel, n


def si_depth_loss(rendered, predicted, valid=None) -> float:
    """Scale-invariant log-depth loss: the population variance of log errors.

    ``mean(e^2) - mean(e)^2`` with ``e = log D - log D*``. Invariant to any
    uniform scaling of either map.
    """
    _, e, sel, n = _log_errors(rendered, predicted, valid)
    es = e[sel]
    # centred form is exactly zero for constant e
    return float(np.mean((es - es.mean()) ** 2))


def si_depth_loss_grad(rendered, predicted, valid=None) -> np.ndarray:
    """Gradient of :func:`si_depth_loss` w.r.t. the rendered depth values."""
    d, e, sel, n = _log_errors(rendered, predicted, valid)
    g = np.zeros(d.shape)
    g[sel] = 2.0 / (n * d[sel]) * (e[sel] - e[sel].mean())
    return g


# ---------------------------------------------------------------------------
# photometric


def _region(a, b, region):
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DomainError(f"image shapes differ: {pa.shape} vs {pb.shape}")
    sel = _bits(region, pa.shape[:2])
    n = int(sel.sum())
    if n == 0:
        raise NoValidPixelsError("empty region")
    return pa, pb, sel, n


def l1_loss(a, b, region=None) -> float:
    """Mean absolute channel difference over ``region`` (whole image if None)."""
    pa, pb, sel, n = _region(a, b, region)
    return float(np.abs(pa[sel] - pb[sel]).sum() / (3 * n))


def l1_grad(a, b, region=None) -> np.ndarray:
    """Gradient of :func:`l1_loss` w.r.t. ``a``; sign(0) is taken as 0."""
    pa, pb, sel, n = _region(a, b, region)
    g = np.sign(pa - pb) / (3 * n)
    g[~sel] = 0.0
    return g


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


def _blur_valid(x, w):
    """Separable Gaussian filter keeping only fully covered windows."""
    r = len(w) // 2
    y = ndimage.correlate1d(x, w, axis=0, mode="constant")
    y = ndimage.correlate1d(y, w, axis=1, mode="constant")
    return y[r:-r or None, r:-r or None]


def _blur_valid_adjoint(g, w, shape):
    r = len(w) // 2
    full = np.zeros(shape)
    full[r:r + g.shape[0], r:r + g.shape[1]] = g
    y = ndimage.correlate1d(full, w, axis=0, mode="constant")
    return ndimage.correlate1d(y, w, axis=1, mode="constant")


def _ssim_parts(a, b):
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DomainError(f"image shapes differ: {pa.shape} vs {pb.shape}")
    if pa.shape[0] < SSIM_WINDOW or pa.shape[1] < SSIM_WINDOW:
        raise DomainError(f"image {pa.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    w = gaussian_window()
    parts = []
    for c in range(pa.shape[2]):
        x, y = pa[..., c], pb[..., c]
        ma, mb = _blur_valid(x, w), _blur_valid(y, w)
        maa, mbb, mab = _blur_valid(x * x, w), _blur_valid(y * y, w), _blur_valid(x * y, w)
        A1 = 2 * ma * mb + SSIM_C1
        A2 = 2 * (mab - ma * mb) + SSIM_C2
        B1 = ma * ma + mb * mb + SSIM_C1
        B2 = (maa - ma * ma) + (mbb - mb * mb) + SSIM_C2
        parts.append((x, y, ma, mb, A1, A2, B1, B2, (A1 * A2) / (B1 * B2)))
    return pa, w, parts


def ssim(a, b) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels.

    Only windows lying fully inside the image contribute.
    """
    _, _, parts = _ssim_parts(a, b)
    return float(np.mean([p[-1].mean() for p in parts]))


def ssim_grad(a, b) -> np.ndarray:
    """Gradient of :func:`ssim` w.r.t. ``a``."""
    pa, w, parts = _ssim_parts(a, b)
    g = np.zeros(pa.shape)
    C = pa.shape[2]
    for c, (x, y, ma, mb, A1, A2, B1, B2, S) in enumerate(parts):
        k = 1.0 / (C * S.size)
        # paired so each bracket is exactly zero when a == b
        d_ma = k * S * ((2 * mb / A1 - 2 * ma / B1) + (2 * ma / B2 - 2 * mb / A2))
        d_maa = -k * S / B2
        d_mab = 2 * k * S / A2
        shape = x.shape
        g[..., c] = (
            _blur_valid_adjoint(d_ma, w, shape)
            + 2 * x * _blur_valid_adjoint(d_maa, w, shape)
            + y * _blur_valid_adjoint(d_mab, w, shape)
        )
    return g


def ssim_loss(a, b) -> float:
    """``(1 - SSIM) / 2``: zero for identical images, never negative."""
    return (1.0 - ssim(a, b)) / 2.0


def ssim_loss_grad(a, b) -> np.ndarray:
    return -0.5 * ssim_grad(a, b)


# ---------------------------------------------------------------------------
# combined objective


def total_loss(rendered_img, target_img, rendered_depth, predicted_depth, valid, w: LossWeights):
    """Weighted sum of the depth, L1 and SSIM terms.

    ``valid`` restricts the L1 and depth terms; SSIM uses the whole image.
    Terms with zero weight are skipped (reported as 0).

    Returns:
        ``(total, {"si": ..., "l1": ..., "ssim": ...})`` with unweighted terms.
    """
    parts = {"si": 0.0, "l1": 0.0, "ssim": 0.0}
    if w.lambda_depth > 0:
        parts["si"] = si_depth_loss(rendered_depth, predicted_depth, valid)
    if w.lambda_color > 0:
        parts["l1"] = l1_loss(rendered_img, target_img, valid)
    if w.lambda_ssim > 0:
        parts["ssim"] = ssim_loss(rendered_img, target_img)
    total = w.lambda_depth * parts["si"] + w.lambda_color * parts["l1"] + w.lambda_ssim * parts["ssim"]
    return total, parts


def total_loss_grad(rendered_img, target_img, rendered_depth, predicted_depth, valid, w: LossWeights):
    """Gradients of :func:`total_loss` w.r.t. rendered image and depth."""
    shape = _pixels(rendered_img).shape
    g_img = np.zeros(shape)
    g_depth = np.zeros(shape[:2])
    if w.lambda_depth > 0:
        g_depth += w.lambda_depth * si_depth_loss_grad(rendered_depth, predicted_depth, valid)
    if w.lambda_color > 0:
        g_img += w.lambda_color * l1_grad(rendered_img, target_img, valid)
    if w.lambda_ssim > 0:
        g_img += w.lambda_ssim * ssim_loss_grad(rendered_img, target_img)
    return g_img, g_depth
