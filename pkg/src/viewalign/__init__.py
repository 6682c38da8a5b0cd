"""Multi-view depth alignment, forward warping and a toy Gaussian-splat optimizer."""

from .alignment import (
    AlignmentReport, CompletionConfig, DepthCorrector, SolverConfig, complete_depth, fit_implicit_intrinsics,
)
from .errors import (
    BehindCameraError, DegenerateGeometryError, DivergenceError, DomainError, InsufficientDataError,
    NoSupervisionError, NoValidPixelsError, ParseError, ViewAlignError,
)
from .geometry import (
    Camera, DepthConvention, DepthMap, ImageRGB, Intrinsics, Mask, Pose, SparseDepthSet, lift, pose_compose,
    pose_inverse, relative_pose, reproject,
)
from .losses import LossWeights, l1_loss, si_depth_loss, ssim, total_loss
from .metrics import psnr_masked, warp_consistency
from .projection import mask_boundary, project_pixel, warp_image
from .splat import Gaussian3D, GaussianCloud, optimize, render, render_grad

__version__ = "0.1.0"
