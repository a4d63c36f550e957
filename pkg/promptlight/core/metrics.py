r"""Full-reference image quality metrics

PSNR over all channels and SSIM on ITU-R 601 luma with an 11x11 Gaussian window
(sigma 1.5, K1 = 0.01, K2 = 0.03, data range 1), averaged over valid windows.
"""

import math
from typing import Optional

import torch
import torch.nn.functional as F

from ..exceptions import ShapeError, ValidationError
from .interfaces import QualityMetric

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(
            "images must have equal shapes", expected=tuple(a.shape), actual=tuple(b.shape)
        )


def psnr(a: torch.Tensor, b: torch.Tensor, cap: float = PSNR_CAP) -> float:
    """10 * log10(1 / MSE), capped for identical images"""
    _check_pair(a, b)
    mse = float(torch.mean((a.double() - b.double()) ** 2))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(1.0 / mse))


def rgb_to_luma(image: torch.Tensor) -> torch.Tensor:
    """(..., 3, H, W) -> (..., 1, H, W)"""
    weights = torch.tensor(LUMA_WEIGHTS, dtype=image.dtype, device=image.device)
    return (image * weights.view(3, 1, 1)).sum(dim=-3, keepdim=True)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    kernel = torch.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = kernel / kernel.sum()
    return torch.outer(kernel, kernel)


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean local SSIM of two (3, H, W) images in [0, 1]"""
    _check_pair(a, b)
    if a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ValidationError(
            f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}", field="image"
        )
    x = a.double()
    y = b.double()
    if x.shape[-3] == 3:
        x, y = rgb_to_luma(x), rgb_to_luma(y)
    x = x.reshape(-1, 1, *x.shape[-2:])
    y = y.reshape(-1, 1, *y.shape[-2:])

    window = gaussian_window().to(x.device).view(1, 1, SSIM_WINDOW, SSIM_WINDOW)
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    mu_x = F.conv2d(x, window)
    mu_y = F.conv2d(y, window)
    sigma_xx = F.conv2d(x * x, window) - mu_x**2
    sigma_yy = F.conv2d(y * y, window) - mu_y**2
    sigma_xy = F.conv2d(x * y, window) - mu_x * mu_y

    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (sigma_xx + sigma_yy + c2)
    )
    return float(ssim_map.mean())


class MeanLuma(QualityMetric):
    """Average luma; the no-reference brightness readout of an enhancement"""

    name = "mean_luma"
    needs_reference = False

    def compute(self, enhanced: torch.Tensor, reference: Optional[torch.Tensor] = None) -> float:
        return float(rgb_to_luma(enhanced.double()).mean())
