"""
Unit tests for PSNR, SSIM and the brightness readout
"""

import math

import numpy as np
import pytest
import torch

from promptlight.core.metrics import (PSNR_CAP, MeanLuma, gaussian_window,
                                      psnr, rgb_to_luma, ssim)
from promptlight.exceptions import ShapeError, ValidationError


def numpy_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Window-by-window SSIM on single-channel arrays"""
    size, sigma = 11, 1.5
    coords = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2 * sigma**2))
    g /= g.sum()
    window = np.outer(g, g)
    c1, c2 = 0.01**2, 0.03**2
    values = []
    for top in range(a.shape[0] - size + 1):
        for left in range(a.shape[1] - size + 1):
            pa = a[top : top + size, left : left + size]
            pb = b[top : top + size, left : left + size]
            mu_a = (window * pa).sum()
            mu_b = (window * pb).sum()
            var_a = (window * pa * pa).sum() - mu_a**2
            var_b = (window * pb * pb).sum() - mu_b**2
            cov = (window * pa * pb).sum() - mu_a * mu_b
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


@pytest.mark.unit
class TestPsnr:
    """Test peak signal to noise ratio."""

    def test_identical_is_capped(self):
        """Test the cap for identical images."""
        image = torch.rand(3, 8, 8)
        assert psnr(image, image.clone()) == PSNR_CAP == 100.0

    def test_quarter_mse(self):
        """Test 0 vs 0.5 everywhere."""
        value = psnr(torch.zeros(3, 4, 4), torch.full((3, 4, 4), 0.5))
        assert value == pytest.approx(6.0206, abs=1e-4)

    def test_mse_oracle(self):
        """Test a random pair against numpy."""
        rng = np.random.default_rng(2)
        a, b = rng.random((3, 16, 16)), rng.random((3, 16, 16))
        expected = 10.0 * math.log10(1.0 / np.mean((a - b) ** 2))
        assert psnr(torch.from_numpy(a), torch.from_numpy(b)) == pytest.approx(expected, abs=1e-9)

    def test_shape_mismatch(self):
        """Test unequal shapes."""
        with pytest.raises(ShapeError):
            psnr(torch.zeros(3, 4, 4), torch.zeros(3, 4, 5))


@pytest.mark.unit
class TestSsim:
    """Test structural similarity."""

    def test_identical_is_one(self):
        """Test SSIM of an image with itself."""
        image = torch.rand(3, 24, 20, generator=torch.Generator().manual_seed(1))
        assert ssim(image, image.clone()) == pytest.approx(1.0, abs=1e-12)

    def test_inverse_checkerboard_is_negative(self):
        """Test a binary pattern against its inverse."""
        board = torch.from_numpy((np.indices((16, 16)).sum(axis=0) % 2).astype(np.float64))
        image = board.expand(3, 16, 16)
        assert ssim(image, 1.0 - image) < 0.0

    def test_symmetric(self):
        """Test SSIM(a, b) = SSIM(b, a)."""
        generator = torch.Generator().manual_seed(3)
        a, b = torch.rand(3, 16, 16, generator=generator), torch.rand(3, 16, 16, generator=generator)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small(self):
        """Test images below the window size."""
        with pytest.raises(ValidationError):
            ssim(torch.rand(3, 10, 10), torch.rand(3, 10, 10))

    def test_numpy_oracle(self):
        """Test a 12x13 luma pair against a direct window loop."""
        rng = np.random.default_rng(5)
        a, b = rng.random((3, 12, 13)), rng.random((3, 12, 13))
        weights = np.array([0.299, 0.587, 0.114])[:, None, None]
        expected = numpy_ssim((a * weights).sum(axis=0), (b * weights).sum(axis=0))
        assert ssim(torch.from_numpy(a), torch.from_numpy(b)) == pytest.approx(expected, abs=1e-9)

    def test_window_sums_to_one(self):
        """Test the Gaussian window."""
        window = gaussian_window()
        assert window.shape == (11, 11)
        assert float(window.sum()) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.unit
class TestMeanLuma:
    """Test the no-reference brightness metric."""

    def test_gray_value(self):
        """Test a constant gray image."""
        assert MeanLuma().compute(torch.full((3, 5, 5), 0.25)) == pytest.approx(0.25, abs=1e-9)

    def test_luma_weights(self):
        """Test pure red."""
        red = torch.zeros(3, 2, 2)
        red[0] = 1.0
        assert float(rgb_to_luma(red).mean()) == pytest.approx(0.299, abs=1e-6)
        assert MeanLuma.needs_reference is False
