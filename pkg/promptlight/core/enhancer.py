"""
Retinex-style enhancement network: estimate an illumination map, divide it out
"""

from typing import Dict, List

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import ShapeError, ValidationError


class EnhancerConfig(BaseModel):
    """Architecture of the illumination U-Net"""

    model_config = ConfigDict(extra="forbid")

    depth: int = Field(default=4, ge=1, le=6, description="encoder/decoder levels")
    base_channels: int = Field(default=32, ge=4)
    illum_floor: float = Field(
        default=0.01, gt=0.0, lt=1.0, description="lower bound of the illumination map"
    )
    init_bias: float = Field(
        default=5.0, description="head bias; large values start near the identity"
    )


class DoubleConv(nn.Module):
    """(conv => LeakyReLU) * 2"""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block(x)


class Up(nn.Module):
    """Bilinear upsample, concatenate the skip, DoubleConv"""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.reduce = nn.Conv2d(in_channels, skip_channels, kernel_size=1)
        self.conv = DoubleConv(skip_channels * 2, out_channels)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        return self.conv(torch.cat([skip, self.reduce(x)], dim=1))


class EnhancerNet(nn.Module):
    """
    U-Net mapping a backlit image to a one-channel illumination map.

    The head squashes onto [illum_floor, 1], so the composed output never
    darkens a pixel and the gain is bounded by 1 / illum_floor.
    """

    def __init__(self, config: EnhancerConfig = None):
        super().__init__()
        self.config = config or EnhancerConfig()
        channels = [self.config.base_channels * 2**level for level in range(self.config.depth + 1)]

        self.inc = DoubleConv(3, channels[0])
        self.downs = nn.ModuleList(
            [DoubleConv(channels[i], channels[i + 1]) for i in range(self.config.depth)]
        )
        self.ups = nn.ModuleList(
            [
                Up(channels[i + 1], channels[i], channels[i])
                for i in reversed(range(self.config.depth))
            ]
        )
        self.head = nn.Conv2d(channels[0], 1, kernel_size=1)
        nn.init.normal_(self.head.weight, std=1e-3)
        nn.init.constant_(self.head.bias, self.config.init_bias)

    @property
    def multiple(self) -> int:
        return 2**self.config.depth

    def architecture(self) -> Dict:
        return self.config.model_dump()

    def _pad(self, x: torch.Tensor):
        height, width = x.shape[-2:]
        pad_h = (-height) % self.multiple
        pad_w = (-width) % self.multiple
        if pad_h == 0 and pad_w == 0:
            return x, (height, width)
        # reflect needs the pad to be smaller than the side
        mode = "reflect" if pad_h < height and pad_w < width else "replicate"
        return F.pad(x, (0, pad_w, 0, pad_h), mode=mode), (height, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Illumination map (B, 1, H, W) in [illum_floor, 1]"""
        padded, (height, width) = self._pad(x)
        skips: List[torch.Tensor] = []
        h = self.inc(padded)
        for down in self.downs:
            skips.append(h)
            h = down(F.max_pool2d(h, 2))
        for up in self.ups:
            h = up(h, skips.pop())
        floor = self.config.illum_floor
        illum = floor + (1.0 - floor) * torch.sigmoid(self.head(h))
        return illum[..., :height, :width]


def _as_batch(image: torch.Tensor) -> torch.Tensor:
    if image.dim() == 3:
        image = image.unsqueeze(0)
    if image.dim() != 4 or image.shape[1] != 3:
        raise ShapeError(
            "images must be (B, 3, H, W) or (3, H, W)",
            expected="(B, 3, H, W)",
            actual=tuple(image.shape),
        )
    if torch.isnan(image).any():
        raise ValidationError("input contains NaN pixels", field="input")
    return image


def estimate_illumination(net: EnhancerNet, image: torch.Tensor) -> torch.Tensor:
    squeeze = image.dim() == 3
    illum = net(_as_batch(image))
    return illum[0] if squeeze else illum


def compose(image: torch.Tensor, illum: torch.Tensor) -> torch.Tensor:
    """I_b / I_i broadcast over channels, clamped to [0, 1]"""
    if image.shape[-2:] != illum.shape[-2:] or illum.shape[-3] != 1:
        raise ShapeError(
            "illumination map must be one channel of the image size",
            expected=(1,) + tuple(image.shape[-2:]),
            actual=tuple(illum.shape[-3:]),
        )
    return (image / illum).clamp(0.0, 1.0)


def enhance(net: EnhancerNet, image: torch.Tensor) -> torch.Tensor:
    return compose(image, estimate_illumination(net, image))
