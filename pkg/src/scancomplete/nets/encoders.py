"""3D convolutional voxel encoders emitting a multiscale feature pyramid.

Layer stack (k = base channels, with feature taps interleaved):
tap0, conv-bn(k), tap1, pool, double(2k), double(2k), tap2, pool,
double(4k), double(4k), tap3, pool, double(8k), tap4, pool,
double(8k), double(8k), tap5.
"""

from dataclasses import dataclass

import torch
from torch import nn

from .config import EncoderConfig


@dataclass
class FeaturePyramid:
    """Ordered multiscale feature volumes, finest first.

    levels[i] has shape (B, channels[i], R_i, R_i, R_i) with resolutions
    strictly halving after each pooled stage.
    """

    levels: list
    displacement: float

    def __post_init__(self):
        if not self.levels:
            raise ValueError("pyramid must have at least one level")
        res = [lv.shape[-1] for lv in self.levels]
        for a, b in zip(res[1:], res[2:]):
            if b * 2 != a:
                raise ValueError(f"level resolutions must halve, got {res}")

    @property
    def resolutions(self):
        return tuple(lv.shape[-1] for lv in self.levels)

    @property
    def channels(self):
        return tuple(lv.shape[1] for lv in self.levels)

    @property
    def batch_size(self):
        return self.levels[0].shape[0]


class ConvBNBlock(nn.Module):
    """Conv3D-ReLU-BatchNorm."""

    def __init__(self, in_ch, out_ch, kernel_size=3):
        super().__init__()
        pad = kernel_size // 2
        self.conv = nn.Conv3d(in_ch, out_ch, kernel_size, padding=pad)
        self.bn = nn.BatchNorm3d(out_ch)

    def forward(self, x):
        return self.bn(torch.relu(self.conv(x)))


class DoubleConvBlock(nn.Module):
    """Two Conv3D-ReLU blocks followed by one BatchNorm."""

    def __init__(self, in_ch, out_ch, kernel_size=3):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv3d(in_ch, out_ch, kernel_size, padding=pad)
        self.conv2 = nn.Conv3d(out_ch, out_ch, kernel_size, padding=pad)
        self.bn = nn.BatchNorm3d(out_ch)

    def forward(self, x):
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        return self.bn(x)


class VoxelEncoder(nn.Module):
    """Encoder over an N^3 voxel volume; forward returns a FeaturePyramid."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        k = config.kernel_size
        self.stage1 = ConvBNBlock(config.in_channels, b, k)
        self.pool = nn.MaxPool3d(2)
        self.stage2 = nn.Sequential(DoubleConvBlock(b, 2 * b, k), DoubleConvBlock(2 * b, 2 * b, k))
        self.stage3 = nn.Sequential(DoubleConvBlock(2 * b, 4 * b, k), DoubleConvBlock(4 * b, 4 * b, k))
        self.stage4 = DoubleConvBlock(4 * b, 8 * b, k)
        self.stage5 = nn.Sequential(DoubleConvBlock(8 * b, 8 * b, k), DoubleConvBlock(8 * b, 8 * b, k))

    def forward(self, x):
        if x.dim() != 5:
            raise ValueError("expected (B, C, N, N, N) input")
        n = x.shape[-1]
        if n != self.config.resolution:
            raise ValueError(
                f"input resolution {n} does not match configured {self.config.resolution}")
        if x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"input channels {x.shape[1]} do not match configured {self.config.in_channels}")
        f0 = x
        f1 = self.stage1(f0)
        f2 = self.stage2(self.pool(f1))
        f3 = self.stage3(self.pool(f2))
        f4 = self.stage4(self.pool(f3))
        f5 = self.stage5(self.pool(f4))
        return FeaturePyramid(levels=[f0, f1, f2, f3, f4, f5],
                              displacement=self.config.displacement)
