"""Partial convolutions, mask updates, and the inpainting U-Net."""

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


def partial_conv2d(window_values, weights, bias, mask_window):
    """Single-window partial convolution.

    a = w^T (A (.) m) * sum(1)/sum(m) + b when sum(m) > 0, else 0.
    `window_values` and `weights` share a shape whose trailing two dims are
    the window; `mask_window` is the (k, k) binary mask.
    """
    values = np.asarray(window_values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    mask = np.asarray(mask_window, dtype=np.float64)
    msum = mask.sum()
    if msum <= 0:
        return 0.0
    scale = mask.size / msum
    return float((weights * (values * mask)).sum() * scale + bias)


def update_mask(mask_window):
    """Output location is unmasked iff any window entry is unmasked."""
    return 1 if np.asarray(mask_window).sum() > 0 else 0


class PartialConv2dLayer(nn.Module):
    """Convolution renormalized over unmasked pixels (single-channel mask).

    forward(x, mask) -> (features, updated mask); locations whose window is
    fully masked output exactly 0. With `standard=True` the layer is a plain
    convolution and the mask passes through unchanged.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, standard=False):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel extent must be odd")
        padding = kernel_size // 2
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride, padding, bias=True)
        self.stride = stride
        self.padding = padding
        self.kernel_size = kernel_size
        self.standard = standard
        self.register_buffer("window_ones",
                             torch.ones(1, 1, kernel_size, kernel_size), persistent=False)

    def forward(self, x, mask):
        if self.standard:
            out = self.conv(x)
            new_mask = F.max_pool2d(mask, self.stride, self.stride) if self.stride > 1 else mask
            return out, new_mask
        with torch.no_grad():
            kernel = self.window_ones.to(mask.dtype)
            msum = F.conv2d(mask, kernel, None, self.stride, self.padding)
            # windows crossing the image border count only in-bounds texels,
            # so an all-ones mask scales by exactly 1 everywhere
            window = F.conv2d(torch.ones_like(mask), kernel, None,
                              self.stride, self.padding)
            valid = msum > 0
            scale = torch.where(valid, window / msum.clamp(min=1e-12),
                                torch.zeros_like(msum))
        raw = F.conv2d(x * mask, self.conv.weight, None, self.stride, self.padding)
        bias = self.conv.bias.view(1, -1, 1, 1)
        out = torch.where(valid, raw * scale + bias, torch.zeros_like(raw))
        return out, valid.to(mask.dtype)


def depth_for_resolution(resolution):
    """U-Net depth proportional to atlas size: 7 at 2048, bottleneck ~16 px."""
    return max(2, int(round(math.log2(resolution))) - 4)


def background_pyramid(background, depth):
    """Resolution-matched background masks for each encoder level.

    The full-resolution mask is downsampled by 2x2 window maxima only (the
    do-nothing propagation): its footprint is matched to each level without
    being grown by convolution updates.
    """
    if isinstance(background, np.ndarray):
        background = torch.from_numpy(background.astype(np.float32))
    mb = background.to(torch.float32)
    if mb.dim() == 2:
        mb = mb[None, None]
    pyramid = [mb]
    for _ in range(depth):
        mb = F.max_pool2d(mb, 2, 2)
        pyramid.append(mb)
    return pyramid


class _EncoderBlock(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, use_bn, standard):
        super().__init__()
        self.pconv = PartialConv2dLayer(in_ch, out_ch, kernel, stride=2, standard=standard)
        self.bn = nn.BatchNorm2d(out_ch) if use_bn else None

    def forward(self, x, mask):
        x, mask = self.pconv(x, mask)
        if self.bn is not None:
            x = self.bn(x)
        return torch.relu(x), mask


class _DecoderBlock(nn.Module):
    def __init__(self, in_ch, out_ch, use_bn, standard, final=False):
        super().__init__()
        self.pconv = PartialConv2dLayer(in_ch, out_ch, 3, stride=1, standard=standard)
        self.bn = nn.BatchNorm2d(out_ch) if use_bn and not final else None
        self.final = final

    def forward(self, x, mask):
        x, mask = self.pconv(x, mask)
        if self.bn is not None:
            x = self.bn(x)
        if not self.final:
            x = F.leaky_relu(x, 0.2)
        return x, mask


class PartialConvUNet(nn.Module):
    """Encoder-decoder with skip connections; every conv is a partial conv.

    The background mask is injected at each resolution by multiplying it
    into the propagated mask before every convolution. `mode` is "partial"
    (default) or "standard_concat" (ablation: plain convolutions over the
    image concatenated with its mask, no renormalization).
    """

    KERNELS = (7, 5, 3, 3, 3, 3, 3)

    def __init__(self, depth=4, base_channels=64, channel_cap=512,
                 in_channels=3, mode="partial"):
        super().__init__()
        if mode not in ("partial", "standard_concat"):
            raise ValueError(f"unknown mode {mode!r}")
        self.depth = depth
        self.mode = mode
        standard = mode == "standard_concat"
        first_in = in_channels + 1 if standard else in_channels
        chans = [min(base_channels * 2 ** i, channel_cap) for i in range(depth)]
        self.encoder = nn.ModuleList()
        for i in range(depth):
            in_ch = first_in if i == 0 else chans[i - 1]
            kernel = self.KERNELS[min(i, len(self.KERNELS) - 1)]
            self.encoder.append(_EncoderBlock(in_ch, chans[i], kernel, use_bn=i > 0,
                                              standard=standard))
        self.decoder = nn.ModuleList()
        for i in range(depth - 1, 0, -1):
            self.decoder.append(_DecoderBlock(chans[i] + chans[i - 1], chans[i - 1],
                                              use_bn=True, standard=standard))
        self.decoder.append(_DecoderBlock(chans[0] + first_in, in_channels,
                                          use_bn=False, standard=standard, final=True))
        self.channels = chans

    def set_standard(self, standard):
        """Flip every layer's standard-vs-partial toggle (ablation hook)."""
        for m in self.modules():
            if isinstance(m, PartialConv2dLayer):
                m.standard = standard
        return self

    def forward(self, image, mask, background=None):
        """image (B, 3, H, W); mask/background (B, 1, H, W) with 1 = valid.

        Returns (output image (B, 3, H, W), final mask).
        """
        h, w = image.shape[-2:]
        if h % (2 ** self.depth) or w % (2 ** self.depth):
            raise ValueError(f"resolution {h}x{w} not divisible by 2^{self.depth}")
        if background is None:
            background = torch.ones_like(mask)
        bg = [m.to(image.dtype) for m in background_pyramid(background, self.depth)]

        x = image
        m = mask.to(image.dtype)
        if self.mode == "standard_concat":
            x = torch.cat([x, m * bg[0]], dim=1)
        skips = [(x, m)]
        for i, block in enumerate(self.encoder):
            x, m = block(x, m * bg[i])
            skips.append((x, m))

        x, m = skips[-1]
        for j, block in enumerate(self.decoder):
            level = self.depth - 1 - j  # resolution level we upsample into
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            m = F.interpolate(m, scale_factor=2, mode="nearest")
            skip_x, skip_m = skips[level]
            x = torch.cat([x, skip_x], dim=1)
            m = torch.maximum(m, skip_m)
            x, m = block(x, m * bg[level])
        return x, m


def inpaint_forward(coarse_atlas, coarse_mask, background, network):
    """Run the inpainting network on one atlas (numpy in, numpy out).

    coarse_atlas (H, W, 3) float; coarse_mask / background (H, W) binary.
    """
    dtype = next(network.parameters()).dtype
    img = torch.from_numpy(np.asarray(coarse_atlas, dtype=np.float32)).to(dtype)
    img = img.permute(2, 0, 1)[None]
    m = torch.from_numpy(np.asarray(coarse_mask, dtype=np.float32)).to(dtype)[None, None]
    b = torch.from_numpy(np.asarray(background, dtype=np.float32)).to(dtype)[None, None]
    network.eval()
    with torch.no_grad():
        out, _ = network(img, m, b)
    return out[0].permute(1, 2, 0).numpy().astype(np.float32)
