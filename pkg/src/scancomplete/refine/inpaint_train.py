"""Inpainting network training: hole/valid, perceptual, style, TV losses."""

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .pconv import PartialConvUNet, depth_for_resolution

log = logging.getLogger(__name__)


@dataclass
class InpaintLossWeights:
    valid: float = 1.0
    hole: float = 6.0
    perceptual: float = 0.05
    style: float = 120.0
    tv: float = 0.1


@dataclass
class InpaintConfig:
    iterations: int = 330000
    learning_rate: float = 1e-4
    batch_size: int = 1
    atlas_resolution: int = 2048
    base_channels: int = 64
    channel_cap: int = 512
    depth: int | None = None       # derived from atlas resolution when None
    mode: str = "partial"          # or "standard_concat" (ablation)
    seed: int = 0
    feature_seed: int = 0
    weights: InpaintLossWeights = field(default_factory=InpaintLossWeights)
    log_every: int = 100

    def resolved_depth(self):
        return self.depth if self.depth is not None else depth_for_resolution(self.atlas_resolution)


class FixedFeatureExtractor(nn.Module):
    """Frozen randomly-initialized conv stack for perceptual/style terms.

    A stand-in for a large pretrained backbone: random features still give
    a usable training signal, and the frozen seed keeps runs reproducible.
    """

    def __init__(self, seed=0, channels=(16, 32, 64)):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        layers = []
        in_ch = 3
        for out_ch in channels:
            conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  / (3.0 * in_ch ** 0.5))
                conv.bias.zero_()
            layers.append(conv)
            in_ch = out_ch
        self.convs = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        feats = []
        for conv in self.convs:
            x = torch.relu(conv(x))
            feats.append(x)
        return feats


def _gram(feat):
    b, c, h, w = feat.shape
    f = feat.reshape(b, c, h * w)
    return f @ f.transpose(1, 2) / (c * h * w)


def inpaint_losses(out, target, coarse_mask, background, extractor,
                   weights=InpaintLossWeights()):
    """Loss components for one batch; every tensor is (B, C/1, H, W).

    valid = coarse_mask * background, hole = (1 - coarse_mask) * background;
    the composited image takes ground truth on valid and background texels.
    """
    valid = coarse_mask * background
    hole = (1.0 - coarse_mask) * background
    eps = 1e-8
    l_valid = (valid * (out - target)).abs().sum() / (valid.sum() * out.shape[1] + eps)
    l_hole = (hole * (out - target)).abs().sum() / (hole.sum() * out.shape[1] + eps)

    comp = valid * target + hole * out + (1.0 - background) * target

    l_perc = out.new_zeros(())
    l_style = out.new_zeros(())
    if weights.perceptual or weights.style:
        f_out = extractor(out)
        f_comp = extractor(comp)
        f_gt = extractor(target)
        for fo, fc, fg in zip(f_out, f_comp, f_gt):
            l_perc = l_perc + (fo - fg).abs().mean() + (fc - fg).abs().mean()
            g_gt = _gram(fg)
            l_style = l_style + (_gram(fo) - g_gt).abs().mean() + (_gram(fc) - g_gt).abs().mean()

    # total variation of the composited image over the (1-px dilated) holes
    region = F.max_pool2d(hole, 3, 1, 1)
    dh = (comp[..., :, 1:] - comp[..., :, :-1]).abs() * torch.minimum(region[..., :, 1:], region[..., :, :-1])
    dv = (comp[..., 1:, :] - comp[..., :-1, :]).abs() * torch.minimum(region[..., 1:, :], region[..., :-1, :])
    denom = region.sum() * out.shape[1] + eps
    l_tv = (dh.sum() + dv.sum()) / denom

    total = (weights.valid * l_valid + weights.hole * l_hole
             + weights.perceptual * l_perc + weights.style * l_style + weights.tv * l_tv)
    return {"total": total, "valid": l_valid, "hole": l_hole,
            "perceptual": l_perc, "style": l_style, "tv": l_tv}


def _to_tensors(pair, dtype):
    coarse, mask, background, target = pair
    img = torch.from_numpy(np.asarray(coarse, dtype=np.float32)).to(dtype).permute(2, 0, 1)
    m = torch.from_numpy(np.asarray(mask, dtype=np.float32)).to(dtype)[None]
    b = torch.from_numpy(np.asarray(background, dtype=np.float32)).to(dtype)[None]
    t = torch.from_numpy(np.asarray(target, dtype=np.float32)).to(dtype).permute(2, 0, 1)
    return img, m, b, t


def train_inpainter(pairs, cfg, network=None, out_dir=None):
    """Optimize the inpainting U-Net over (A_c, M_c, M_b, target) tuples.

    Returns (network, history dict with per-component loss curves). Writes
    `inpaint_loss.csv` and `inpainter.pt` when out_dir is given; non-finite
    losses abort.
    """
    if not pairs:
        raise ValueError("need at least one training pair")
    torch.manual_seed(cfg.seed)
    if network is None:
        network = PartialConvUNet(depth=cfg.resolved_depth(),
                                  base_channels=cfg.base_channels,
                                  channel_cap=cfg.channel_cap,
                                  mode=cfg.mode)
    extractor = FixedFeatureExtractor(seed=cfg.feature_seed)
    dtype = next(network.parameters()).dtype
    data = [_to_tensors(p, dtype) for p in pairs]
    optimizer = torch.optim.Adam(network.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)

    history = {k: [] for k in ("iteration", "total", "valid", "hole", "perceptual", "style", "tv")}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    network.train()
    order = []
    for it in range(cfg.iterations):
        batch_idx = []
        for _ in range(cfg.batch_size):
            if not order:
                order = list(rng.permutation(len(data)))
            batch_idx.append(order.pop())
        imgs = torch.stack([data[i][0] for i in batch_idx])
        masks = torch.stack([data[i][1] for i in batch_idx])
        bgs = torch.stack([data[i][2] for i in batch_idx])
        targets = torch.stack([data[i][3] for i in batch_idx])

        optimizer.zero_grad()
        out, _ = network(imgs, masks, bgs)
        losses = inpaint_losses(out, targets, masks, bgs, extractor, cfg.weights)
        total = losses["total"]
        if not torch.isfinite(total):
            raise RuntimeError(f"non-finite inpainting loss at iteration {it}")
        total.backward()
        optimizer.step()

        if (it + 1) % cfg.log_every == 0 or it == 0 or it + 1 == cfg.iterations:
            history["iteration"].append(it + 1)
            for k in ("total", "valid", "hole", "perceptual", "style", "tv"):
                history[k].append(losses[k].detach().item())
            log.info("iter %d total %.5f hole %.5f valid %.5f", it + 1,
                     history["total"][-1], history["hole"][-1], history["valid"][-1])
    network.eval()
    if out_dir:
        with open(os.path.join(out_dir, "inpaint_loss.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            keys = ["iteration", "total", "valid", "hole", "perceptual", "style", "tv"]
            writer.writerow(keys)
            for row in zip(*(history[k] for k in keys)):
                writer.writerow([row[0]] + [f"{v:.8f}" for v in row[1:]])
        save_inpainter(os.path.join(out_dir, "inpainter.pt"), network, cfg)
    return network, history


def save_inpainter(path, network, cfg):
    torch.save({
        "format": 1,
        "depth": network.depth,
        "mode": network.mode,
        "channels": network.channels,
        "base_channels": network.channels[0],
        "channel_cap": max(network.channels),
        "state_dict": network.state_dict(),
        "config": {"atlas_resolution": cfg.atlas_resolution if cfg else None},
    }, path)


def load_inpainter(path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != 1:
        raise RuntimeError(f"unsupported inpainter checkpoint format {payload.get('format')!r}")
    network = PartialConvUNet(depth=payload["depth"],
                              base_channels=payload["base_channels"],
                              channel_cap=payload["channel_cap"],
                              mode=payload["mode"])
    network.load_state_dict(payload["state_dict"])
    network.eval()
    return network
