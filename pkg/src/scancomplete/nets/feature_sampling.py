"""Trilinear multiscale feature sampling at query points (the grid taps)."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import FeatureLengthError, NEIGHBORHOOD_TAPS


def tap_offsets(displacement, dtype=torch.float32, device=None):
    """(7, 3) neighborhood offsets: center then +/- displacement per axis."""
    d = float(displacement)
    return torch.tensor(
        [[0.0, 0.0, 0.0],
         [d, 0.0, 0.0], [-d, 0.0, 0.0],
         [0.0, d, 0.0], [0.0, -d, 0.0],
         [0.0, 0.0, d], [0.0, 0.0, -d]],
        dtype=dtype, device=device)


@dataclass
class QueryFeatures:
    """Flattened per-point multiscale neighborhood features.

    features: (B, M, F) with F = sum_i channels_i * 7; per level the layout
    is tap-major (center, +x, -x, +y, -y, +z, -z) with channels innermost.
    """

    features: torch.Tensor
    points: torch.Tensor
    level_channels: tuple
    taps: int = NEIGHBORHOOD_TAPS

    def __post_init__(self):
        expected = sum(self.level_channels) * self.taps
        if self.features.shape[-1] != expected:
            raise FeatureLengthError(
                f"feature length {self.features.shape[-1]} != schedule {expected}")

    @property
    def feature_length(self):
        return self.features.shape[-1]

    @property
    def num_points(self):
        return self.features.shape[-2]


def grid_sample_features(pyramid, points):
    """Sample every pyramid level at each point and its 6 displaced taps.

    Points live in the [-0.5, 0.5]^3 domain; features sit at voxel centers
    and are interpolated trilinearly with border clamping. Accepts (M, 3)
    or (B, M, 3) points; the batch size must match the pyramid.
    """
    if not pyramid.levels:
        raise ValueError("empty pyramid")
    lv0 = pyramid.levels[0]
    if isinstance(points, torch.Tensor):
        pts = points
    else:
        pts = torch.as_tensor(points, dtype=lv0.dtype, device=lv0.device)
    if pts.dim() == 2:
        pts = pts.unsqueeze(0)
        if pyramid.batch_size != 1:
            raise ValueError("unbatched points with a batched pyramid")
    pts = pts.to(dtype=lv0.dtype, device=lv0.device)
    b, m, _ = pts.shape
    if b != pyramid.batch_size:
        raise ValueError("batch size mismatch between points and pyramid")

    offsets = tap_offsets(pyramid.displacement, dtype=pts.dtype, device=pts.device)
    taps = offsets.shape[0]
    # (B, T, M, 3) -> normalized grid coords; grid_sample indexes (W, H, D)
    # as the last grid axis order, so the point (x, y, z) flips to (z, y, x)
    tapped = pts.unsqueeze(1) + offsets.view(1, taps, 1, 3)
    grid = (2.0 * tapped).flip(-1).reshape(b, taps * m, 1, 1, 3)

    per_level = []
    for level in pyramid.levels:
        sampled = F.grid_sample(level, grid, mode="bilinear",
                                padding_mode="border", align_corners=False)
        c = level.shape[1]
        sampled = sampled.view(b, c, taps, m).permute(0, 3, 2, 1)  # (B, M, T, C)
        per_level.append(sampled.reshape(b, m, taps * c))
    features = torch.cat(per_level, dim=-1)
    return QueryFeatures(features=features, points=pts,
                         level_channels=tuple(lv.shape[1] for lv in pyramid.levels),
                         taps=taps)
