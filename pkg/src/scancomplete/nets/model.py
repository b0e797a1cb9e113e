"""Joint shape/texture completion model and its checkpoint container."""

import torch
from torch import nn

from .config import EncoderConfig, CheckpointConfigError
from .decoders import PointDecoder
from .encoders import VoxelEncoder
from .feature_sampling import grid_sample_features

CHECKPOINT_FORMAT = 1


class JointCompletionModel(nn.Module):
    """Shape and texture encoders plus their point decoders.

    The texture decoder consumes the concatenation of query coordinates,
    shape features, and texture features (early fusion); the shape decoder
    sees coordinates and shape features only.
    """

    def __init__(self, shape_config: EncoderConfig, texture_config: EncoderConfig | None = None):
        super().__init__()
        if shape_config.in_channels != 1:
            raise ValueError("shape encoder takes a 1-channel occupancy volume")
        if texture_config is None:
            texture_config = EncoderConfig.from_dict({**shape_config.to_dict(), "in_channels": 3})
        if texture_config.in_channels != 3:
            raise ValueError("texture encoder takes a 3-channel color volume")
        if texture_config.resolution != shape_config.resolution:
            raise ValueError("shape and texture encoders must share the input resolution")
        self.shape_config = shape_config
        self.texture_config = texture_config
        self.shape_encoder = VoxelEncoder(shape_config)
        self.texture_encoder = VoxelEncoder(texture_config)
        self.shape_decoder = PointDecoder(
            3 + shape_config.feature_length, shape_config.decoder_hidden, out_dim=1)
        self.texture_decoder = PointDecoder(
            3 + shape_config.feature_length + texture_config.feature_length,
            texture_config.decoder_hidden, out_dim=3)

    def encode_shape(self, occupancy):
        """(B, 1, N, N, N) float occupancy -> FeaturePyramid."""
        return self.shape_encoder(occupancy)

    def encode_texture(self, colors):
        """(B, 3, N, N, N) float colors ((-1,-1,-1) where empty) -> pyramid."""
        return self.texture_encoder(colors)

    def decode_occupancy(self, points, shape_features):
        """Per-point occupancy logits (B, M) from sampled shape features."""
        x = torch.cat([shape_features.points, shape_features.features], dim=-1)
        return self.shape_decoder(x.transpose(1, 2)).squeeze(1)

    def decode_color(self, points, shape_features, texture_features, fuse_shape=True):
        """Per-point RGB (B, M, 3), linear activation (no clamping).

        `fuse_shape=False` zeroes the shape features entering the texture
        decoder (fusion ablation) without touching the shape path.
        """
        if shape_features.num_points != texture_features.num_points:
            raise ValueError("shape and texture features must cover the same points")
        sf = shape_features.features
        if not fuse_shape:
            sf = torch.zeros_like(sf)
        x = torch.cat([texture_features.points, sf, texture_features.features], dim=-1)
        return self.texture_decoder(x.transpose(1, 2)).transpose(1, 2)

    def occupancy_logits(self, occupancy, points):
        pyramid = self.encode_shape(occupancy)
        feats = grid_sample_features(pyramid, points)
        return self.decode_occupancy(points, feats)

    def point_colors(self, occupancy, colors, points, fuse_shape=True):
        s_pyr = self.encode_shape(occupancy)
        t_pyr = self.encode_texture(colors)
        s_feat = grid_sample_features(s_pyr, points)
        t_feat = grid_sample_features(t_pyr, points)
        return self.decode_color(points, s_feat, t_feat, fuse_shape=fuse_shape)


def save_checkpoint(path, model, extra=None):
    """Write parameters keyed by layer name together with the configs."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "shape_config": model.shape_config.to_dict(),
        "texture_config": model.texture_config.to_dict(),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_shape_config=None):
    """Rebuild the model from a checkpoint; mismatched configs are an error.

    Returns (model, extra dict).
    """
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointConfigError(f"unsupported checkpoint format {payload.get('format')!r}")
    shape_cfg = EncoderConfig.from_dict(payload["shape_config"])
    texture_cfg = EncoderConfig.from_dict(payload["texture_config"])
    if expected_shape_config is not None and expected_shape_config != shape_cfg:
        raise CheckpointConfigError(
            f"checkpoint config {shape_cfg} does not match expected {expected_shape_config}")
    model = JointCompletionModel(shape_cfg, texture_cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload.get("extra", {})
