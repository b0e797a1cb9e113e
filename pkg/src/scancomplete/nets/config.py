"""Configuration for the voxel encoders and point decoders."""

from dataclasses import dataclass, field, asdict


class FeatureLengthError(ValueError):
    """Query feature vector does not match the configured schedule."""


class CheckpointConfigError(RuntimeError):
    """Checkpoint was written with a different network configuration."""


NEIGHBORHOOD_TAPS = 7  # center plus one displaced sample along +/- each axis


@dataclass(frozen=True)
class EncoderConfig:
    """Shape/texture encoder hyperparameters.

    The convolution stack is fixed; `base_channels` scales its widths with
    channel growth base * 2^(i-1), capped at 8 * base. Displacement is the
    offset of the six axis-aligned neighborhood taps, in domain units.
    """

    resolution: int = 128
    in_channels: int = 1
    base_channels: int = 16
    kernel_size: int = 3
    displacement: float = 0.0722
    decoder_hidden: tuple = (512, 256, 256)

    def __post_init__(self):
        n = self.resolution
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError("resolution must be a power of 2, at least 16")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        object.__setattr__(self, "decoder_hidden", tuple(int(h) for h in self.decoder_hidden))

    @property
    def tap_channels(self):
        b = self.base_channels
        return (self.in_channels, b, 2 * b, 4 * b, 8 * b, 8 * b)

    @property
    def tap_scales(self):
        return (1, 1, 2, 4, 8, 16)

    def tap_resolutions(self, resolution=None):
        n = resolution or self.resolution
        return tuple(n // s for s in self.tap_scales)

    @property
    def feature_length(self):
        return sum(self.tap_channels) * NEIGHBORHOOD_TAPS

    def to_dict(self):
        d = asdict(self)
        d["decoder_hidden"] = list(self.decoder_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["decoder_hidden"] = tuple(d.get("decoder_hidden", (512, 256, 256)))
        return cls(**d)
