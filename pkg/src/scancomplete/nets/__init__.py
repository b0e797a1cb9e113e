from .config import EncoderConfig, FeatureLengthError, CheckpointConfigError
from .encoders import VoxelEncoder, FeaturePyramid
from .feature_sampling import QueryFeatures, grid_sample_features, tap_offsets
from .decoders import PointDecoder
from .model import JointCompletionModel, save_checkpoint, load_checkpoint

__all__ = [
    "EncoderConfig",
    "FeatureLengthError",
    "CheckpointConfigError",
    "VoxelEncoder",
    "FeaturePyramid",
    "QueryFeatures",
    "grid_sample_features",
    "tap_offsets",
    "PointDecoder",
    "JointCompletionModel",
    "save_checkpoint",
    "load_checkpoint",
]
