from .transfer import (
    AtlasMaskSet,
    FrameMismatchError,
    transfer_texture_raycast,
    project_vertex_colors,
    compose_final_texture,
    render_vertex_atlas,
    build_inpaint_pair,
    save_mask,
    load_mask,
    save_atlas_masks,
)
from .pconv import (
    partial_conv2d,
    update_mask,
    PartialConv2dLayer,
    PartialConvUNet,
    background_pyramid,
    inpaint_forward,
    depth_for_resolution,
)
from .inpaint_train import (
    InpaintConfig,
    InpaintLossWeights,
    FixedFeatureExtractor,
    inpaint_losses,
    train_inpainter,
    save_inpainter,
    load_inpainter,
)

__all__ = [
    "AtlasMaskSet",
    "FrameMismatchError",
    "transfer_texture_raycast",
    "project_vertex_colors",
    "compose_final_texture",
    "render_vertex_atlas",
    "build_inpaint_pair",
    "save_mask",
    "load_mask",
    "save_atlas_masks",
    "partial_conv2d",
    "update_mask",
    "PartialConv2dLayer",
    "PartialConvUNet",
    "background_pyramid",
    "inpaint_forward",
    "depth_for_resolution",
    "InpaintConfig",
    "InpaintLossWeights",
    "FixedFeatureExtractor",
    "inpaint_losses",
    "train_inpainter",
    "save_inpainter",
    "load_inpainter",
]
