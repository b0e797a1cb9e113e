"""Completion of partial 3D textured scans: joint implicit shape/texture
prediction plus texture-atlas refinement, with a CLI pipeline."""

__version__ = "0.1.0"

from .mesh import (
    TexturedMesh,
    NormalizationTransform,
    normalize_to_unit_cube,
    load_textured_mesh,
    save_textured_mesh,
)
from .sampling import PointSample, sample_surface_points, atlas_lookup
from .voxelize import VoxelGrid, ColorVoxelGrid, voxelize_occupancy, voxelize_color
from .isosurface import marching_cubes

__all__ = [
    "TexturedMesh",
    "NormalizationTransform",
    "normalize_to_unit_cube",
    "load_textured_mesh",
    "save_textured_mesh",
    "PointSample",
    "sample_surface_points",
    "atlas_lookup",
    "VoxelGrid",
    "ColorVoxelGrid",
    "voxelize_occupancy",
    "voxelize_color",
    "marching_cubes",
]
