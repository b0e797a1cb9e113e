"""Inference: dense occupancy prediction, mesh extraction, vertex colors."""

import logging

import numpy as np
import torch

from .isosurface import marching_cubes
from .nets import grid_sample_features
from .sampling import sample_surface_points
from .voxelize import VoxelGrid, voxel_centers, voxelize_color, voxelize_occupancy

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 32 ** 3


def predict_occupancy_volume(model, occupancy_grid, out_resolution, chunk_points=DEFAULT_CHUNK):
    """Occupancy probability at every output-voxel centroid.

    Decoding runs in chunks of at most `chunk_points` centroids; chunking
    does not change the result. Returns a float32 (R, R, R) volume.
    """
    if model is None:
        raise ValueError("predict_occupancy_volume requires a trained model")
    if isinstance(occupancy_grid, VoxelGrid):
        occ = occupancy_grid.occupancy
    else:
        occ = np.asarray(occupancy_grid)
    dtype = next(model.parameters()).dtype
    model.eval()
    with torch.no_grad():
        vol_in = torch.from_numpy(occ.astype(np.float32)).to(dtype)[None, None]
        pyramid = model.encode_shape(vol_in)
        centers = voxel_centers(out_resolution).reshape(-1, 3)
        probs = np.empty(len(centers), dtype=np.float32)
        for start in range(0, len(centers), chunk_points):
            pts = torch.from_numpy(centers[start:start + chunk_points]).to(dtype)[None]
            feats = grid_sample_features(pyramid, pts)
            logits = model.decode_occupancy(pts, feats)
            probs[start:start + chunk_points] = torch.sigmoid(logits)[0].numpy()
    return probs.reshape((out_resolution,) * 3)


def extract_completed_mesh(volume, threshold=0.5):
    """Iso-surface of the probability volume at the given threshold."""
    return marching_cubes(volume, threshold=threshold)


def predict_vertex_colors(model, occupancy_grid, color_grid, mesh,
                          chunk_points=DEFAULT_CHUNK, fuse_shape=True):
    """One clamped RGB per mesh vertex from the fused texture decoder.

    Vertices outside the voxel domain are clamped into it (with a logged
    count), mirroring the voxelization boundary policy.
    """
    if model is None:
        raise ValueError("predict_vertex_colors requires a trained model")
    if len(mesh.vertices) == 0:
        raise ValueError("mesh has no vertices")
    occ = occupancy_grid.occupancy if isinstance(occupancy_grid, VoxelGrid) else np.asarray(occupancy_grid)
    col = color_grid.colors if hasattr(color_grid, "colors") else np.asarray(color_grid)
    dtype = next(model.parameters()).dtype
    verts = mesh.vertices
    clamped = np.clip(verts, -0.5, 0.5)
    n_out = int((np.abs(verts) > 0.5).any(axis=1).sum())
    if n_out:
        log.warning("%d vertices outside the voxel domain were clamped", n_out)
    model.eval()
    with torch.no_grad():
        occ_t = torch.from_numpy(occ.astype(np.float32)).to(dtype)[None, None]
        col_t = torch.from_numpy(col.astype(np.float32)).to(dtype).permute(3, 0, 1, 2)[None]
        s_pyr = model.encode_shape(occ_t)
        t_pyr = model.encode_texture(col_t)
        out = np.empty((len(clamped), 3), dtype=np.float64)
        for start in range(0, len(clamped), chunk_points):
            pts = torch.from_numpy(clamped[start:start + chunk_points]).to(dtype)[None]
            s_feat = grid_sample_features(s_pyr, pts)
            t_feat = grid_sample_features(t_pyr, pts)
            rgb = model.decode_color(pts, s_feat, t_feat, fuse_shape=fuse_shape)
            out[start:start + chunk_points] = rgb[0].numpy()
    return np.clip(out, 0.0, 1.0)


def complete_scan(model, partial_mesh, input_resolution, out_resolution,
                  seed=0, voxel_samples=100000, threshold=0.5,
                  chunk_points=DEFAULT_CHUNK, return_volume=False):
    """Full inference path: voxelize, predict occupancy, extract, colorize.

    Returns the completed vertex-colored mesh (and the probability volume
    when `return_volume`). The partial mesh must already be normalized.
    """
    pts = sample_surface_points(partial_mesh, voxel_samples, seed=seed)
    occ = voxelize_occupancy(pts, input_resolution)
    col = voxelize_color(pts, input_resolution)
    volume = predict_occupancy_volume(model, occ, out_resolution, chunk_points)
    mesh = extract_completed_mesh(volume, threshold=threshold)
    if len(mesh.vertices):
        mesh.vertex_colors = predict_vertex_colors(model, occ, col, mesh, chunk_points)
    if return_volume:
        return mesh, volume
    return mesh
