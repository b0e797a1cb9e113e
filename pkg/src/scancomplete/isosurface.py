"""Iso-surface extraction from occupancy volumes (zero-padded marching cubes)."""

import numpy as np
from skimage import measure

from .mesh import TexturedMesh
from .voxelize import DOMAIN_MIN, DOMAIN_MAX, VoxelGrid


def marching_cubes(volume, threshold=0.5):
    """Extract the iso-surface of an occupancy volume at `threshold`.

    Accepts a VoxelGrid or a real-valued (N, N, N) array over the
    [-0.5, 0.5]^3 domain. The volume is zero-padded by one layer so fully
    occupied volumes still close up; output vertex coordinates are mapped
    back into the domain. Empty level sets yield an empty mesh.
    """
    if isinstance(volume, VoxelGrid):
        volume = volume.occupancy
    vol = np.asarray(volume, dtype=np.float32)
    if vol.ndim != 3 or min(vol.shape) < 2:
        raise ValueError("volume must be (N, N, N) with N >= 2")
    n = vol.shape[0]
    padded = np.pad(vol, 1, mode="constant", constant_values=0.0)
    if padded.max() <= threshold or padded.min() >= threshold:
        return TexturedMesh(vertices=np.zeros((0, 3)), triangles=np.zeros((0, 3), dtype=np.int64))
    verts, faces, _, _ = measure.marching_cubes(padded, level=threshold)
    # padded indexj corresponds to unpadded voxel center at
    # DOMAIN_MIN + (j - 1 + 0.5) / N
    step = (DOMAIN_MAX - DOMAIN_MIN) / n
    verts = DOMAIN_MIN + (verts - 0.5) * step
    return TexturedMesh(vertices=verts, triangles=faces.astype(np.int64))


def mesh_edges(triangles):
    """(E, 2) sorted unique undirected edges and (3T, 2) all edge instances."""
    tri = np.asarray(triangles, dtype=np.int64)
    e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=0)
    e = np.sort(e, axis=1)
    uniq = np.unique(e, axis=0)
    return uniq, e


def is_watertight(mesh):
    """True when every undirected edge is shared by exactly two triangles."""
    if len(mesh.triangles) == 0:
        return False
    uniq, all_edges = mesh_edges(mesh.triangles)
    _, counts = np.unique(all_edges, axis=0, return_counts=True)
    return bool((counts == 2).all())


def boundary_edge_fraction(mesh):
    """Fraction of unique edges used by exactly one triangle."""
    if len(mesh.triangles) == 0:
        return 1.0
    _, all_edges = mesh_edges(mesh.triangles)
    _, counts = np.unique(all_edges, axis=0, return_counts=True)
    return float((counts == 1).sum() / len(counts))


def euler_characteristic(mesh):
    """V - E + F over referenced vertices (2 for a topological sphere)."""
    if len(mesh.triangles) == 0:
        return 0
    v = len(np.unique(mesh.triangles))
    uniq, _ = mesh_edges(mesh.triangles)
    return int(v - len(uniq) + len(mesh.triangles))
