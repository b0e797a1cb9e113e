"""Occupancy and color voxelization over the fixed [-0.5, 0.5]^3 domain."""

import os
from dataclasses import dataclass, field

import numpy as np

DOMAIN_MIN = -0.5
DOMAIN_MAX = 0.5

UNOCCUPIED_COLOR = np.array([-1.0, -1.0, -1.0])


@dataclass
class VoxelGrid:
    """Binary occupancy over an N^3 lattice covering [-0.5, 0.5]^3."""

    resolution: int
    occupancy: np.ndarray
    clamped_points: int = 0

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=np.uint8)
        if self.occupancy.shape != (self.resolution,) * 3:
            raise ValueError("occupancy shape must be (N, N, N)")
        vals = np.unique(self.occupancy)
        if vals.size and not np.isin(vals, [0, 1]).all():
            raise ValueError("occupancy values must be 0 or 1")

    def occupied_count(self):
        return int(self.occupancy.sum())


@dataclass
class ColorVoxelGrid:
    """RGB colors in [0,1]^3 on occupied voxels, (-1,-1,-1) elsewhere."""

    resolution: int
    colors: np.ndarray
    clamped_points: int = 0

    def __post_init__(self):
        self.colors = np.asarray(self.colors, dtype=np.float32)
        if self.colors.shape != (self.resolution,) * 3 + (3,):
            raise ValueError("colors shape must be (N, N, N, 3)")
        occ = self.occupied_mask()
        unocc = ~occ
        if not np.all(self.colors[unocc] == -1.0):
            raise ValueError("unoccupied voxels must be exactly (-1,-1,-1)")

    def occupied_mask(self):
        return (self.colors >= 0).all(axis=-1)


def voxel_centers(resolution):
    """(N, N, N, 3) centers of the lattice cells, index order (x, y, z)."""
    step = (DOMAIN_MAX - DOMAIN_MIN) / resolution
    axis = DOMAIN_MIN + (np.arange(resolution) + 0.5) * step
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def points_to_voxel_indices(points, resolution):
    """Map points to containing-voxel indices; out-of-domain points clamp.

    Returns (indices (M, 3) int, clamped count).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    scaled = (points - DOMAIN_MIN) * resolution
    idx = np.floor(scaled).astype(np.int64)
    clamped = int(((idx < 0) | (idx >= resolution)).any(axis=1).sum())
    return np.clip(idx, 0, resolution - 1), clamped


def voxelize_occupancy(points, resolution):
    """Set the voxel containing each sample point to 1.

    `points` is a PointSample or an (M, 3) array. Points outside the domain
    are clamped to the boundary voxel and counted in `clamped_points`.
    """
    positions = getattr(points, "positions", points)
    occ = np.zeros((resolution,) * 3, dtype=np.uint8)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(positions) == 0:
        return VoxelGrid(resolution, occ)
    idx, clamped = points_to_voxel_indices(positions, resolution)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = 1
    return VoxelGrid(resolution, occ, clamped_points=clamped)


def voxelize_color(points, resolution):
    """Write each sample's RGB into its voxel; later points win collisions.

    Requires a PointSample with colors. Unoccupied voxels stay (-1,-1,-1).
    """
    if points.colors is None:
        raise ValueError("voxelize_color requires a PointSample with colors")
    colors = np.full((resolution,) * 3 + (3,), -1.0, dtype=np.float32)
    if len(points) == 0:
        return ColorVoxelGrid(resolution, colors)
    idx, clamped = points_to_voxel_indices(points.positions, resolution)
    flat = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), (resolution,) * 3)
    # keep the last write per voxel regardless of assignment buffering
    _, last = np.unique(flat[::-1], return_index=True)
    keep = len(flat) - 1 - last
    colors.reshape(-1, 3)[flat[keep]] = np.clip(points.colors[keep], 0.0, 1.0)
    return ColorVoxelGrid(resolution, colors, clamped_points=clamped)


def save_grid(path, grid):
    """Raw little-endian dump plus a one-line header sidecar (`<path>.hdr`).

    Accepts a VoxelGrid, a ColorVoxelGrid, or a real-valued (N, N, N) array
    (persisted as a probability volume).
    """
    path = os.fspath(path)
    if isinstance(grid, VoxelGrid):
        arr = grid.occupancy.astype("<u1")
        kind, dtype, channels, n = "occupancy", "uint8", 1, grid.resolution
    elif isinstance(grid, ColorVoxelGrid):
        arr = grid.colors.astype("<f4")
        kind, dtype, channels, n = "color", "float32", 3, grid.resolution
    elif isinstance(grid, np.ndarray) and grid.ndim == 3:
        arr = grid.astype("<f4")
        kind, dtype, channels, n = "probability", "float32", 1, grid.shape[0]
    else:
        raise TypeError(f"unsupported grid type {type(grid)!r}")
    arr.tofile(path)
    header = (
        f"kind={kind} resolution={n} dtype={dtype} "
        f"channels={channels} domain={DOMAIN_MIN}:{DOMAIN_MAX} order=xyz endian=little\n"
    )
    with open(path + ".hdr", "w") as fh:
        fh.write(header)


def load_grid(path):
    path = os.fspath(path)
    hdr_path = path + ".hdr"
    if not os.path.isfile(path) or not os.path.isfile(hdr_path):
        raise FileNotFoundError(f"grid or header missing for {path}")
    with open(hdr_path) as fh:
        fields = dict(item.split("=", 1) for item in fh.readline().split())
    n = int(fields["resolution"])
    kind = fields["kind"]
    if kind == "occupancy":
        arr = np.fromfile(path, dtype="<u1").reshape(n, n, n)
        return VoxelGrid(n, arr)
    if kind == "color":
        arr = np.fromfile(path, dtype="<f4").reshape(n, n, n, 3)
        return ColorVoxelGrid(n, arr)
    if kind == "probability":
        return np.fromfile(path, dtype="<f4").reshape(n, n, n)
    raise ValueError(f"unknown grid kind {kind!r}")
