"""Area-uniform surface sampling and atlas color lookup."""

from dataclasses import dataclass

import numpy as np

from .mesh import DegenerateMeshError, MeshError


class MissingUVError(MeshError):
    pass


@dataclass
class PointSample:
    """Surface samples with their provenance on the mesh.

    positions (M, 3); colors (M, 3) or None; faces (M,) triangle indices;
    barycentric (M, 3) non-negative weights summing to 1.
    """

    positions: np.ndarray
    colors: np.ndarray | None = None
    faces: np.ndarray | None = None
    barycentric: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if self.faces is not None:
            self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1)
        if self.barycentric is not None:
            self.barycentric = np.asarray(self.barycentric, dtype=np.float64).reshape(-1, 3)
            if self.barycentric.size:
                if self.barycentric.min() < -1e-9:
                    raise ValueError("barycentric weights must be non-negative")
                if np.abs(self.barycentric.sum(axis=1) - 1.0).max() > 1e-6:
                    raise ValueError("barycentric weights must sum to 1")

    def __len__(self):
        return len(self.positions)


def uniform_barycentric(count, rng):
    """Uniform samples over the unit triangle via the sqrt warp."""
    u = rng.random(count)
    v = rng.random(count)
    su = np.sqrt(u)
    return np.column_stack([1.0 - su, su * (1.0 - v), su * v])


def sample_surface_points(mesh, count, seed):
    """Sample `count` points area-uniformly from the mesh surface.

    Deterministic given (mesh, count, seed). Colors are filled through the
    atlas when the mesh has one, else from vertex colors when present.
    """
    areas = mesh.triangle_areas()
    total = areas.sum()
    if len(mesh.triangles) == 0 or total <= 0:
        raise DegenerateMeshError("mesh has no triangles with positive area")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas)
    faces = np.searchsorted(cdf, rng.random(count) * total)
    faces = np.minimum(faces, len(areas) - 1)
    bary = uniform_barycentric(count, rng)
    corners = mesh.vertices[mesh.triangles[faces]]
    positions = np.einsum("mk,mkd->md", bary, corners)
    colors = None
    if mesh.atlas is not None and mesh.uv_coords is not None:
        colors = atlas_lookup(mesh, faces, bary)
    elif mesh.vertex_colors is not None:
        colors = np.einsum("mk,mkd->md", bary, mesh.vertex_colors[mesh.triangles[faces]])
    return PointSample(positions=positions, colors=colors, faces=faces, barycentric=bary)


def bilinear_sample(image, u, v):
    """Bilinear lookup of (H, W, C) `image` at UV in [0,1]^2, v up, edge clamped."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    # pixel centers sit at (i + 0.5) / size; image row 0 is v = 1
    x = u * w - 0.5
    y = (1.0 - v) * h - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    c00 = image[y0c, x0c]
    c01 = image[y0c, x1c]
    c10 = image[y1c, x0c]
    c11 = image[y1c, x1c]
    fx = fx[..., None]
    fy = fy[..., None]
    top = c00 * (1 - fx) + c01 * fx
    bot = c10 * (1 - fx) + c11 * fx
    return (top * (1 - fy) + bot * fy).astype(np.float64)


def atlas_lookup(mesh, faces, bary):
    """Atlas color at barycentric locations on the given faces.

    The UV coordinate is the barycentric blend of the triangle's corner UVs;
    the atlas is sampled bilinearly there.
    """
    if mesh.uv_coords is None or mesh.atlas is None:
        raise MissingUVError("mesh has no UV coordinates / atlas")
    faces = np.atleast_1d(np.asarray(faces, dtype=np.int64))
    bary = np.asarray(bary, dtype=np.float64).reshape(len(faces), 3)
    uv = np.einsum("mk,mkd->md", bary, mesh.uv_coords[faces])
    return bilinear_sample(mesh.atlas, uv[:, 0], uv[:, 1])


def color_at(mesh, faces, bary):
    """Surface color at (face, barycentric) locations.

    Reads the atlas when one is present, otherwise interpolates vertex
    colors. Raises when the mesh carries neither.
    """
    faces = np.atleast_1d(np.asarray(faces, dtype=np.int64))
    bary = np.asarray(bary, dtype=np.float64).reshape(len(faces), 3)
    if mesh.atlas is not None and mesh.uv_coords is not None:
        return atlas_lookup(mesh, faces, bary)
    if mesh.vertex_colors is not None:
        return np.einsum("mk,mkd->md", bary, mesh.vertex_colors[mesh.triangles[faces]])
    raise MissingUVError("mesh has neither an atlas nor vertex colors")
