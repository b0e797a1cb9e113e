"""Synthetic partiality: view-based (T2) and hole-based (T1) scan truncation."""

import numpy as np

from .intersect import closest_point_on_triangles, segment_cast
from .mesh import DegenerateMeshError, MeshError
from .sampling import uniform_barycentric
from .uvatlas import rasterize_uv


class HoleGenerationError(MeshError):
    pass


def _restrict_atlas(mesh, keep_mask):
    """Blank out atlas texels not covered by the kept triangles."""
    if mesh.uv_coords is None or mesh.atlas is None:
        return None
    res = mesh.atlas.shape[0]
    face_map, _, _ = rasterize_uv(mesh, res)
    keep_texel = np.zeros((res, res), dtype=bool)
    covered = face_map >= 0
    keep_texel[covered] = keep_mask[face_map[covered]]
    # small dilation so bilinear reads at kept-chart borders stay intact
    for _ in range(2):
        grown = keep_texel.copy()
        grown[1:, :] |= keep_texel[:-1, :]
        grown[:-1, :] |= keep_texel[1:, :]
        grown[:, 1:] |= keep_texel[:, :-1]
        grown[:, :-1] |= keep_texel[:, 1:]
        keep_texel = grown
    atlas = mesh.atlas.copy()
    atlas[~keep_texel] = 0.0
    return atlas


def make_view_partial(mesh, seed):
    """Keep exactly the triangles visible from a random bounding-sphere view.

    A triangle survives when it is front-facing towards the viewpoint and
    the segment viewpoint-to-centroid is unobstructed. The atlas is
    restricted to the kept triangles. Deterministic in `seed`.
    """
    if mesh.is_empty():
        raise DegenerateMeshError("cannot truncate an empty mesh")
    rng = np.random.default_rng(seed)
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2
    radius = float(np.linalg.norm(hi - lo)) / 2
    direction = rng.standard_normal(3)
    direction /= max(np.linalg.norm(direction), 1e-12)
    viewpoint = center + direction * radius * 2.5

    corners = mesh.triangle_corners()
    centroids = corners.mean(axis=1)
    normals = mesh.face_normals()
    to_view = viewpoint - centroids
    front = np.einsum("td,td->t", normals, to_view) > 0

    visible = front.copy()
    idx = np.flatnonzero(front)
    chunk = 512
    for start in range(0, len(idx), chunk):
        rows = idx[start:start + chunk]
        origins = np.tile(viewpoint, (len(rows), 1))
        dirs = centroids[rows] - viewpoint
        hit, _, _, _ = segment_cast(origins, dirs, corners, 1e-9, 1.0 - 1e-4)
        visible[rows] = ~hit
    if not visible.any():
        raise DegenerateMeshError("no triangle is visible from the sampled viewpoint")

    atlas = _restrict_atlas(mesh, visible)
    out = mesh.submesh(visible)
    if atlas is not None:
        out.atlas = atlas
    return out


def make_hole_partial(mesh, hole_count, radius_range, seed,
                      max_removed_fraction=0.9, retries=3):
    """Remove triangles intersecting `hole_count` random surface balls.

    Ball centers are area-weighted surface samples drawn sequentially from
    one seeded stream, so the first k holes are shared for any larger k.
    Radii shrink (bounded retries) when removal would exceed
    `max_removed_fraction` of the surface area.
    """
    if mesh.is_empty():
        raise DegenerateMeshError("cannot truncate an empty mesh")
    if hole_count == 0:
        return mesh.copy()
    rng = np.random.default_rng(seed)
    areas = mesh.triangle_areas()
    cdf = np.cumsum(areas)
    total = cdf[-1]
    corners = mesh.triangle_corners()

    centers = []
    radii = []
    for _ in range(hole_count):
        face = min(int(np.searchsorted(cdf, rng.random() * total)), len(areas) - 1)
        bary = uniform_barycentric(1, rng)[0]
        centers.append(bary @ corners[face])
        radii.append(rng.uniform(*radius_range))
    centers = np.asarray(centers)
    radii = np.asarray(radii)

    factor = 1.0
    for _ in range(retries + 1):
        removed = np.zeros(len(corners), dtype=bool)
        for c, r in zip(centers, radii * factor):
            cp, _ = closest_point_on_triangles(np.tile(c, (len(corners), 1)), corners)
            removed |= np.linalg.norm(cp - c, axis=1) <= r
        frac = areas[removed].sum() / total
        if frac <= max_removed_fraction:
            return mesh.submesh(~removed)
        factor /= 2.0
    raise HoleGenerationError(
        f"hole removal exceeds {max_removed_fraction:.0%} of the surface even "
        f"after {retries} radius reductions")
