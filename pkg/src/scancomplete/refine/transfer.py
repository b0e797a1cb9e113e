"""Texture transfer, mask construction, vertex-color projection, composition."""

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..intersect import MeshProximity, MeshRayCaster
from ..mesh import MeshError
from ..sampling import color_at
from ..uvatlas import generate_uv_atlas, rasterize_uv, texel_positions

DEFAULT_MAX_DISTANCE = 0.02
BACKGROUND_COLOR = 0.5


class FrameMismatchError(MeshError):
    pass


@dataclass
class AtlasMaskSet:
    """Transferred atlas with its mask stack. Mask value True = unmasked/valid.

    atlas A: texture copied from the partial scan (black where missing);
    mask M: texels with observed transferred texture;
    background M_b: texels covered by a UV triangle;
    coarse_atlas A_c / coarse_mask M_c: after vertex-color projection.
    """

    atlas: np.ndarray
    mask: np.ndarray
    background: np.ndarray
    coarse_atlas: np.ndarray | None = None
    coarse_mask: np.ndarray | None = None
    face_map: np.ndarray | None = None
    bary_map: np.ndarray | None = None

    def __post_init__(self):
        shape = self.atlas.shape[:2]
        if self.mask.shape != shape or self.background.shape != shape:
            raise ValueError("masks and atlas must share dimensions")
        if self.coarse_mask is not None:
            if self.coarse_mask.shape != shape:
                raise ValueError("coarse mask must share atlas dimensions")
            if (self.mask & ~self.coarse_mask).any():
                raise ValueError("projection may only unmask: M_c must contain M")

    @property
    def resolution(self):
        return self.atlas.shape[0]


def _check_same_frame(completed, partial):
    # the partial scan is a subset of the completed mesh, so its bounding
    # box must sit inside the completed one up to 10% slack per axis
    lo_c, hi_c = completed.bounds()
    lo_p, hi_p = partial.bounds()
    slack = 0.10 * np.maximum(hi_c - lo_c, 1e-9)
    if (lo_p < lo_c - slack).any() or (hi_p > hi_c + slack).any():
        raise FrameMismatchError(
            f"partial bounding box {lo_p}..{hi_p} exceeds the completed mesh's "
            f"{lo_c}..{hi_c} by more than 10%; meshes are in different frames")


def transfer_texture_raycast(completed, partial, max_distance=DEFAULT_MAX_DISTANCE,
                             check_frames=True):
    """Bake the partial scan's texture onto the completed mesh's fresh atlas.

    For every texel covered by a UV triangle of `completed`, a bidirectional
    ray along the covering face normal is cast against `partial`; hits
    within `max_distance` copy the partial texture there and unmask M.
    Uncovered texels are masked in M_b. Returns an AtlasMaskSet.
    """
    if completed.uv_coords is None or completed.atlas is None:
        raise MeshError("completed mesh needs a UV layout and atlas (generate_uv_atlas)")
    res = completed.atlas.shape[0]
    face_map, bary_map, _ = rasterize_uv(completed, res)
    covered = face_map >= 0
    atlas = np.zeros((res, res, 3), dtype=np.float32)
    mask = np.zeros((res, res), dtype=bool)
    background = covered.copy()

    if partial.is_empty():
        return AtlasMaskSet(atlas=atlas, mask=mask, background=background,
                            face_map=face_map, bary_map=bary_map)
    if check_frames:
        _check_same_frame(completed, partial)

    positions = texel_positions(completed, face_map, bary_map)[covered]
    normals = completed.face_normals()[face_map[covered]]
    caster = MeshRayCaster(partial)
    hit, _, faces, bary = caster.cast_bidirectional(positions, normals, max_distance)
    colors = np.zeros((len(positions), 3))
    if hit.any():
        colors[hit] = color_at(partial, faces[hit], bary[hit])

    rows, cols = np.nonzero(covered)
    atlas[rows[hit], cols[hit]] = colors[hit]
    mask[rows[hit], cols[hit]] = True
    return AtlasMaskSet(atlas=atlas, mask=mask, background=background,
                        face_map=face_map, bary_map=bary_map)


def project_vertex_colors(atlas_set, mesh):
    """Fill M-masked texels with barycentric vertex colors, unmasking them.

    Texels already unmasked in M keep their transferred colors untouched.
    Returns the atlas set with coarse_atlas (A_c) and coarse_mask (M_c) set.
    """
    if mesh.vertex_colors is None:
        raise MeshError("mesh has no vertex colors to project")
    if atlas_set.face_map is None:
        raise ValueError("atlas set lacks the rasterized texel-face map")
    fill = atlas_set.background & ~atlas_set.mask
    coarse = atlas_set.atlas.copy()
    faces = atlas_set.face_map[fill]
    bary = atlas_set.bary_map[fill]
    corner_colors = mesh.vertex_colors[mesh.triangles[faces]]
    coarse[fill] = np.einsum("mk,mkd->md", bary, corner_colors).astype(np.float32)
    coarse_mask = atlas_set.mask | fill
    atlas_set.coarse_atlas = coarse
    atlas_set.coarse_mask = coarse_mask
    return atlas_set


def compose_final_texture(inpainted, atlas, mask, background, fill=BACKGROUND_COLOR):
    """Final atlas: observed texels bit-exact from A, holes from the
    inpainted image, never-covered texels at the background fill color."""
    inpainted = np.asarray(inpainted, dtype=atlas.dtype)
    out = np.full(atlas.shape, fill, dtype=atlas.dtype)
    hole = background & ~mask
    out[hole] = inpainted[hole]
    out[mask] = atlas[mask]
    return out


def save_mask(path, mask):
    """Single-channel 8-bit image; 255 = unmasked/valid."""
    img = Image.fromarray((np.asarray(mask, dtype=bool) * np.uint8(255)), mode="L")
    img.save(os.fspath(path))


def load_mask(path):
    arr = np.asarray(Image.open(os.fspath(path)).convert("L"))
    return arr >= 128


def save_atlas_masks(prefix, atlas_set):
    """Persist the mask stack next to an atlas: `<prefix>_{m,mb,mc}.png`."""
    save_mask(f"{prefix}_m.png", atlas_set.mask)
    save_mask(f"{prefix}_mb.png", atlas_set.background)
    if atlas_set.coarse_mask is not None:
        save_mask(f"{prefix}_mc.png", atlas_set.coarse_mask)


def render_vertex_atlas(mesh, resolution=None):
    """Rasterize vertex colors over the whole UV coverage (coarse baseline)."""
    if mesh.uv_coords is None:
        raise MeshError("mesh needs a UV layout")
    if mesh.vertex_colors is None:
        raise MeshError("mesh has no vertex colors")
    res = resolution or (mesh.atlas.shape[0] if mesh.atlas is not None else 256)
    face_map, bary_map, _ = rasterize_uv(mesh, res)
    covered = face_map >= 0
    atlas = np.full((res, res, 3), BACKGROUND_COLOR, dtype=np.float32)
    faces = face_map[covered]
    bary = bary_map[covered]
    corner_colors = mesh.vertex_colors[mesh.triangles[faces]]
    atlas[covered] = np.einsum("mk,mkd->md", bary, corner_colors).astype(np.float32)
    return atlas


def build_inpaint_pair(gt_mesh, partial_mesh, atlas_resolution=256,
                       max_distance=DEFAULT_MAX_DISTANCE, completed_mesh=None):
    """Construct one inpainter training tuple from a ground-truth scan.

    The completed geometry defaults to the ground truth itself; vertex
    textures are read from the ground-truth atlas (projection input), and
    the target is the ground-truth texture baked into the fresh UV layout.
    Returns (atlas_set with A_c/M_c, target_atlas).
    """
    completed = completed_mesh if completed_mesh is not None else gt_mesh
    fresh = generate_uv_atlas(completed, atlas_resolution=atlas_resolution)

    atlas_set = transfer_texture_raycast(fresh, partial_mesh, max_distance=max_distance)

    # target texture: ground-truth colors at every covered texel
    covered = atlas_set.background
    target = np.full((atlas_resolution, atlas_resolution, 3), BACKGROUND_COLOR, dtype=np.float32)
    if completed_mesh is None:
        faces = atlas_set.face_map[covered]
        bary = atlas_set.bary_map[covered]
        target[covered] = color_at(gt_mesh, faces, bary).astype(np.float32)
    else:
        positions = texel_positions(fresh, atlas_set.face_map, atlas_set.bary_map)[covered]
        prox = MeshProximity(gt_mesh)
        _, faces, _, bary = prox.closest(positions)
        target[covered] = color_at(gt_mesh, faces, bary).astype(np.float32)

    # vertex textures sampled from the ground-truth atlas
    prox = MeshProximity(gt_mesh)
    _, vfaces, _, vbary = prox.closest(fresh.vertices)
    fresh.vertex_colors = color_at(gt_mesh, vfaces, vbary)
    atlas_set = project_vertex_colors(atlas_set, fresh)
    return atlas_set, target
