"""Triangle mesh container with per-corner UVs, atlas texture, and OBJ I/O."""

import os
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image


class MeshError(Exception):
    """Base class for mesh related failures."""


class MeshFileNotFoundError(MeshError):
    pass


class MalformedMeshError(MeshError):
    pass


class MissingAtlasError(MeshError):
    pass


class DegenerateMeshError(MeshError):
    pass


@dataclass
class TexturedMesh:
    """Triangle mesh, optionally with per-corner UVs, an atlas image and vertex colors.

    vertices      (V, 3) float64
    triangles     (T, 3) int64 indices into vertices
    uv_coords     (T, 3, 2) float64 in [0, 1]^2, per triangle corner, or None
    atlas         (H, W, 3) float32 in [0, 1], or None
    vertex_colors (V, 3) float64 in [0, 1], or None
    """

    vertices: np.ndarray
    triangles: np.ndarray
    uv_coords: np.ndarray | None = None
    atlas: np.ndarray | None = None
    vertex_colors: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.uv_coords is not None:
            self.uv_coords = np.asarray(self.uv_coords, dtype=np.float64).reshape(-1, 3, 2)
        if self.atlas is not None:
            self.atlas = np.asarray(self.atlas, dtype=np.float32)
        if self.vertex_colors is not None:
            self.vertex_colors = np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)
        self.validate()

    def validate(self):
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise MalformedMeshError(
                f"triangle index out of range (max {self.triangles.max()}, {len(self.vertices)} vertices)")
        if self.uv_coords is not None:
            if len(self.uv_coords) != len(self.triangles):
                raise MalformedMeshError("uv_coords length must match triangle count")
            if self.uv_coords.size and (self.uv_coords.min() < -1e-9 or self.uv_coords.max() > 1 + 1e-9):
                raise MalformedMeshError("uv coordinates outside [0,1]^2")
        if self.atlas is not None:
            if self.atlas.ndim != 3 or self.atlas.shape[2] != 3 or min(self.atlas.shape[:2]) < 1:
                raise MalformedMeshError("atlas must be a (H, W, 3) image with positive dimensions")
        if self.vertex_colors is not None and len(self.vertex_colors) != len(self.vertices):
            raise MalformedMeshError("vertex_colors length must equal vertex count")

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def is_empty(self):
        return len(self.triangles) == 0

    def triangle_corners(self):
        """(T, 3, 3) corner positions."""
        return self.vertices[self.triangles]

    def triangle_areas(self):
        c = self.triangle_corners()
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def face_normals(self):
        c = self.triangle_corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(norm, 1e-30)

    def surface_area(self):
        return float(self.triangle_areas().sum())

    def bounds(self):
        if len(self.vertices) == 0:
            raise DegenerateMeshError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def submesh(self, face_mask):
        """Keep the selected triangles, dropping now-unreferenced vertices."""
        face_mask = np.asarray(face_mask)
        if face_mask.dtype == bool:
            faces = self.triangles[face_mask]
            uv = self.uv_coords[face_mask] if self.uv_coords is not None else None
        else:
            faces = self.triangles[face_mask]
            uv = self.uv_coords[face_mask] if self.uv_coords is not None else None
        used = np.unique(faces)
        remap = np.full(len(self.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TexturedMesh(
            vertices=self.vertices[used],
            triangles=remap[faces],
            uv_coords=uv,
            atlas=None if self.atlas is None else self.atlas.copy(),
            vertex_colors=None if self.vertex_colors is None else self.vertex_colors[used],
        )

    def copy(self):
        return replace(
            self,
            vertices=self.vertices.copy(),
            triangles=self.triangles.copy(),
            uv_coords=None if self.uv_coords is None else self.uv_coords.copy(),
            atlas=None if self.atlas is None else self.atlas.copy(),
            vertex_colors=None if self.vertex_colors is None else self.vertex_colors.copy(),
        )


@dataclass
class NormalizationTransform:
    """Similarity transform v -> scale * v + translation."""

    scale: float
    translation: np.ndarray

    def __post_init__(self):
        self.scale = float(self.scale)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.translation

    def invert(self, points):
        return (np.asarray(points, dtype=np.float64) - self.translation) / self.scale


def normalize_to_unit_cube(mesh, fraction=0.9):
    """Center the mesh at the origin and scale its longest bbox side to `fraction`.

    Returns (normalized mesh, transform); the transform maps original
    coordinates into the normalized frame.
    """
    if len(mesh.vertices) == 0:
        raise DegenerateMeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0:
        raise DegenerateMeshError("mesh has zero extent in all axes")
    center = (lo + hi) / 2.0
    scale = fraction / longest
    transform = NormalizationTransform(scale=scale, translation=-scale * center)
    out = mesh.copy()
    out.vertices = transform.apply(mesh.vertices)
    return out, transform


def apply_transform(mesh, transform):
    out = mesh.copy()
    out.vertices = transform.apply(mesh.vertices)
    return out


def _format_floats(values):
    return " ".join(repr(float(v)) for v in values)


def save_textured_mesh(path, mesh):
    """Write an ASCII OBJ with a companion MTL and a lossless PNG atlas.

    Per-vertex colors, when present, use the common `v x y z r g b`
    extension. Float values are written with full round-trip precision.
    """
    path = os.fspath(path)
    base, _ = os.path.splitext(path)
    name = os.path.basename(base)
    lines = []
    has_atlas = mesh.atlas is not None
    if has_atlas:
        lines.append(f"mtllib {name}.mtl")
    for i, v in enumerate(mesh.vertices):
        if mesh.vertex_colors is not None:
            lines.append("v " + _format_floats(v) + " " + _format_floats(mesh.vertex_colors[i]))
        else:
            lines.append("v " + _format_floats(v))
    if mesh.uv_coords is not None and len(mesh.triangles):
        # deduplicate identical UV corners to keep files small
        flat_uv = mesh.uv_coords.reshape(-1, 2)
        uniq, inverse = np.unique(flat_uv, axis=0, return_inverse=True)
        for uv in uniq:
            lines.append("vt " + _format_floats(uv))
        uv_idx = inverse.reshape(-1, 3)
        if has_atlas:
            lines.append("usemtl material0")
        for t in range(len(mesh.triangles)):
            f = mesh.triangles[t]
            u = uv_idx[t]
            lines.append(f"f {f[0]+1}/{u[0]+1} {f[1]+1}/{u[1]+1} {f[2]+1}/{u[2]+1}")
    else:
        if has_atlas:
            lines.append("usemtl material0")
        for f in mesh.triangles:
            lines.append(f"f {f[0]+1} {f[1]+1} {f[2]+1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if has_atlas:
        with open(base + ".mtl", "w") as fh:
            fh.write(f"newmtl material0\nmap_Kd {name}.png\n")
        arr = np.clip(np.asarray(mesh.atlas, dtype=np.float64), 0.0, 1.0)
        img = Image.fromarray(np.round(arr * 255.0).astype(np.uint8))
        img.save(base + ".png")


def _parse_face_token(token):
    parts = token.split("/")
    v = int(parts[0])
    vt = int(parts[1]) if len(parts) > 1 and parts[1] else None
    return v, vt


def load_textured_mesh(path):
    """Load an ASCII OBJ (+MTL/atlas) written by :func:`save_textured_mesh`.

    Raises MeshFileNotFoundError, MalformedMeshError or MissingAtlasError.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MeshFileNotFoundError(path)
    verts, colors, uvs, faces, face_uvs = [], [], [], [], []
    mtl_name = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            try:
                if tag == "v":
                    vals = [float(x) for x in tokens[1:]]
                    if len(vals) not in (3, 6):
                        raise ValueError("vertex line needs 3 or 6 floats")
                    verts.append(vals[:3])
                    if len(vals) == 6:
                        colors.append(vals[3:])
                elif tag == "vt":
                    uvs.append([float(tokens[1]), float(tokens[2])])
                elif tag == "f":
                    if len(tokens) != 4:
                        raise ValueError("only triangle faces are supported")
                    vv, tt = zip(*(_parse_face_token(t) for t in tokens[1:]))
                    faces.append(vv)
                    face_uvs.append(tt)
                elif tag == "mtllib":
                    mtl_name = tokens[1]
            except (ValueError, IndexError) as exc:
                raise MalformedMeshError(f"{path}:{lineno}: {exc}") from exc
    verts = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    faces_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    # OBJ indices are 1-based; negative indices count from the end
    faces_arr = np.where(faces_arr > 0, faces_arr - 1, faces_arr + len(verts))
    if faces_arr.size and (faces_arr.min() < 0 or faces_arr.max() >= len(verts)):
        raise MalformedMeshError(f"{path}: triangle index out of range")

    uv_coords = None
    if uvs and any(t[0] is not None for t in face_uvs):
        uvs = np.asarray(uvs, dtype=np.float64)
        uv_idx = []
        for t in face_uvs:
            if any(x is None for x in t):
                raise MalformedMeshError(f"{path}: mixed faces with and without UVs")
            uv_idx.append(t)
        uv_idx = np.asarray(uv_idx, dtype=np.int64)
        uv_idx = np.where(uv_idx > 0, uv_idx - 1, uv_idx + len(uvs))
        if uv_idx.size and (uv_idx.min() < 0 or uv_idx.max() >= len(uvs)):
            raise MalformedMeshError(f"{path}: uv index out of range")
        uv_coords = np.clip(uvs[uv_idx], 0.0, 1.0)

    atlas = None
    if mtl_name is not None:
        mtl_path = os.path.join(os.path.dirname(path), mtl_name)
        if not os.path.isfile(mtl_path):
            raise MissingAtlasError(f"material file not found: {mtl_path}")
        tex_name = None
        with open(mtl_path) as fh:
            for line in fh:
                tokens = line.split()
                if tokens and tokens[0] == "map_Kd":
                    tex_name = tokens[1]
        if tex_name is None:
            raise MissingAtlasError(f"{mtl_path}: no map_Kd entry")
        tex_path = os.path.join(os.path.dirname(path), tex_name)
        if not os.path.isfile(tex_path):
            raise MissingAtlasError(f"atlas image not found: {tex_path}")
        img = Image.open(tex_path).convert("RGB")
        atlas = np.asarray(img, dtype=np.float32) / 255.0

    try:
        return TexturedMesh(
            vertices=verts,
            triangles=faces_arr,
            uv_coords=uv_coords,
            atlas=atlas,
            vertex_colors=np.asarray(colors, dtype=np.float64) if len(colors) == len(verts) and colors else None,
        )
    except MalformedMeshError:
        raise
