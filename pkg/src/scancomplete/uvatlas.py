"""Fresh UV layout generation: axis-aligned chart projection, shelf packing,
and UV-space rasterization used for baking and texture transfer."""

import numpy as np

from .mesh import MeshError, TexturedMesh


class UVPackingError(MeshError):
    pass


def _connected_components(num_faces, edges_by_face):
    """Union-find over faces linked when they share an edge."""
    parent = np.arange(num_faces)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for group in edges_by_face.values():
        base = group[0]
        rb = find(base)
        for other in group[1:]:
            ro = find(other)
            if ro != rb:
                parent[ro] = rb
    roots = np.fromiter((find(i) for i in range(num_faces)), dtype=np.int64, count=num_faces)
    return roots


def segment_charts(mesh):
    """Partition triangles into charts projectable along a dominant axis.

    Faces are grouped by (dominant normal axis, its sign) and split into
    edge-connected components. Returns (chart id per face, axis per face).
    The dominant-axis grouping bounds projective area distortion by sqrt(3).
    """
    normals = mesh.face_normals()
    axis = np.abs(normals).argmax(axis=1)
    sign = np.take_along_axis(normals, axis[:, None], axis=1)[:, 0] >= 0
    group = axis * 2 + sign.astype(np.int64)

    edge_faces = {}
    tri = mesh.triangles
    for f in range(len(tri)):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[f, a], tri[f, b]), max(tri[f, a], tri[f, b]), group[f])
            edge_faces.setdefault(key, []).append(f)
    roots = _connected_components(len(tri), edge_faces)
    _, chart = np.unique(roots, return_inverse=True)
    return chart, axis


def _project_chart(mesh, faces, axis):
    """Drop the dominant axis; returns (F, 3, 2) per-corner planar coords."""
    keep = [i for i in range(3) if i != axis]
    return mesh.vertices[mesh.triangles[faces]][:, :, keep]


def _triangles_overlap_2d(tri, others, eps):
    """Strict-interior overlap of one 2D triangle against a batch via SAT."""
    if len(others) == 0:
        return False
    polys = np.concatenate([tri[None], others], axis=0)
    edges = np.roll(polys, -1, axis=1) - polys  # (K, 3, 2)
    normals = np.stack([-edges[..., 1], edges[..., 0]], axis=-1)
    for k in range(len(others)):
        axes = np.concatenate([normals[0], normals[k + 1]], axis=0)
        pa = tri @ axes.T
        pb = others[k] @ axes.T
        sep = (pa.max(axis=0) <= pb.min(axis=0) + eps) | (pb.max(axis=0) <= pa.min(axis=0) + eps)
        if not sep.any():
            return True
    return False


def _resolve_overlaps(coords2d):
    """Greedily split a chart whose planar projection self-overlaps.

    Returns a list of index arrays into the chart's faces; each sub-chart is
    overlap-free. Triangles touching along edges do not count as overlaps.
    """
    n = len(coords2d)
    scale = max(coords2d.max() - coords2d.min(), 1e-12)
    eps = 1e-9 * scale
    buckets = [[0]]
    for i in range(1, n):
        placed = False
        for bucket in buckets:
            if not _triangles_overlap_2d(coords2d[i], coords2d[np.asarray(bucket)], eps):
                bucket.append(i)
                placed = True
                break
        if not placed:
            buckets.append([i])
    return [np.asarray(b, dtype=np.int64) for b in buckets]


def _raster_overlap_count(coords2d, res=128):
    """Count texels strictly covered by more than one triangle."""
    lo = coords2d.reshape(-1, 2).min(axis=0)
    hi = coords2d.reshape(-1, 2).max(axis=0)
    span = max((hi - lo).max(), 1e-12)
    pts = (coords2d - lo) / span * (res - 1)
    count = np.zeros((res, res), dtype=np.int32)
    for t in range(len(pts)):
        count_cover(pts[t], count)
    return int((count > 1).sum())


def count_cover(tri, count):
    lo = np.floor(tri.min(axis=0)).astype(int)
    hi = np.ceil(tri.max(axis=0)).astype(int)
    lo = np.clip(lo, 0, count.shape[0] - 1)
    hi = np.clip(hi, 0, count.shape[0] - 1)
    if (hi < lo).any():
        return
    xs = np.arange(lo[0], hi[0] + 1)
    ys = np.arange(lo[1], hi[1] + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    p = np.stack([gx.ravel(), gy.ravel()], axis=1).astype(np.float64)
    w = _barycentric_2d(tri, p)
    inside = (w > 1e-4).all(axis=1)
    count[gx.ravel()[inside], gy.ravel()[inside]] += 1


def _barycentric_2d(tri, points):
    """Barycentric weights of 2D points w.r.t. a 2D triangle."""
    d = tri[1] - tri[0]
    e = tri[2] - tri[0]
    denom = d[0] * e[1] - d[1] * e[0]
    if abs(denom) < 1e-30:
        return np.full((len(points), 3), -1.0)
    r = points - tri[0]
    w1 = (r[:, 0] * e[1] - r[:, 1] * e[0]) / denom
    w2 = (d[0] * r[:, 1] - d[1] * r[:, 0]) / denom
    return np.column_stack([1.0 - w1 - w2, w1, w2])


def _shelf_pack(sizes, atlas_res, gutter):
    """Shelf-pack boxes of float sizes; returns offsets or None when unfit."""
    order = np.argsort(-sizes[:, 1], kind="stable")
    offsets = np.zeros_like(sizes)
    x = gutter
    y = gutter
    shelf_h = 0.0
    for i in order:
        w, h = sizes[i]
        if w + 2 * gutter > atlas_res:
            return None
        if x + w + gutter > atlas_res:
            x = gutter
            y += shelf_h + gutter
            shelf_h = 0.0
        if y + h + gutter > atlas_res:
            return None
        offsets[i] = (x, y)
        x += w + gutter
        shelf_h = max(shelf_h, h)
    return offsets


def generate_uv_atlas(mesh, atlas_resolution=256, gutter=2):
    """Assign a fresh non-overlapping UV layout and attach a blank atlas.

    Charts are planar projections of dominant-axis connected components,
    shelf packed at the largest uniform scale that fits. Projection keeps
    per-triangle texel density within a factor 2 across the mesh.
    """
    if len(mesh.triangles) == 0:
        out = mesh.copy()
        out.uv_coords = np.zeros((0, 3, 2))
        out.atlas = np.zeros((atlas_resolution, atlas_resolution, 3), dtype=np.float32)
        return out

    chart_of_face, axis = segment_charts(mesh)
    charts = []
    for cid in range(chart_of_face.max() + 1):
        faces = np.flatnonzero(chart_of_face == cid)
        coords = _project_chart(mesh, faces, axis[faces[0]])
        if _raster_overlap_count(coords) > 0:
            for sub in _resolve_overlaps(coords):
                charts.append((faces[sub], coords[sub]))
        else:
            charts.append((faces, coords))

    mins = np.array([c.reshape(-1, 2).min(axis=0) for _, c in charts])
    spans = np.array([c.reshape(-1, 2).max(axis=0) for _, c in charts]) - mins
    spans = np.maximum(spans, 1e-12)

    def fits(scale):
        return _shelf_pack(spans * scale, atlas_resolution, gutter) is not None

    hi = (atlas_resolution - 2 * gutter) / spans.max()
    if not fits(min(hi, 1e-9)):
        raise UVPackingError("charts cannot be packed at the given atlas resolution")
    lo = 0.0
    for _ in range(48):
        mid = (lo + hi) / 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    scale = lo * 0.995
    if not fits(scale) or scale * spans.min() < 1e-6:
        raise UVPackingError("charts cannot be packed at the given atlas resolution")
    offsets = _shelf_pack(spans * scale, atlas_resolution, gutter)

    uv = np.zeros((len(mesh.triangles), 3, 2))
    for k, (faces, coords) in enumerate(charts):
        local = (coords - mins[k]) * scale + offsets[k]
        u = local[..., 0] / atlas_resolution
        v = local[..., 1] / atlas_resolution
        uv[faces, :, 0] = u
        uv[faces, :, 1] = v
    uv = np.clip(uv, 0.0, 1.0)

    out = mesh.copy()
    out.uv_coords = uv
    out.atlas = np.zeros((atlas_resolution, atlas_resolution, 3), dtype=np.float32)
    return out


def rasterize_uv(mesh, resolution):
    """Rasterize the UV layout onto a texel grid.

    Returns (face_map (R, R) int64 with -1 for uncovered texels,
    bary_map (R, R, 3), cover_count (R, R) overlap counter). A texel is
    covered when its center lies inside a UV triangle; image row 0 is v=1.
    """
    if mesh.uv_coords is None:
        raise MeshError("mesh has no UV coordinates")
    res = int(resolution)
    face_map = np.full((res, res), -1, dtype=np.int64)
    bary_map = np.zeros((res, res, 3))
    cover = np.zeros((res, res), dtype=np.int32)
    for t in range(len(mesh.triangles)):
        uv = mesh.uv_coords[t]
        cols = uv[:, 0] * res - 0.5
        rows = (1.0 - uv[:, 1]) * res - 0.5
        tri = np.column_stack([rows, cols])
        lo = np.clip(np.floor(tri.min(axis=0)).astype(int), 0, res - 1)
        hi = np.clip(np.ceil(tri.max(axis=0)).astype(int), 0, res - 1)
        rr = np.arange(lo[0], hi[0] + 1)
        cc = np.arange(lo[1], hi[1] + 1)
        if len(rr) == 0 or len(cc) == 0:
            continue
        gr, gc = np.meshgrid(rr, cc, indexing="ij")
        pts = np.stack([gr.ravel(), gc.ravel()], axis=1).astype(np.float64)
        w = _barycentric_2d(tri, pts)
        inside = (w >= -1e-9).all(axis=1)
        if not inside.any():
            continue
        r_in = gr.ravel()[inside]
        c_in = gc.ravel()[inside]
        w_in = w[inside]
        strict = (w_in > 1e-7).all(axis=1)
        cover[r_in[strict], c_in[strict]] += 1
        fresh = face_map[r_in, c_in] < 0
        face_map[r_in[fresh], c_in[fresh]] = t
        bary_map[r_in[fresh], c_in[fresh]] = w_in[fresh]
    return face_map, bary_map, cover


def texel_positions(mesh, face_map, bary_map):
    """3D surface position of every covered texel; uncovered rows are zero."""
    covered = face_map >= 0
    faces = face_map[covered]
    bary = bary_map[covered]
    corners = mesh.vertices[mesh.triangles[faces]]
    pts = np.einsum("mk,mkd->md", bary, corners)
    out = np.zeros(face_map.shape + (3,))
    out[covered] = pts
    return out


def dilate_into_uncovered(image, covered, iterations=2):
    """Spread covered texel colors into the uncovered margin (in place copy).

    Keeps bilinear lookups near chart borders from bleeding into background.
    """
    img = image.copy()
    cov = covered.copy()
    for _ in range(iterations):
        if cov.all():
            break
        acc = np.zeros_like(img, dtype=np.float64)
        cnt = np.zeros(cov.shape, dtype=np.int32)
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            shifted = np.roll(cov, (dr, dc), axis=(0, 1))
            simg = np.roll(img, (dr, dc), axis=(0, 1))
            if dr == 1:
                shifted[0, :] = False
            elif dr == -1:
                shifted[-1, :] = False
            if dc == 1:
                shifted[:, 0] = False
            elif dc == -1:
                shifted[:, -1] = False
            take = shifted & ~cov
            acc[take] += simg[take]
            cnt[take] += 1
        newly = cnt > 0
        img[newly] = acc[newly] / cnt[newly][:, None]
        cov |= newly
    return img
