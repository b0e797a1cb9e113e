"""Exact mesh proximity and ray queries: closest points, segment casts, winding."""

import numpy as np
from scipy.spatial import cKDTree


def closest_point_on_triangles(points, corners):
    """Closest point on each triangle for each paired query point.

    points  (M, 3); corners (M, 3, 3) one triangle per point.
    Returns (closest (M, 3), barycentric (M, 3)).
    Vectorized form of the standard region-based closest-point test.
    """
    p = np.asarray(points, dtype=np.float64)
    a = corners[:, 0]
    b = corners[:, 1]
    c = corners[:, 2]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("md,md->m", ab, ap)
    d2 = np.einsum("md,md->m", ac, ap)
    bp = p - b
    d3 = np.einsum("md,md->m", ab, bp)
    d4 = np.einsum("md,md->m", ac, bp)
    cp = p - c
    d5 = np.einsum("md,md->m", ab, cp)
    d6 = np.einsum("md,md->m", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    m = len(p)
    u = np.empty(m)
    v = np.empty(m)
    done = np.zeros(m, dtype=bool)

    # vertex regions
    reg_a = (d1 <= 0) & (d2 <= 0)
    u[reg_a], v[reg_a] = 0.0, 0.0
    done |= reg_a
    reg_b = ~done & (d3 >= 0) & (d4 <= d3)
    u[reg_b], v[reg_b] = 1.0, 0.0
    done |= reg_b
    reg_c = ~done & (d6 >= 0) & (d5 <= d6)
    u[reg_c], v[reg_c] = 0.0, 1.0
    done |= reg_c

    # edge AB
    reg_ab = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    denom = d1 - d3
    t_ab = np.divide(d1, denom, out=np.zeros(m), where=denom != 0)
    u[reg_ab], v[reg_ab] = t_ab[reg_ab], 0.0
    done |= reg_ab
    # edge AC
    reg_ac = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    denom = d2 - d6
    t_ac = np.divide(d2, denom, out=np.zeros(m), where=denom != 0)
    u[reg_ac], v[reg_ac] = 0.0, t_ac[reg_ac]
    done |= reg_ac
    # edge BC
    reg_bc = ~done & (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    denom = (d4 - d3) + (d5 - d6)
    t_bc = np.divide(d4 - d3, denom, out=np.zeros(m), where=denom != 0)
    u[reg_bc], v[reg_bc] = 1.0 - t_bc[reg_bc], t_bc[reg_bc]
    done |= reg_bc

    # interior
    inside = ~done
    denom = va + vb + vc
    safe = np.where(denom == 0, 1.0, denom)
    u[inside] = (vb / safe)[inside]
    v[inside] = (vc / safe)[inside]

    closest = a + ab * u[:, None] + ac * v[:, None]
    bary = np.column_stack([1.0 - u - v, u, v])
    return closest, bary


class MeshProximity:
    """Exact point-to-surface queries against one mesh, KD-tree pruned."""

    def __init__(self, mesh):
        if len(mesh.triangles) == 0:
            raise ValueError("mesh has no triangles")
        self.mesh = mesh
        self.corners = mesh.triangle_corners()
        self.centroids = self.corners.mean(axis=1)
        # conservative per-tree radius bound: centroid-to-farthest-corner
        self.tri_radius = np.linalg.norm(self.corners - self.centroids[:, None, :], axis=2).max(axis=1)
        self.max_radius = float(self.tri_radius.max())
        self.tree = cKDTree(self.centroids)

    def closest(self, points):
        """Exact closest surface point for each query.

        Returns (distances (M,), faces (M,), closest points (M, 3),
        barycentric (M, 3)). Candidate triangles come from an upper bound
        via the nearest centroid, then a conservative radius search, so the
        result is exact.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        m = len(points)
        _, nearest = self.tree.query(points)
        cp0, _ = closest_point_on_triangles(points, self.corners[nearest])
        upper = np.linalg.norm(points - cp0, axis=1)

        best_d = upper.copy()
        best_face = nearest.copy()
        best_pt = cp0.copy()

        radii = upper + self.max_radius + 1e-12
        candidates = self.tree.query_ball_point(points, radii)
        pt_idx = np.concatenate([np.full(len(c), i) for i, c in enumerate(candidates)]) if m else np.zeros(0, int)
        tri_idx = np.concatenate([np.asarray(c, dtype=np.int64) for c in candidates]) if m else np.zeros(0, int)
        if len(pt_idx):
            cp, _ = closest_point_on_triangles(points[pt_idx], self.corners[tri_idx])
            d = np.linalg.norm(points[pt_idx] - cp, axis=1)
            order = np.lexsort((d, pt_idx))
            pt_sorted = pt_idx[order]
            first = np.searchsorted(pt_sorted, np.arange(m), side="left")
            last = np.searchsorted(pt_sorted, np.arange(m), side="right")
            has = last > first
            sel = order[first[has]]
            better = d[sel] <= best_d[has]
            rows = np.flatnonzero(has)[better]
            take = sel[better]
            best_d[rows] = d[take]
            best_face[rows] = tri_idx[take]
            best_pt[rows] = cp[take]
        _, bary = closest_point_on_triangles(points, self.corners[best_face])
        return best_d, best_face, best_pt, bary


def segment_cast(origins, directions, corners, t_min, t_max, eps=1e-12):
    """Nearest |t| triangle hit for rays origin + t * direction, t in [t_min, t_max].

    corners is (T, 3, 3); tests all (ray, triangle) pairs, so callers should
    pre-prune. Returns (hit mask (M,), t (M,), face (M,), barycentric (M, 3)).
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    m = len(origins)
    tcount = len(corners)
    hit = np.zeros(m, dtype=bool)
    t_best = np.full(m, np.inf)
    face = np.full(m, -1, dtype=np.int64)
    bary = np.zeros((m, 3))
    if tcount == 0 or m == 0:
        return hit, t_best, face, bary

    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    # Moeller-Trumbore over the full (ray, tri) product
    d = directions[:, None, :]
    pvec = np.cross(d, e2[None, :, :])
    det = np.einsum("td,mtd->mt", e1, pvec)
    ok = np.abs(det) > eps
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origins[:, None, :] - v0[None, :, :]
    u = np.einsum("mtd,mtd->mt", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1[None, :, :])
    v = np.einsum("mtd,mtd->mt", directions[:, None, :], qvec) * inv_det
    t = np.einsum("td,mtd->mt", e2, qvec) * inv_det
    tol = 1e-9
    valid = ok & (u >= -tol) & (v >= -tol) & (u + v <= 1 + tol) & (t >= t_min) & (t <= t_max)
    abs_t = np.where(valid, np.abs(t), np.inf)
    best = abs_t.argmin(axis=1)
    rows = np.arange(m)
    found = valid[rows, best]
    hit[found] = True
    t_best[found] = t[rows, best][found]
    face[found] = best[found]
    uu = u[rows, best][found]
    vv = v[rows, best][found]
    bary[found] = np.column_stack([1.0 - uu - vv, uu, vv])
    return hit, t_best, face, bary


def segment_cast_pairs(origins, directions, corners, t_min, t_max, eps=1e-12):
    """Row-aligned Moeller-Trumbore: ray i against triangle i.

    All arguments are (P, ...) arrays. Returns (valid (P,), t (P,),
    barycentric (P, 3)).
    """
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    pvec = np.cross(directions, e2)
    det = np.einsum("pd,pd->p", e1, pvec)
    ok = np.abs(det) > eps
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origins - v0
    u = np.einsum("pd,pd->p", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1)
    v = np.einsum("pd,pd->p", directions, qvec) * inv_det
    t = np.einsum("pd,pd->p", e2, qvec) * inv_det
    tol = 1e-9
    valid = ok & (u >= -tol) & (v >= -tol) & (u + v <= 1 + tol) & (t >= t_min) & (t <= t_max)
    bary = np.column_stack([1.0 - u - v, u, v])
    return valid, t, bary


class MeshRayCaster:
    """Short-segment ray casting against a mesh, KD-tree pruned per origin."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.corners = mesh.triangle_corners() if len(mesh.triangles) else np.zeros((0, 3, 3))
        if len(self.corners):
            self.centroids = self.corners.mean(axis=1)
            self.max_radius = float(
                np.linalg.norm(self.corners - self.centroids[:, None, :], axis=2).max())
            self.tree = cKDTree(self.centroids)
        else:
            self.tree = None

    def cast_bidirectional(self, origins, directions, max_distance, chunk=8192):
        """Nearest-|t| hit with |t| <= max_distance along +/- direction.

        Returns (hit (M,), t (M,), face (M,), barycentric (M, 3)).
        """
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        m = len(origins)
        hit = np.zeros(m, dtype=bool)
        t_out = np.full(m, np.inf)
        face = np.full(m, -1, dtype=np.int64)
        bary = np.zeros((m, 3))
        if self.tree is None or m == 0:
            return hit, t_out, face, bary
        radius = max_distance + self.max_radius + 1e-12
        for start in range(0, m, chunk):
            sl = slice(start, min(start + chunk, m))
            pts = origins[sl]
            dirs = directions[sl]
            cand_lists = self.tree.query_ball_point(pts, radius)
            ray_idx = np.concatenate(
                [np.full(len(c), i) for i, c in enumerate(cand_lists)]
            ) if len(pts) else np.zeros(0, dtype=np.int64)
            ray_idx = ray_idx.astype(np.int64)
            tri_idx = np.concatenate(
                [np.asarray(c, dtype=np.int64) for c in cand_lists]
            ) if len(pts) else np.zeros(0, dtype=np.int64)
            if len(ray_idx) == 0:
                continue
            valid, t, bary_p = segment_cast_pairs(
                pts[ray_idx], dirs[ray_idx], self.corners[tri_idx],
                -max_distance, max_distance)
            if not valid.any():
                continue
            ray_v = ray_idx[valid]
            t_v = t[valid]
            order = np.lexsort((np.abs(t_v), ray_v))
            ray_sorted = ray_v[order]
            keep = np.ones(len(ray_sorted), dtype=bool)
            keep[1:] = ray_sorted[1:] != ray_sorted[:-1]
            sel = order[keep]
            rows = start + ray_v[sel]
            hit[rows] = True
            t_out[rows] = t_v[sel]
            face[rows] = tri_idx[valid][sel]
            bary[rows] = bary_p[valid][sel]
        return hit, t_out, face, bary


def winding_numbers(mesh, points, chunk=1024):
    """Generalized winding number of each point w.r.t. the mesh surface.

    Uses the solid-angle formula summed over triangles; ~|w| >= 0.5 means
    inside for closed meshes of either orientation.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    corners = mesh.triangle_corners()
    out = np.empty(len(points))
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk]
        a = corners[None, :, 0, :] - p[:, None, :]
        b = corners[None, :, 1, :] - p[:, None, :]
        c = corners[None, :, 2, :] - p[:, None, :]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        det = np.einsum("mtd,mtd->mt", a, np.cross(b, c))
        denom = (la * lb * lc + np.einsum("mtd,mtd->mt", a, b) * lc
                 + np.einsum("mtd,mtd->mt", b, c) * la
                 + np.einsum("mtd,mtd->mt", c, a) * lb)
        omega = 2.0 * np.arctan2(det, denom)
        out[start:start + chunk] = omega.sum(axis=1) / (4.0 * np.pi)
    return out


def contains(mesh, points, chunk=1024):
    """Boolean containment of points in a closed mesh via winding numbers."""
    return np.abs(winding_numbers(mesh, points, chunk=chunk)) >= 0.5
