"""Procedural textured mesh fixtures: the in-repo desk-scale dataset."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import TexturedMesh
from .uvatlas import generate_uv_atlas, rasterize_uv, texel_positions, dilate_into_uncovered


def sphere_mesh(segments=24, rings=20, radius=1.0):
    """Closed lat-long sphere; (24, 20) gives 482 vertices / 960 triangles."""
    verts = [(0.0, 0.0, radius)]
    for k in range(1, rings + 1):
        theta = np.pi * k / (rings + 1)
        z = radius * np.cos(theta)
        r = radius * np.sin(theta)
        for s in range(segments):
            phi = 2 * np.pi * s / segments
            verts.append((r * np.cos(phi), r * np.sin(phi), z))
    verts.append((0.0, 0.0, -radius))
    bottom = len(verts) - 1

    def ring_vert(k, s):
        return 1 + (k - 1) * segments + (s % segments)

    faces = []
    for s in range(segments):
        faces.append((0, ring_vert(1, s), ring_vert(1, s + 1)))
    for k in range(1, rings):
        for s in range(segments):
            a = ring_vert(k, s)
            b = ring_vert(k, s + 1)
            c = ring_vert(k + 1, s)
            d = ring_vert(k + 1, s + 1)
            faces.append((a, c, b))
            faces.append((b, c, d))
    for s in range(segments):
        faces.append((bottom, ring_vert(rings, s + 1), ring_vert(rings, s)))
    return TexturedMesh(vertices=np.array(verts), triangles=np.array(faces))


def box_mesh(extents=(1.0, 1.0, 1.0)):
    """Axis-aligned box centered at the origin, 12 triangles."""
    e = np.asarray(extents, dtype=np.float64) / 2.0
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) * e
    # index bits: x*4 + y*2 + z
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TexturedMesh(vertices=corners, triangles=np.array(faces))


def capsule_mesh(radius=0.5, height=1.0, segments=20, rings=15):
    """Sphere stretched along z into a capsule-like closed solid."""
    if rings % 2 == 0:
        rings += 1  # keep an equator ring so the wall splits evenly
    base = sphere_mesh(segments=segments, rings=rings, radius=radius)
    v = base.vertices.copy()
    v[:, 2] += np.where(v[:, 2] > 1e-12, height / 2.0, np.where(v[:, 2] < -1e-12, -height / 2.0, 0.0))
    return TexturedMesh(vertices=v, triangles=base.triangles.copy())


def ellipsoid_mesh(radii=(0.8, 0.5, 1.0), segments=24, rings=18):
    base = sphere_mesh(segments=segments, rings=rings, radius=1.0)
    v = base.vertices * np.asarray(radii)
    return TexturedMesh(vertices=v, triangles=base.triangles.copy())


def plane_mesh(nx=32, ny=32, size=1.0):
    """Open unit plane grid in the XY plane at z=0 (not watertight)."""
    xs = np.linspace(-size / 2, size / 2, nx + 1)
    ys = np.linspace(-size / 2, size / 2, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            faces.append((a, b, a + 1))
            faces.append((a + 1, b, b + 1))
    return TexturedMesh(vertices=verts, triangles=np.array(faces))


def checker_field(period=0.25, color_a=(0.9, 0.1, 0.1), color_b=(0.95, 0.95, 0.95)):
    a = np.asarray(color_a)
    b = np.asarray(color_b)

    def field(points):
        cells = np.floor(points / period).astype(np.int64).sum(axis=1)
        return np.where((cells % 2 == 0)[:, None], a, b)

    return field


def stripe_field(axis=2, period=0.2, color_a=(0.1, 0.2, 0.8), color_b=(0.9, 0.8, 0.2)):
    a = np.asarray(color_a)
    b = np.asarray(color_b)

    def field(points):
        band = np.floor(points[:, axis] / period).astype(np.int64)
        return np.where((band % 2 == 0)[:, None], a, b)

    return field


def gradient_field(axis=2, lo_color=(0.05, 0.3, 0.1), hi_color=(0.9, 0.9, 0.3)):
    lo = np.asarray(lo_color)
    hi = np.asarray(hi_color)

    def field(points):
        x = points[:, axis]
        span = max(x.max() - x.min(), 1e-9)
        t = ((x - x.min()) / span)[:, None]
        return lo * (1 - t) + hi * t

    return field


def solid_field(color):
    c = np.asarray(color, dtype=np.float64)

    def field(points):
        return np.tile(c, (len(points), 1))

    return field


def bake_atlas(mesh, color_field, atlas_resolution=256):
    """Attach a fresh UV layout and paint the atlas from a 3D color field."""
    out = generate_uv_atlas(mesh, atlas_resolution=atlas_resolution)
    face_map, bary_map, _ = rasterize_uv(out, atlas_resolution)
    covered = face_map >= 0
    positions = texel_positions(out, face_map, bary_map)
    atlas = np.full((atlas_resolution, atlas_resolution, 3), 0.5, dtype=np.float32)
    atlas[covered] = np.clip(color_field(positions[covered]), 0.0, 1.0)
    atlas = dilate_into_uncovered(atlas, covered, iterations=2).astype(np.float32)
    out.atlas = atlas
    return out


@dataclass
class Fixture:
    name: str
    mesh: TexturedMesh
    contains: Callable | None = None  # analytic containment in raw coords


def _sphere_contains(radius):
    def fn(points):
        return np.linalg.norm(np.asarray(points, dtype=np.float64), axis=1) <= radius
    return fn


def _box_contains(extents):
    e = np.asarray(extents) / 2.0

    def fn(points):
        return (np.abs(np.asarray(points, dtype=np.float64)) <= e + 1e-12).all(axis=1)
    return fn


def _capsule_contains(radius, height):
    def fn(points):
        p = np.asarray(points, dtype=np.float64)
        z = np.clip(p[:, 2], -height / 2.0, height / 2.0)
        axis_pt = np.column_stack([np.zeros(len(p)), np.zeros(len(p)), z])
        return np.linalg.norm(p - axis_pt, axis=1) <= radius
    return fn


def _ellipsoid_contains(radii):
    r = np.asarray(radii, dtype=np.float64)

    def fn(points):
        p = np.asarray(points, dtype=np.float64)
        return (np.square(p / r).sum(axis=1)) <= 1.0
    return fn


_PALETTES = [
    ((0.85, 0.15, 0.1), (0.95, 0.92, 0.88)),
    ((0.1, 0.25, 0.8), (0.9, 0.85, 0.2)),
    ((0.1, 0.6, 0.3), (0.95, 0.95, 0.95)),
    ((0.7, 0.2, 0.7), (0.15, 0.85, 0.8)),
    ((0.95, 0.55, 0.1), (0.15, 0.15, 0.2)),
]


def make_fixture(index, atlas_resolution=256):
    """Deterministic fixture `index`: cycles shape kinds and texture styles."""
    kind = index % 4
    pal_a, pal_b = _PALETTES[index % len(_PALETTES)]
    rng = np.random.default_rng(1000 + index)
    if kind == 0:
        radius = 0.8 + 0.2 * rng.random()
        mesh = sphere_mesh(radius=radius)
        contains = _sphere_contains(radius)
        field = checker_field(period=0.85 * radius, color_a=pal_a, color_b=pal_b)
        name = f"sphere_{index:03d}"
    elif kind == 1:
        extents = 0.8 + 0.6 * rng.random(3)
        mesh = box_mesh(extents)
        contains = _box_contains(extents)
        field = stripe_field(axis=int(rng.integers(3)), period=0.4, color_a=pal_a, color_b=pal_b)
        name = f"box_{index:03d}"
    elif kind == 2:
        radius = 0.35 + 0.1 * rng.random()
        mesh = capsule_mesh(radius=radius, height=0.9)
        contains = _capsule_contains(radius, 0.9)
        field = gradient_field(axis=2, lo_color=pal_a, hi_color=pal_b)
        name = f"capsule_{index:03d}"
    else:
        radii = 0.5 + 0.5 * rng.random(3)
        mesh = ellipsoid_mesh(radii)
        contains = _ellipsoid_contains(radii)
        field = stripe_field(axis=2, period=0.55, color_a=pal_a, color_b=pal_b)
        name = f"ellipsoid_{index:03d}"
    mesh = bake_atlas(mesh, field, atlas_resolution=atlas_resolution)
    return Fixture(name=name, mesh=mesh, contains=contains)


def fixture_set(count, atlas_resolution=256, start=0):
    return [make_fixture(start + i, atlas_resolution=atlas_resolution) for i in range(count)]
