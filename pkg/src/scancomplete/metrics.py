"""Shape, texture, area, and final scores for completed scans."""

import json
from dataclasses import dataclass, field

import numpy as np

from .intersect import MeshProximity
from .mesh import MeshError
from .sampling import color_at, sample_surface_points

D0_SHAPE = 0.05    # normalized-unit distance mapped to score 0
D0_TEXTURE = 0.25  # RGB-L2 difference mapped to score 0


class FrameMismatchError(MeshError):
    pass


@dataclass
class DistanceSamples:
    """Bidirectional surface-to-surface distance and color-difference samples."""

    pred_to_gt: np.ndarray
    gt_to_pred: np.ndarray
    color_pred_to_gt: np.ndarray | None
    color_gt_to_pred: np.ndarray | None


@dataclass
class ScoreReport:
    """Per-scan scores; the final score is 0.5 * S_a * (S_s + S_t)."""

    name: str
    shape_score: float
    texture_score: float
    area_score: float
    final_score: float
    sample_count: int
    mean_distance: float
    max_distance: float
    d0_shape: float = D0_SHAPE
    d0_texture: float = D0_TEXTURE

    def __post_init__(self):
        expected = 0.5 * self.area_score * (self.shape_score + self.texture_score)
        if abs(self.final_score - expected) > 1e-9:
            raise ValueError("final score must equal 0.5 * S_a * (S_s + S_t)")

    def to_json(self):
        return json.dumps({
            "name": self.name,
            "shape_score": self.shape_score,
            "texture_score": self.texture_score,
            "area_score": self.area_score,
            "final_score": self.final_score,
            "sample_count": self.sample_count,
            "mean_distance": self.mean_distance,
            "max_distance": self.max_distance,
            "d0_shape": self.d0_shape,
            "d0_texture": self.d0_texture,
        })

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _check_frames(pred, gt):
    lo_p, hi_p = pred.bounds()
    lo_g, hi_g = gt.bounds()
    size_g = np.maximum(hi_g - lo_g, 1e-9).max()
    if np.abs((lo_p + hi_p) / 2 - (lo_g + hi_g) / 2).max() > 0.5 * size_g:
        raise FrameMismatchError("prediction and ground truth are in different frames")
    size_p = np.maximum(hi_p - lo_p, 1e-9).max()
    if size_p > 2.0 * size_g or size_g > 2.0 * size_p:
        raise FrameMismatchError("prediction and ground truth differ wildly in scale")


_FP_RESIDUE = 1e-12  # closest-point rounding floor; true zeros stay zeros


def _one_direction(src, dst, count, seed):
    samples = sample_surface_points(src, count, seed=seed)
    prox = MeshProximity(dst)
    dist, faces, _, bary = prox.closest(samples.positions)
    dist[dist < _FP_RESIDUE] = 0.0
    colors = None
    if samples.colors is not None:
        try:
            dst_colors = color_at(dst, faces, bary)
            colors = np.linalg.norm(samples.colors - dst_colors, axis=1)
            colors[colors < _FP_RESIDUE] = 0.0
        except MeshError:
            colors = None
    return dist, colors


def surface_distance_samples(pred, gt, count=10000, seed=0):
    """Nearest-surface distances and RGB-L2 differences, both directions.

    Each direction samples exactly `count` area-uniform points on one mesh
    and finds the exact closest point on the other; colors are read at both
    ends of the correspondence when available.
    """
    if pred.is_empty() or gt.is_empty():
        raise MeshError("both meshes must be non-empty")
    _check_frames(pred, gt)
    d_pg, c_pg = _one_direction(pred, gt, count, seed)
    d_gp, c_gp = _one_direction(gt, pred, count, seed + 1)
    return DistanceSamples(pred_to_gt=d_pg, gt_to_pred=d_gp,
                           color_pred_to_gt=c_pg, color_gt_to_pred=c_gp)


def distance_to_score(values, d0):
    """Clamped-linear mapping: mean of max(0, 1 - v / d0) over the samples."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    return float(np.maximum(0.0, 1.0 - values / d0).mean())


def area_score(pred, gt):
    """Ratio of total surface areas, min over max."""
    a_pred = pred.surface_area() if not pred.is_empty() else 0.0
    a_gt = gt.surface_area() if not gt.is_empty() else 0.0
    if a_pred <= 0 or a_gt <= 0:
        return 0.0
    return float(min(a_pred, a_gt) / max(a_pred, a_gt))


def final_score(shape, texture, area):
    return 0.5 * area * (shape + texture)


def evaluate_pair(pred, gt, count=10000, seed=0, name="scan",
                  d0_shape=D0_SHAPE, d0_texture=D0_TEXTURE):
    """Full ScoreReport for one (prediction, ground truth) pair."""
    if pred.is_empty():
        return ScoreReport(name=name, shape_score=0.0, texture_score=0.0,
                           area_score=0.0, final_score=0.0, sample_count=0,
                           mean_distance=float("inf"), max_distance=float("inf"),
                           d0_shape=d0_shape, d0_texture=d0_texture)
    ds = surface_distance_samples(pred, gt, count=count, seed=seed)
    dist = np.concatenate([ds.pred_to_gt, ds.gt_to_pred])
    s_shape = distance_to_score(dist, d0_shape)
    if ds.color_pred_to_gt is not None and ds.color_gt_to_pred is not None:
        cdiff = np.concatenate([ds.color_pred_to_gt, ds.color_gt_to_pred])
        s_tex = distance_to_score(cdiff, d0_texture)
    else:
        s_tex = 0.0
    s_area = area_score(pred, gt)
    return ScoreReport(
        name=name,
        shape_score=s_shape,
        texture_score=s_tex,
        area_score=s_area,
        final_score=final_score(s_shape, s_tex, s_area),
        sample_count=int(len(dist)),
        mean_distance=float(dist.mean()),
        max_distance=float(dist.max()),
        d0_shape=d0_shape,
        d0_texture=d0_texture,
    )


def aggregate_reports(reports):
    """Mean and standard deviation per score across scans (as percentages)."""
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    for key in ("shape_score", "texture_score", "area_score", "final_score"):
        vals = np.array([getattr(r, key) for r in reports]) * 100.0
        out[key] = (float(vals.mean()), float(vals.std()))
    return out


def format_score_table(rows, header=None):
    """Paper-style table: one row per method/scan with mean +/- std columns.

    `rows` is a list of (label, aggregate dict from aggregate_reports).
    """
    cols = ["shape_score", "area_score", "texture_score", "final_score"]
    titles = ["Method", "Shape(%)", "Area(%)", "Texture(%)", "Final(%)"]
    lines = []
    if header:
        lines.append(header)
    width = max([len(t) for t in titles] + [len(label) for label, _ in rows]) + 2
    lines.append("".join(t.ljust(width + 8) if i else t.ljust(width) for i, t in enumerate(titles)))
    for label, agg in rows:
        cells = [label.ljust(width)]
        for c in cols:
            mean, std = agg[c]
            cells.append(f"{mean:6.2f} +/- {std:5.2f}".ljust(width + 8))
        lines.append("".join(cells))
    return "\n".join(lines)
