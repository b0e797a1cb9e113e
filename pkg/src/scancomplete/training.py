"""Query banks, losses, and the joint optimization loop."""

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .intersect import contains as winding_contains
from .isosurface import boundary_edge_fraction
from .mesh import MeshError
from .nets import grid_sample_features, save_checkpoint
from .sampling import sample_surface_points
from .voxelize import voxelize_color, voxelize_occupancy

log = logging.getLogger(__name__)


class UnnormalizedInputError(MeshError):
    pass


class NonWatertightMeshError(MeshError):
    pass


class NonFiniteLossError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 54
    subsample: int = 50000
    bank_size: int = 100000
    noise_sigmas: tuple = (0.01, 0.1)
    batch_size: int = 4
    seed: int = 0
    checkpoint_every: int = 1
    fuse_shape: bool = True

    def __post_init__(self):
        if self.subsample > self.bank_size:
            raise ValueError("subsample cannot exceed the bank size")


@dataclass
class TrainingSample:
    """Partial-scan voxel grids plus the cached ground-truth point bank."""

    name: str
    occupancy: np.ndarray       # (N, N, N) uint8
    colors: np.ndarray          # (N, N, N, 3) float32
    shape_points: np.ndarray    # (bank, 3) noisy ground-truth surface points
    shape_labels: np.ndarray    # (bank,) containment in {0, 1}
    texture_points: np.ndarray  # (bank, 3) surface points, no noise
    texture_colors: np.ndarray  # (bank, 3) in [0, 1]

    def __post_init__(self):
        if not np.isin(np.unique(self.shape_labels), [0, 1]).all():
            raise ValueError("occupancy labels must be 0 or 1")
        if self.texture_colors.min() < 0 or self.texture_colors.max() > 1:
            raise ValueError("texture labels must lie in [0, 1]")


def _check_normalized(mesh, what):
    lo, hi = mesh.bounds()
    if lo.min() < -0.5 - 1e-6 or hi.max() > 0.5 + 1e-6:
        raise UnnormalizedInputError(
            f"{what} mesh is not normalized into [-0.5, 0.5]^3 (bounds {lo}, {hi})")


def build_training_sample(gt_mesh, partial_mesh, resolution, seed,
                          contains_fn=None, bank_size=100000,
                          noise_sigmas=(0.01, 0.1), voxel_samples=100000,
                          name="sample"):
    """Voxelize the partial scan and cache labeled ground-truth query banks.

    The shape bank holds `bank_size` ground-truth surface points displaced
    by Gaussian noise (first half sigma[0], second half sigma[1]) with
    containment labels; the texture bank holds undisplaced surface points
    with their atlas colors. Containment uses `contains_fn` when given,
    else generalized winding numbers (requiring a near-closed ground truth).
    """
    _check_normalized(gt_mesh, "ground-truth")
    _check_normalized(partial_mesh, "partial")
    if contains_fn is None:
        frac = boundary_edge_fraction(gt_mesh)
        if frac > 0.1:
            raise NonWatertightMeshError(
                f"ground truth has {frac:.0%} boundary edges; containment labels "
                "need a (near-)closed surface or an explicit contains_fn")
        contains_fn = lambda pts: winding_contains(gt_mesh, pts)

    vox_pts = sample_surface_points(partial_mesh, voxel_samples, seed=seed)
    occ = voxelize_occupancy(vox_pts, resolution)
    col = voxelize_color(vox_pts, resolution)

    shape_rng_seed = seed + 1
    surf = sample_surface_points(gt_mesh, bank_size, seed=shape_rng_seed)
    noise_rng = np.random.default_rng(seed + 2)
    half = bank_size // 2
    sigmas = np.empty(bank_size)
    sigmas[:half] = noise_sigmas[0]
    sigmas[half:] = noise_sigmas[1]
    noisy = surf.positions + noise_rng.standard_normal((bank_size, 3)) * sigmas[:, None]
    noisy = np.clip(noisy, -0.5, 0.5)
    labels = contains_fn(noisy).astype(np.uint8)

    tex = sample_surface_points(gt_mesh, bank_size, seed=seed + 3)
    if tex.colors is None:
        raise MeshError("ground truth must carry an atlas or vertex colors for texture labels")

    return TrainingSample(
        name=name,
        occupancy=occ.occupancy,
        colors=col.colors,
        shape_points=noisy,
        shape_labels=labels,
        texture_points=tex.positions,
        texture_colors=np.clip(tex.colors, 0.0, 1.0),
    )


def shape_loss(logits, labels):
    """Mean binary cross-entropy over points, from raw logits."""
    if logits.shape != labels.shape:
        raise ValueError("logits and labels must have equal shape")
    bad = (labels != 0) & (labels != 1)
    if bool(bad.any()):
        raise ValueError("occupancy labels must be 0 or 1")
    return torch.nn.functional.binary_cross_entropy_with_logits(logits, labels.to(logits.dtype))


def texture_loss(pred, target):
    """Mean absolute error over points and channels."""
    if pred.shape != target.shape:
        raise ValueError("prediction and target must have equal shape")
    return (pred - target.to(pred.dtype)).abs().mean()


def _sample_tensors(samples, device, dtype):
    grids = []
    for s in samples:
        occ = torch.from_numpy(s.occupancy.astype(np.float32)).to(dtype)[None]
        col = torch.from_numpy(s.colors.astype(np.float32)).to(dtype).permute(3, 0, 1, 2)
        grids.append((occ, col))
    return grids


def train_joint(samples, cfg, model, out_dir=None):
    """Jointly optimize both networks with Adam at a constant learning rate.

    Texture gradients reach the shape encoder through the fused features.
    Returns {"epochs": [...], "shape_loss": [...], "texture_loss": [...]}.
    Writes `loss_curve.csv` and a per-epoch `checkpoint_latest.pt` when
    `out_dir` is given. Non-finite losses dump diagnostics and raise.
    """
    if not samples:
        raise ValueError("need at least one training sample")
    dtype = next(model.parameters()).dtype
    grids = _sample_tensors(samples, "cpu", dtype)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    model.train()

    curves = {"epochs": [], "shape_loss": [], "texture_loss": []}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        ep_shape, ep_tex, batches = 0.0, 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch_ids = order[start:start + cfg.batch_size]
            occ = torch.stack([grids[i][0] for i in batch_ids])
            col = torch.stack([grids[i][1] for i in batch_ids])
            sp, sl, tp, tc = [], [], [], []
            for i in batch_ids:
                s = samples[i]
                idx = rng.choice(len(s.shape_points), cfg.subsample, replace=False)
                sp.append(s.shape_points[idx])
                sl.append(s.shape_labels[idx])
                idx = rng.choice(len(s.texture_points), cfg.subsample, replace=False)
                tp.append(s.texture_points[idx])
                tc.append(s.texture_colors[idx])
            shape_pts = torch.from_numpy(np.stack(sp)).to(dtype)
            shape_lbl = torch.from_numpy(np.stack(sl)).to(dtype)
            tex_pts = torch.from_numpy(np.stack(tp)).to(dtype)
            tex_col = torch.from_numpy(np.stack(tc)).to(dtype)

            optimizer.zero_grad()
            s_pyr = model.encode_shape(occ)
            t_pyr = model.encode_texture(col)
            s_feat = grid_sample_features(s_pyr, shape_pts)
            logits = model.decode_occupancy(shape_pts, s_feat)
            l_shape = shape_loss(logits, shape_lbl)

            sq_feat = grid_sample_features(s_pyr, tex_pts)
            tq_feat = grid_sample_features(t_pyr, tex_pts)
            pred_col = model.decode_color(tex_pts, sq_feat, tq_feat, fuse_shape=cfg.fuse_shape)
            l_tex = texture_loss(pred_col, tex_col)

            loss = l_shape + l_tex
            if not torch.isfinite(loss):
                if out_dir:
                    torch.save({"state_dict": model.state_dict(),
                                "epoch": epoch,
                                "shape_loss": l_shape.detach().item(),
                                "texture_loss": l_tex.detach().item()},
                               os.path.join(out_dir, "diagnostic_dump.pt"))
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch} (shape={l_shape.detach().item()}, "
                    f"texture={l_tex.detach().item()})")
            loss.backward()
            optimizer.step()
            ep_shape += l_shape.detach().item()
            ep_tex += l_tex.detach().item()
            batches += 1

        curves["epochs"].append(epoch + 1)
        curves["shape_loss"].append(ep_shape / batches)
        curves["texture_loss"].append(ep_tex / batches)
        log.info("epoch %d shape %.5f texture %.5f", epoch + 1,
                 curves["shape_loss"][-1], curves["texture_loss"][-1])
        if out_dir:
            _write_curves(os.path.join(out_dir, "loss_curve.csv"), curves)
            if (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs:
                save_checkpoint(os.path.join(out_dir, "checkpoint_latest.pt"), model,
                                extra={"epoch": epoch + 1, "train_config": vars(cfg) | {
                                    "noise_sigmas": list(cfg.noise_sigmas)}})
    model.eval()
    return curves


def _write_curves(path, curves):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "shape_loss", "texture_loss"])
        for e, s, t in zip(curves["epochs"], curves["shape_loss"], curves["texture_loss"]):
            writer.writerow([e, f"{s:.8f}", f"{t:.8f}"])


def read_manifest(path):
    """Training manifest: one `gt_path<TAB>partial_path` pair per line."""
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            gt, partial = line.split("\t")
            pairs.append((gt, partial))
    return pairs


def write_manifest(path, pairs):
    with open(path, "w") as fh:
        for gt, partial in pairs:
            fh.write(f"{gt}\t{partial}\n")
