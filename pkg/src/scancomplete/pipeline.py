"""Stage implementations behind the CLI: prepare, train, complete, refine,
evaluate. Every stage writes into a content-addressed run directory."""

import glob
import json
import logging
import os

import numpy as np
import torch

from .manifest import require_artifact, stage_dir, write_manifest
from .mesh import load_textured_mesh, normalize_to_unit_cube, save_textured_mesh
from .metrics import aggregate_reports, evaluate_pair, format_score_table
from .nets import EncoderConfig, JointCompletionModel, load_checkpoint
from .partiality import make_hole_partial, make_view_partial
from .reconstruct import complete_scan
from .refine import (
    InpaintConfig,
    build_inpaint_pair,
    compose_final_texture,
    inpaint_forward,
    load_inpainter,
    project_vertex_colors,
    save_atlas_masks,
    train_inpainter,
    transfer_texture_raycast,
)
from .sampling import sample_surface_points
from .training import (
    TrainConfig,
    build_training_sample,
    read_manifest,
    train_joint,
    write_manifest as write_train_manifest,
)
from .uvatlas import generate_uv_atlas
from .voxelize import save_grid, voxelize_color, voxelize_occupancy

log = logging.getLogger(__name__)


def _make_partial(mesh, cfg, seed):
    kind = str(cfg["partiality"]).lower()
    if kind == "t2":
        return make_view_partial(mesh, seed=seed), {"type": "t2", "seed": seed}
    if kind == "t1":
        radius_range = (cfg["holes.radius_min"], cfg["holes.radius_max"])
        mesh_out = make_hole_partial(mesh, cfg["holes.count"], radius_range, seed=seed)
        return mesh_out, {"type": "t1", "seed": seed, "count": cfg["holes.count"],
                          "radius_min": radius_range[0], "radius_max": radius_range[1]}
    raise ValueError(f"unknown partiality type {kind!r} (expected t1 or t2)")


def run_prepare(cfg, out_root):
    """Generate the fixture dataset: normalized ground truths, partial scans
    with provenance sidecars, voxel grids, and train/eval manifests."""
    run_dir = stage_dir(out_root, "prepare", cfg)
    os.makedirs(run_dir, exist_ok=True)
    n_total = cfg["fixtures.count"] + cfg["fixtures.eval_count"]
    fixtures = fixture_set_cached(n_total, cfg["fixtures.atlas_size"])
    seed = cfg["seed"]
    resolution = cfg["resolution"]
    artifacts = []
    pairs = []
    for i, fx in enumerate(fixtures):
        gt, _ = normalize_to_unit_cube(fx.mesh)
        gt_path = os.path.join(run_dir, f"gt_{i:03d}.obj")
        save_textured_mesh(gt_path, gt)
        partial, provenance = _make_partial(gt, cfg, seed=seed + 17 * i)
        partial_path = os.path.join(run_dir, f"partial_{i:03d}.obj")
        save_textured_mesh(partial_path, partial)
        with open(partial_path + ".provenance.json", "w") as fh:
            json.dump(provenance, fh, sort_keys=True)
        pts = sample_surface_points(partial, cfg["complete.voxel_samples"],
                                    seed=seed + 17 * i + 1)
        save_grid(os.path.join(run_dir, f"partial_{i:03d}_occ.grid"),
                  voxelize_occupancy(pts, resolution))
        save_grid(os.path.join(run_dir, f"partial_{i:03d}_col.grid"),
                  voxelize_color(pts, resolution))
        pairs.append((gt_path, partial_path))
        artifacts += [gt_path, partial_path]
    write_train_manifest(os.path.join(run_dir, "train_manifest.txt"),
                         pairs[:cfg["fixtures.count"]])
    write_train_manifest(os.path.join(run_dir, "eval_manifest.txt"),
                         pairs[cfg["fixtures.count"]:])
    write_manifest(run_dir, "prepare", cfg, inputs=(), artifacts=artifacts)
    log.info("prepare: %d ground truths in %s", n_total, run_dir)
    return run_dir


_FIXTURE_CACHE = {}


def fixture_set_cached(count, atlas_resolution):
    """Fixture generation is deterministic; cache per process."""
    from .fixtures import fixture_set

    key = (count, atlas_resolution)
    if key not in _FIXTURE_CACHE:
        _FIXTURE_CACHE[key] = fixture_set(count, atlas_resolution=atlas_resolution)
    return _FIXTURE_CACHE[key]


def _encoder_config(cfg):
    return EncoderConfig(
        resolution=cfg["resolution"],
        base_channels=cfg["train.base_channels"],
        decoder_hidden=cfg.ints("train.decoder_hidden"),
    )


def run_train(cfg, out_root):
    """Train the joint networks and/or the inpainter (per `train.target`)."""
    target = str(cfg["train.target"])
    run_dir = None
    if target in ("joint", "both"):
        run_dir = train_joint_stage(cfg, out_root)
    if target in ("inpainter", "both"):
        run_dir = train_inpainter_stage(cfg, out_root)
    if run_dir is None:
        raise ValueError(f"unknown train.target {target!r} (joint | inpainter | both)")
    return run_dir


def train_joint_stage(cfg, out_root):
    prepare_dir = stage_dir(out_root, "prepare", cfg)
    manifest_path = require_artifact(os.path.join(prepare_dir, "train_manifest.txt"),
                                     "prepare")
    run_dir = stage_dir(out_root, "train", cfg)
    os.makedirs(run_dir, exist_ok=True)
    pairs = read_manifest(manifest_path)
    torch.manual_seed(cfg["seed"])
    model = JointCompletionModel(_encoder_config(cfg))
    samples = []
    for gt_path, partial_path in pairs:
        gt = load_textured_mesh(gt_path)
        partial = load_textured_mesh(partial_path)
        samples.append(build_training_sample(
            gt, partial, cfg["resolution"], seed=cfg["seed"],
            bank_size=cfg["train.bank_size"],
            name=os.path.basename(gt_path)))
    tc = TrainConfig(
        learning_rate=cfg["train.learning_rate"],
        epochs=cfg["train.epochs"],
        subsample=cfg["train.subsample"],
        bank_size=cfg["train.bank_size"],
        batch_size=cfg["train.batch_size"],
        seed=cfg["seed"],
    )
    train_joint(samples, tc, model, out_dir=run_dir)
    checkpoint = os.path.join(run_dir, "checkpoint_latest.pt")
    write_manifest(run_dir, "train", cfg, inputs=[manifest_path], artifacts=[checkpoint])
    return run_dir


def train_inpainter_stage(cfg, out_root):
    prepare_dir = stage_dir(out_root, "prepare", cfg)
    manifest_path = require_artifact(os.path.join(prepare_dir, "train_manifest.txt"),
                                     "prepare")
    run_dir = stage_dir(out_root, "train-inpaint", cfg)
    os.makedirs(run_dir, exist_ok=True)
    pairs = read_manifest(manifest_path)
    mode = "standard_concat" if cfg["refine.mode"] == "no_partial_conv" else "partial"
    atlas_res = cfg["atlas_size"]
    inp_pairs = []
    for gt_path, partial_path in pairs:
        gt = load_textured_mesh(gt_path)
        partial = load_textured_mesh(partial_path)
        atlas_set, target_atlas = build_inpaint_pair(
            gt, partial, atlas_resolution=atlas_res,
            max_distance=cfg["refine.max_distance"])
        if cfg["refine.mode"] == "no_coarse_masks":
            inp_pairs.append((atlas_set.atlas, atlas_set.mask.astype(np.float32),
                              atlas_set.background.astype(np.float32), target_atlas))
        else:
            inp_pairs.append((atlas_set.coarse_atlas,
                              atlas_set.coarse_mask.astype(np.float32),
                              atlas_set.background.astype(np.float32), target_atlas))
    icfg = InpaintConfig(
        iterations=cfg["inpaint.iterations"],
        learning_rate=cfg["inpaint.learning_rate"],
        atlas_resolution=atlas_res,
        base_channels=cfg["inpaint.base_channels"],
        channel_cap=cfg["inpaint.channel_cap"],
        mode=mode,
        seed=cfg["seed"],
        log_every=cfg["inpaint.log_every"],
    )
    train_inpainter(inp_pairs, icfg, out_dir=run_dir)
    write_manifest(run_dir, "train-inpaint", cfg, inputs=[manifest_path],
                   artifacts=[os.path.join(run_dir, "inpainter.pt")])
    return run_dir


def run_complete(cfg, out_root, checkpoint=None, eval_cfg=None):
    """Complete every eval-split partial scan with the trained joint model.

    `eval_cfg` may point at a different prepare run (cross-partiality test
    data); it defaults to the training config.
    """
    eval_cfg = eval_cfg or cfg
    prepare_dir = stage_dir(out_root, "prepare", eval_cfg)
    eval_manifest = require_artifact(os.path.join(prepare_dir, "eval_manifest.txt"),
                                     "prepare")
    if checkpoint is None:
        train_dir = stage_dir(out_root, "train", cfg)
        checkpoint = os.path.join(train_dir, "checkpoint_latest.pt")
    require_artifact(checkpoint, "train")
    run_dir = stage_dir(out_root, "complete", cfg if eval_cfg is cfg else _merged(cfg, eval_cfg))
    os.makedirs(run_dir, exist_ok=True)

    model, _ = load_checkpoint(checkpoint)
    pairs = read_manifest(eval_manifest)
    artifacts = []
    save_volume = bool(cfg.get("complete.save_volume", False))
    for i, (gt_path, partial_path) in enumerate(pairs):
        partial = load_textured_mesh(partial_path)
        completed, volume = complete_scan(
            model, partial,
            input_resolution=cfg["resolution"],
            out_resolution=cfg["out_resolution"],
            seed=cfg["seed"],
            voxel_samples=cfg["complete.voxel_samples"],
            threshold=cfg["complete.threshold"],
            chunk_points=cfg["complete.chunk"],
            return_volume=True)
        if save_volume:
            vol_path = os.path.join(run_dir, f"completed_{i:03d}_prob.grid")
            save_grid(vol_path, volume)
            artifacts.append(vol_path)
        out_path = os.path.join(run_dir, f"completed_{i:03d}.obj")
        save_textured_mesh(out_path, completed)
        artifacts.append(out_path)
        log.info("completed %s: %d vertices", os.path.basename(partial_path),
                 completed.num_vertices)
    write_manifest(run_dir, "complete", cfg, inputs=[eval_manifest, checkpoint],
                   artifacts=artifacts)
    return run_dir


def _merged(train_cfg, eval_cfg):
    merged = train_cfg.copy()
    merged.set("partiality", eval_cfg["partiality"])
    merged.set("cross.eval_hash", stage_hash_of_prepare(eval_cfg))
    return merged


def stage_hash_of_prepare(cfg):
    from .manifest import stage_hash

    return stage_hash(cfg, "prepare")


def refine_one(completed, partial, inpainter, cfg):
    """Texture-refine one completed vertex-colored mesh.

    Returns (refined mesh with fresh UV layout + final atlas, atlas set).
    """
    atlas_res = cfg["atlas_size"]
    mode = str(cfg["refine.mode"])
    fresh = generate_uv_atlas(completed, atlas_resolution=atlas_res)
    fresh.vertex_colors = completed.vertex_colors
    atlas_set = transfer_texture_raycast(fresh, partial,
                                         max_distance=cfg["refine.max_distance"])
    atlas_set = project_vertex_colors(atlas_set, fresh)

    if mode == "transfer_baseline":
        # observed texture only; missing regions stay black
        final = compose_final_texture(np.zeros_like(atlas_set.atlas), atlas_set.atlas,
                                      atlas_set.mask, atlas_set.background)
    elif mode == "bilinear":
        # barycentric vertex-color fill stands in for the network output
        final = compose_final_texture(atlas_set.coarse_atlas, atlas_set.atlas,
                                      atlas_set.mask, atlas_set.background)
    else:
        if mode == "no_coarse_masks":
            image, mask = atlas_set.atlas, atlas_set.mask
        else:
            image, mask = atlas_set.coarse_atlas, atlas_set.coarse_mask
        inpainted = inpaint_forward(image, mask.astype(np.float32),
                                    atlas_set.background.astype(np.float32), inpainter)
        final = compose_final_texture(inpainted, atlas_set.atlas,
                                      atlas_set.mask, atlas_set.background)
    refined = fresh.copy()
    refined.atlas = final
    refined.vertex_colors = None
    return refined, atlas_set


def run_refine(cfg, out_root, inpainter_path=None, complete_dir=None, eval_cfg=None):
    """Refine the texture of every completed mesh against its partial scan."""
    eval_cfg = eval_cfg or cfg
    prepare_dir = stage_dir(out_root, "prepare", eval_cfg)
    eval_manifest = require_artifact(os.path.join(prepare_dir, "eval_manifest.txt"),
                                     "prepare")
    if complete_dir is None:
        complete_dir = cfg.get("refine.completed_dir") or stage_dir(out_root, "complete", cfg)
    pairs = read_manifest(eval_manifest)
    mode = str(cfg["refine.mode"])
    inpainter = None
    if mode in ("full", "no_coarse_masks", "no_partial_conv"):
        if inpainter_path is None:
            inpainter_path = os.path.join(stage_dir(out_root, "train-inpaint", cfg),
                                          "inpainter.pt")
        require_artifact(inpainter_path, "train (with train.target = inpainter)")
        inpainter = load_inpainter(inpainter_path)
    run_dir = stage_dir(out_root, "refine", cfg)
    os.makedirs(run_dir, exist_ok=True)
    artifacts = []
    inputs = [eval_manifest]
    links = []
    for i, (gt_path, partial_path) in enumerate(pairs):
        completed_path = os.path.join(complete_dir, f"completed_{i:03d}.obj")
        require_artifact(completed_path, "complete")
        completed = load_textured_mesh(completed_path)
        partial = load_textured_mesh(partial_path)
        if completed.is_empty():
            log.warning("skipping empty completion %s", completed_path)
            continue
        refined, atlas_set = refine_one(completed, partial, inpainter, cfg)
        out_path = os.path.join(run_dir, f"refined_{i:03d}.obj")
        save_textured_mesh(out_path, refined)
        save_atlas_masks(os.path.join(run_dir, f"refined_{i:03d}"), atlas_set)
        artifacts.append(out_path)
        inputs.append(completed_path)
        links.append({"completed": os.path.relpath(completed_path, out_root),
                      "partial": os.path.relpath(partial_path, out_root),
                      "refined": os.path.relpath(out_path, out_root)})
    with open(os.path.join(run_dir, "refine_manifest.json"), "w") as fh:
        json.dump(links, fh, indent=2, sort_keys=True)
    write_manifest(run_dir, "refine", cfg, inputs=inputs, artifacts=artifacts)
    return run_dir


def evaluate_predictions(cfg, pairs, pred_paths, label="scancomplete"):
    """Score a list of prediction files against the manifest ground truths."""
    reports = []
    for (gt_path, _), pred_path in zip(pairs, pred_paths):
        gt = load_textured_mesh(gt_path)
        pred = load_textured_mesh(pred_path)
        report = evaluate_pair(pred, gt,
                               count=cfg["evaluate.samples"],
                               seed=cfg["seed"],
                               name=os.path.basename(pred_path),
                               d0_shape=cfg["evaluate.d0_shape"],
                               d0_texture=cfg["evaluate.d0_texture"])
        reports.append(report)
        log.info("%s: final %.4f", report.name, report.final_score)
    return reports


def run_evaluate(cfg, out_root, pred_dir=None, pred_pattern=None, label="scancomplete"):
    """Score predictions against ground truths; write reports and a table."""
    prepare_dir = stage_dir(out_root, "prepare", cfg)
    eval_manifest = require_artifact(os.path.join(prepare_dir, "eval_manifest.txt"),
                                     "prepare")
    pairs = read_manifest(eval_manifest)
    if pred_dir is None:
        refine_dir = stage_dir(out_root, "refine", cfg)
        complete_dir = stage_dir(out_root, "complete", cfg)
        if glob.glob(os.path.join(refine_dir, "refined_*.obj")):
            pred_dir, pred_pattern = refine_dir, "refined_{:03d}.obj"
        else:
            pred_dir, pred_pattern = complete_dir, "completed_{:03d}.obj"
    if pred_pattern is None:
        pred_pattern = "refined_{:03d}.obj"
    pred_paths = []
    for i in range(len(pairs)):
        pred_paths.append(require_artifact(os.path.join(pred_dir, pred_pattern.format(i)),
                                           "complete (or refine)"))
    run_dir = stage_dir(out_root, "evaluate", cfg)
    os.makedirs(run_dir, exist_ok=True)
    reports = evaluate_predictions(cfg, pairs, pred_paths, label=label)
    scores_path = os.path.join(run_dir, "scores.jsonl")
    with open(scores_path, "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    agg = aggregate_reports(reports)
    header = (f"# distance-to-score mapping: clamped linear, d0_shape="
              f"{cfg['evaluate.d0_shape']}, d0_texture={cfg['evaluate.d0_texture']}")
    table = format_score_table([(label, agg)], header=header)
    with open(os.path.join(run_dir, "score_table.txt"), "w") as fh:
        fh.write(table + "\n")
    write_manifest(run_dir, "evaluate", cfg, inputs=[eval_manifest],
                   artifacts=[scores_path])
    return run_dir, reports
