"""Experiment drivers: the ablation matrix and the cross-partiality study."""

import json
import logging
import os

from .manifest import stage_dir, write_manifest
from .metrics import aggregate_reports, format_score_table
from .pipeline import (
    evaluate_predictions,
    run_complete,
    run_evaluate,
    run_prepare,
    run_refine,
    train_inpainter_stage,
    train_joint_stage,
)
from .training import read_manifest

log = logging.getLogger(__name__)

ABLATION_ROWS = (
    ("Texture-transfer Baseline", "transfer_baseline"),
    ("Ours w/o Coarse Masks", "no_coarse_masks"),
    ("Ours w/o Tex. Refine.", None),
    ("Ours w/ Bilinear Interp.", "bilinear"),
    ("Ours w/o Partial Conv.", "no_partial_conv"),
    ("Ours (full)", "full"),
)


def run_ablation(cfg, out_root):
    """Texture-refinement ablation matrix; one table row per variant.

    The prepare / joint-train / complete stages are shared across rows;
    each refinement variant gets its own (content-addressed) inpainter and
    refine run where required.
    """
    run_prepare(cfg, out_root)
    train_joint_stage(cfg, out_root)
    complete_dir = run_complete(cfg, out_root)
    prepare_dir = stage_dir(out_root, "prepare", cfg)
    pairs = read_manifest(os.path.join(prepare_dir, "eval_manifest.txt"))

    rows = []
    for label, mode in ABLATION_ROWS:
        if mode is None:
            # coarse vertex textures straight from the joint networks
            pred_paths = [os.path.join(complete_dir, f"completed_{i:03d}.obj")
                          for i in range(len(pairs))]
            reports = evaluate_predictions(cfg, pairs, pred_paths, label=label)
        else:
            variant = cfg.copy()
            variant.set("refine.mode", mode)
            if mode in ("full", "no_coarse_masks", "no_partial_conv"):
                train_inpainter_stage(variant, out_root)
            refine_dir = run_refine(variant, out_root, complete_dir=complete_dir)
            pred_paths = [os.path.join(refine_dir, f"refined_{i:03d}.obj")
                          for i in range(len(pairs))]
            reports = evaluate_predictions(variant, pairs, pred_paths, label=label)
        rows.append((label, aggregate_reports(reports)))
        log.info("ablation row done: %s", label)

    run_dir = stage_dir(out_root, "experiment", cfg)
    os.makedirs(run_dir, exist_ok=True)
    table = format_score_table(rows, header="# ablation study")
    table_path = os.path.join(run_dir, "ablation_table.txt")
    with open(table_path, "w") as fh:
        fh.write(table + "\n")
    with open(os.path.join(run_dir, "ablation_scores.json"), "w") as fh:
        json.dump({label: agg for label, agg in rows}, fh, indent=2, sort_keys=True)
    write_manifest(run_dir, "experiment", cfg, inputs=(), artifacts=[table_path])
    print(table)
    return run_dir, rows


def run_cross_partiality(cfg, out_root):
    """Train on view partiality (T2) and hole partiality (T1); test both on T1.

    Emits the two-row generalization table (training type, testing type,
    scores). Evaluation uses the coarse completed meshes so the comparison
    isolates the joint networks.
    """
    cfg_t2 = cfg.copy()
    cfg_t2.set("partiality", "t2")
    cfg_t1 = cfg.copy()
    cfg_t1.set("partiality", "t1")

    run_prepare(cfg_t2, out_root)
    run_prepare(cfg_t1, out_root)
    train_joint_stage(cfg_t2, out_root)
    train_joint_stage(cfg_t1, out_root)

    prepare_t1 = stage_dir(out_root, "prepare", cfg_t1)
    pairs = read_manifest(os.path.join(prepare_t1, "eval_manifest.txt"))

    rows = []
    for label, train_cfg in (("train T2 / test T1", cfg_t2), ("train T1 / test T1", cfg_t1)):
        complete_dir = run_complete(train_cfg, out_root, eval_cfg=cfg_t1)
        pred_paths = [os.path.join(complete_dir, f"completed_{i:03d}.obj")
                      for i in range(len(pairs))]
        reports = evaluate_predictions(cfg_t1, pairs, pred_paths, label=label)
        rows.append((label, aggregate_reports(reports)))
        log.info("cross-partiality row done: %s", label)

    run_dir = stage_dir(out_root, "experiment", cfg)
    os.makedirs(run_dir, exist_ok=True)
    table = format_score_table(rows, header="# cross-partiality generalization")
    table_path = os.path.join(run_dir, "cross_partiality_table.txt")
    with open(table_path, "w") as fh:
        fh.write(table + "\n")
    with open(os.path.join(run_dir, "cross_partiality_scores.json"), "w") as fh:
        json.dump({label: agg for label, agg in rows}, fh, indent=2, sort_keys=True)
    write_manifest(run_dir, "experiment", cfg, inputs=(), artifacts=[table_path])
    print(table)
    return run_dir, rows


EXPERIMENTS = {
    "ablation": run_ablation,
    "cross-partiality": run_cross_partiality,
}


def run_experiment(name, cfg, out_root):
    if name not in EXPERIMENTS:
        raise ValueError(
            f"unknown experiment {name!r}; available: {', '.join(sorted(EXPERIMENTS))}")
    return EXPERIMENTS[name](cfg, out_root)
