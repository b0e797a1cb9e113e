"""Command-line pipeline: prepare, train, complete, refine, evaluate, experiment."""

import argparse
import logging
import sys

from .config import Config
from .experiments import EXPERIMENTS, run_experiment
from .manifest import MissingArtifactError
from .pipeline import run_complete, run_evaluate, run_prepare, run_refine, run_train


def _add_common(parser):
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument("--out", default="runs", help="run root directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--resolution", type=int, help="input voxel resolution")
    parser.add_argument("--partiality", choices=("t1", "t2"), help="partiality type")
    parser.add_argument("--atlas-size", type=int, dest="atlas_size",
                        help="refinement atlas resolution")
    parser.add_argument("--checkpoint", help="joint-model checkpoint path")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scancomplete",
        description="Shape and texture completion for partial 3D textured scans")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("prepare", "generate fixtures, partial scans, voxel grids, manifests"),
        ("train", "train the joint networks and/or the texture inpainter"),
        ("complete", "reconstruct geometry and coarse vertex colors"),
        ("refine", "transfer, project, and inpaint the texture atlas"),
        ("evaluate", "score predictions against ground truth"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "evaluate":
            p.add_argument("--pred-dir", help="directory holding prediction meshes")
            p.add_argument("--pred-pattern", default=None,
                           help="filename pattern like refined_{:03d}.obj")
    p = sub.add_parser("experiment", help="run a named experiment matrix")
    p.add_argument("name", help=f"one of: {', '.join(sorted(EXPERIMENTS))}")
    _add_common(p)
    return parser


def load_config(args):
    cfg = Config.load(args.config) if args.config else Config()
    cfg.override(seed=args.seed, resolution=args.resolution,
                 partiality=args.partiality, atlas_size=args.atlas_size)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(args)
    try:
        if args.command == "prepare":
            run_prepare(cfg, args.out)
        elif args.command == "train":
            run_train(cfg, args.out)
        elif args.command == "complete":
            run_complete(cfg, args.out, checkpoint=args.checkpoint)
        elif args.command == "refine":
            run_refine(cfg, args.out)
        elif args.command == "evaluate":
            run_dir, reports = run_evaluate(cfg, args.out, pred_dir=args.pred_dir,
                                            pred_pattern=args.pred_pattern)
            with open(f"{run_dir}/score_table.txt") as fh:
                print(fh.read(), end="")
        elif args.command == "experiment":
            run_experiment(args.name, cfg, args.out)
    except (MissingArtifactError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
