"""Run directories addressed by stage-relevant config hashes."""

import hashlib
import json
import os

_PREPARE_KEYS = ("seed", "resolution", "partiality", "holes.", "fixtures.",
                 "complete.voxel_samples")
_TRAIN_KEYS = _PREPARE_KEYS + ("train.",)
_INPAINT_KEYS = _PREPARE_KEYS + ("inpaint.", "atlas_size", "refine.mode",
                                 "refine.max_distance")
_COMPLETE_KEYS = _TRAIN_KEYS + ("complete.", "out_resolution")
_REFINE_KEYS = _COMPLETE_KEYS + _INPAINT_KEYS + ("refine.",)
_EVALUATE_KEYS = _REFINE_KEYS + ("evaluate.",)

STAGE_KEYS = {
    "prepare": _PREPARE_KEYS,
    "train": _TRAIN_KEYS,
    "train-inpaint": _INPAINT_KEYS,
    "complete": _COMPLETE_KEYS,
    "refine": _REFINE_KEYS,
    "evaluate": _EVALUATE_KEYS,
    "experiment": _EVALUATE_KEYS + ("experiment.",),
}


class MissingArtifactError(RuntimeError):
    """An upstream stage has not produced its artifacts yet."""


def stage_hash(cfg, stage):
    """Hash of the config keys that can affect the stage's artifacts."""
    prefixes = STAGE_KEYS[stage]
    filtered = {k: v for k, v in cfg.values.items()
                if any(k == p or k.startswith(p) for p in prefixes)}
    text = stage + "\n" + "\n".join(f"{k} = {filtered[k]}" for k in sorted(filtered))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def stage_dir(out_root, stage, cfg):
    """Content-addressed directory for a stage under the run root."""
    return os.path.join(out_root, f"{stage}-{stage_hash(cfg, stage)}")


def file_checksum(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(run_dir, stage, cfg, inputs=(), artifacts=()):
    """Manifest with config hash, seeds, and input checksums.

    Paths are stored relative to the run root so identical runs produce
    byte-identical manifests.
    """
    root = os.path.dirname(os.path.abspath(run_dir))
    manifest = {
        "stage": stage,
        "config_hash": stage_hash(cfg, stage),
        "seed": cfg.get("seed"),
        "config": cfg.values,
        "inputs": {os.path.relpath(p, root): file_checksum(p) for p in sorted(inputs)},
        "artifacts": sorted(os.path.relpath(p, root) for p in artifacts),
    }
    path = os.path.join(run_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def require_artifact(path, producing_command):
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"missing {path}; run `scancomplete {producing_command}` first")
    return path
