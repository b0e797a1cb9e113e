import json
import os

import numpy as np
import pytest

from scancomplete.cli import main
from scancomplete.config import Config
from scancomplete.manifest import stage_dir, stage_hash


MICRO_CFG = """
seed = 3
resolution = 32
out_resolution = 32
atlas_size = 64
partiality = t2
fixtures.count = 2
fixtures.eval_count = 1
fixtures.atlas_size = 128
holes.count = 2
train.epochs = 2
train.learning_rate = 1e-3
train.subsample = 256
train.bank_size = 2048
train.batch_size = 2
train.base_channels = 2
train.decoder_hidden = 16,8
train.target = both
inpaint.iterations = 4
inpaint.learning_rate = 1e-3
inpaint.base_channels = 4
inpaint.channel_cap = 8
inpaint.log_every = 1
complete.voxel_samples = 5000
evaluate.samples = 200
"""


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "micro.cfg"
    path.write_text(MICRO_CFG)
    return str(path)


def test_config_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("seed = 5\ntrain.epochs = 7  # comment\nname = hello\n")
    cfg = Config.load(path)
    assert cfg["seed"] == 5
    assert cfg["train.epochs"] == 7
    assert cfg["name"] == "hello"
    assert cfg["train.learning_rate"] == 1e-4  # default preserved


def test_config_hash_stable_and_sensitive():
    a = Config({"seed": 1})
    b = Config({"seed": 1})
    c = Config({"seed": 2})
    assert stage_hash(a, "prepare") == stage_hash(b, "prepare")
    assert stage_hash(a, "prepare") != stage_hash(c, "prepare")
    # keys irrelevant to a stage do not change its hash
    d = Config({"seed": 1, "evaluate.samples": 999})
    assert stage_hash(a, "prepare") == stage_hash(d, "prepare")
    assert stage_hash(a, "evaluate") != stage_hash(d, "evaluate")


def test_prepare_writes_artifacts(micro_config, tmp_path):
    out = str(tmp_path / "runs")
    assert main(["prepare", "--config", micro_config, "--out", out]) == 0
    cfg = Config.load(micro_config)
    run_dir = stage_dir(out, "prepare", cfg)
    for name in ("gt_000.obj", "gt_002.obj", "partial_000.obj",
                 "partial_000.obj.provenance.json", "partial_000_occ.grid",
                 "partial_000_occ.grid.hdr", "partial_000_col.grid",
                 "train_manifest.txt", "eval_manifest.txt", "manifest.json"):
        assert os.path.exists(os.path.join(run_dir, name)), name
    manifest = json.load(open(os.path.join(run_dir, "manifest.json")))
    assert manifest["stage"] == "prepare"
    assert manifest["seed"] == 3
    prov = json.load(open(os.path.join(run_dir, "partial_000.obj.provenance.json")))
    assert prov["type"] == "t2" and "seed" in prov


def test_prepare_manifest_deterministic(micro_config, tmp_path):
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["prepare", "--config", micro_config, "--out", out_a]) == 0
    assert main(["prepare", "--config", micro_config, "--out", out_b]) == 0
    cfg = Config.load(micro_config)
    bytes_a = open(os.path.join(stage_dir(out_a, "prepare", cfg), "manifest.json"), "rb").read()
    bytes_b = open(os.path.join(stage_dir(out_b, "prepare", cfg), "manifest.json"), "rb").read()
    assert bytes_a == bytes_b


def test_complete_without_checkpoint_names_train(micro_config, tmp_path, capsys):
    out = str(tmp_path / "runs")
    assert main(["prepare", "--config", micro_config, "--out", out]) == 0
    rc = main(["complete", "--config", micro_config, "--out", out])
    captured = capsys.readouterr()
    assert rc == 1
    assert "train" in captured.err


def test_unknown_experiment_lists_available(micro_config, tmp_path, capsys):
    rc = main(["experiment", "nope", "--config", micro_config,
               "--out", str(tmp_path / "runs")])
    captured = capsys.readouterr()
    assert rc == 1
    assert "ablation" in captured.err and "cross-partiality" in captured.err


def test_full_chain_smoke(micro_config, tmp_path, capsys):
    out = str(tmp_path / "runs")
    for command in ("prepare", "train", "complete", "refine", "evaluate"):
        assert main([command, "--config", micro_config, "--out", out]) == 0, command
    cfg = Config.load(micro_config)
    eval_dir = stage_dir(out, "evaluate", cfg)
    lines = open(os.path.join(eval_dir, "scores.jsonl")).read().strip().splitlines()
    assert len(lines) == cfg["fixtures.eval_count"]
    report = json.loads(lines[0])
    for key in ("shape_score", "texture_score", "area_score", "final_score"):
        assert 0.0 <= report[key] <= 1.0
    table = open(os.path.join(eval_dir, "score_table.txt")).read()
    assert "d0_shape" in table  # mapping parameters in the header


def test_seed_flag_overrides_config(micro_config, tmp_path):
    out = str(tmp_path / "runs")
    assert main(["prepare", "--config", micro_config, "--out", out, "--seed", "9"]) == 0
    cfg = Config.load(micro_config)
    cfg.set("seed", 9)
    run_dir = stage_dir(out, "prepare", cfg)
    assert os.path.isdir(run_dir)
    manifest = json.load(open(os.path.join(run_dir, "manifest.json")))
    assert manifest["seed"] == 9
