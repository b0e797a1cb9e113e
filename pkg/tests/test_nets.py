import numpy as np
import pytest
import torch

from scancomplete.nets import (
    CheckpointConfigError,
    EncoderConfig,
    FeatureLengthError,
    JointCompletionModel,
    PointDecoder,
    VoxelEncoder,
    grid_sample_features,
    load_checkpoint,
    save_checkpoint,
)
from scancomplete.nets.encoders import FeaturePyramid


def tiny_config(n=16, base=2, in_channels=1):
    return EncoderConfig(resolution=n, in_channels=in_channels, base_channels=base,
                         decoder_hidden=(16, 8))


def brute_force_features(levels, displacement, points):
    """Independent trilinear interpolator (plain numpy loops)."""
    d = displacement
    offsets = np.array([[0, 0, 0], [d, 0, 0], [-d, 0, 0],
                        [0, d, 0], [0, -d, 0], [0, 0, d], [0, 0, -d]])
    rows = []
    for p in points:
        row = []
        for lv in levels:
            vol = lv[0].detach().numpy()
            c, k = vol.shape[0], vol.shape[-1]
            for off in offsets:
                q = p + off
                u = (q + 0.5) * k - 0.5
                i0 = np.floor(u).astype(int)
                f = u - i0
                acc = np.zeros(c)
                for dx in (0, 1):
                    for dy in (0, 1):
                        for dz in (0, 1):
                            ix = min(max(i0[0] + dx, 0), k - 1)
                            iy = min(max(i0[1] + dy, 0), k - 1)
                            iz = min(max(i0[2] + dz, 0), k - 1)
                            w = ((f[0] if dx else 1 - f[0])
                                 * (f[1] if dy else 1 - f[1])
                                 * (f[2] if dz else 1 - f[2]))
                            acc += w * vol[:, ix, iy, iz]
                row.extend(acc)
        rows.append(row)
    return np.asarray(rows)


def test_shape_encoder_schedule_n128():
    cfg = EncoderConfig(resolution=128, base_channels=16)
    enc = VoxelEncoder(cfg).eval()
    with torch.no_grad():
        pyr = enc(torch.zeros(1, 1, 128, 128, 128))
    assert pyr.resolutions == (128, 128, 64, 32, 16, 8)
    assert pyr.channels == (1, 16, 32, 64, 128, 128)


def test_texture_encoder_schedule_n128():
    cfg = EncoderConfig(resolution=128, in_channels=3, base_channels=16)
    enc = VoxelEncoder(cfg).eval()
    with torch.no_grad():
        pyr = enc(torch.full((1, 3, 128, 128, 128), -1.0))
    assert pyr.resolutions == (128, 128, 64, 32, 16, 8)
    assert pyr.channels == (3, 16, 32, 64, 128, 128)
    assert all(torch.isfinite(lv).all() for lv in pyr.levels)


def test_shape_encoder_schedule_n32_desk():
    cfg = EncoderConfig(resolution=32, base_channels=16)
    enc = VoxelEncoder(cfg).eval()
    with torch.no_grad():
        pyr = enc(torch.zeros(1, 1, 32, 32, 32))
    assert pyr.resolutions == (32, 32, 16, 8, 4, 2)
    assert pyr.channels == (1, 16, 32, 64, 128, 128)
    assert all(torch.isfinite(lv).all() for lv in pyr.levels)


def test_encoder_resolution_mismatch():
    enc = VoxelEncoder(tiny_config(16))
    with pytest.raises(ValueError):
        enc(torch.zeros(1, 1, 32, 32, 32))


def test_batch_permutation_equivariance():
    torch.manual_seed(0)
    cfg = tiny_config(16, in_channels=3)
    enc = VoxelEncoder(cfg).train()
    a = torch.rand(1, 3, 16, 16, 16)
    b = torch.rand(1, 3, 16, 16, 16)
    pyr_ab = enc(torch.cat([a, b]))
    pyr_ba = enc(torch.cat([b, a]))
    for lab, lba in zip(pyr_ab.levels, pyr_ba.levels):
        assert torch.allclose(lab[0], lba[1], atol=1e-6)
        assert torch.allclose(lab[1], lba[0], atol=1e-6)


def test_grid_sample_constant_level():
    lv = torch.full((1, 4, 8, 8, 8), 3.25, dtype=torch.float64)
    pyr = FeaturePyramid(levels=[lv], displacement=0.0722)
    pts = torch.tensor(np.random.default_rng(0).uniform(-0.5, 0.5, (20, 3)))
    feats = grid_sample_features(pyr, pts)
    assert torch.allclose(feats.features, torch.tensor(3.25, dtype=torch.float64))


def test_grid_sample_linear_ramp_midpoint():
    k = 8
    ramp = torch.arange(k, dtype=torch.float64).view(1, 1, k, 1, 1).expand(1, 1, k, k, k).contiguous()
    pyr = FeaturePyramid(levels=[ramp], displacement=0.0)
    # midway between node i=2 (x=-0.5+2.5/8) and node i=3
    x_mid = -0.5 + 3.0 / k
    feats = grid_sample_features(pyr, torch.tensor([[x_mid, 0.0, 0.0]], dtype=torch.float64))
    expected = 2.5
    assert feats.features.flatten()[0].item() == pytest.approx(expected, abs=1e-12)


def test_grid_sample_exact_node_zero_displacement():
    torch.manual_seed(1)
    k = 4
    lv = torch.randn(1, 3, k, k, k, dtype=torch.float64)
    pyr = FeaturePyramid(levels=[lv], displacement=0.0)
    node = (2, 1, 3)
    coord = [(-0.5 + (i + 0.5) / k) for i in node]
    feats = grid_sample_features(pyr, torch.tensor([coord], dtype=torch.float64))
    # zero displacement makes all 7 taps identical; check the first tap
    np.testing.assert_allclose(feats.features[0, 0].numpy()[:3],
                               lv[0, :, node[0], node[1], node[2]].numpy(), atol=1e-12)


def test_grid_sample_matches_brute_force():
    torch.manual_seed(2)
    rng = np.random.default_rng(3)
    levels = [torch.randn(1, c, k, k, k, dtype=torch.float64)
              for c, k in ((2, 16), (3, 8), (4, 4), (5, 2))]
    pyr = FeaturePyramid(levels=levels, displacement=0.0722)
    pts = rng.uniform(-0.5, 0.5, (25, 3))
    feats = grid_sample_features(pyr, torch.tensor(pts))
    oracle = brute_force_features(levels, 0.0722, pts)
    assert np.abs(feats.features[0].numpy() - oracle).max() < 1e-12


def test_feature_lengths_across_resolutions():
    for n in (32, 64, 128):
        cfg = EncoderConfig(resolution=n, base_channels=16)
        assert cfg.tap_channels == (1, 16, 32, 64, 128, 128)
        assert cfg.feature_length == (1 + 16 + 32 + 64 + 128 + 128) * 7 == 2583
        tex = EncoderConfig(resolution=n, in_channels=3, base_channels=16)
        assert tex.feature_length == 2597


def test_decoder_input_lengths():
    model = JointCompletionModel(EncoderConfig(resolution=16, base_channels=16))
    assert model.shape_decoder.in_dim == 3 + 2583
    assert model.texture_decoder.in_dim == 3 + 2583 + 2597  # == 5183


def test_decoder_pointwise_and_counts():
    torch.manual_seed(3)
    cfg = tiny_config(16)
    model = JointCompletionModel(cfg)
    model.eval()
    occ = torch.zeros(1, 1, 16, 16, 16)
    occ[0, 0, 6:10, 6:10, 6:10] = 1
    pts = torch.rand(1, 50000, 3) - 0.5
    with torch.no_grad():
        pyr = model.encode_shape(occ)
        feats = grid_sample_features(pyr, pts)
        logits = model.decode_occupancy(pts, feats)
    assert logits.shape == (1, 50000)

    # duplicated rows decode identically; permutations permute outputs
    with torch.no_grad():
        dup = pts[:, :100].repeat(1, 2, 1)
        f2 = grid_sample_features(pyr, dup)
        assert torch.equal(f2.features[0, :100], f2.features[0, 100:])
        l2 = model.decode_occupancy(dup, f2)
        # gemm blocking makes identical columns agree only to rounding
        assert torch.allclose(l2[0, :100], l2[0, 100:], atol=1e-7)
        perm = torch.randperm(100)
        f3 = grid_sample_features(pyr, pts[:, :100][:, perm])
        l3 = model.decode_occupancy(None, f3)
        assert torch.allclose(l3[0], l2[0, :100][perm], atol=1e-6)


def test_texture_decoder_bias_only():
    cfg = tiny_config(16)
    model = JointCompletionModel(cfg).eval()
    with torch.no_grad():
        for p in model.texture_decoder.parameters():
            p.zero_()
        model.texture_decoder.layers[-1].bias.copy_(torch.tensor([0.5, 0.5, 0.5]))
    occ = torch.zeros(1, 1, 16, 16, 16)
    col = torch.full((1, 3, 16, 16, 16), -1.0)
    pts = torch.rand(1, 17, 3) - 0.5
    with torch.no_grad():
        rgb = model.point_colors(occ, col, pts)
    assert torch.allclose(rgb, torch.tensor(0.5), atol=1e-7)


def test_feature_length_mismatch_raises():
    dec = PointDecoder(in_dim=10, hidden=(4,), out_dim=1)
    with pytest.raises(FeatureLengthError):
        dec(torch.zeros(1, 9, 5))


def test_fused_decoder_needs_matching_points():
    cfg = tiny_config(16)
    model = JointCompletionModel(cfg).eval()
    occ = torch.zeros(1, 1, 16, 16, 16)
    col = torch.full((1, 3, 16, 16, 16), -1.0)
    with torch.no_grad():
        sp = model.encode_shape(occ)
        tp = model.encode_texture(col)
        f_a = grid_sample_features(sp, torch.zeros(1, 4, 3))
        f_b = grid_sample_features(tp, torch.zeros(1, 5, 3))
    with pytest.raises(ValueError):
        model.decode_color(None, f_a, f_b)


def test_checkpoint_roundtrip(tmp_path):
    torch.manual_seed(4)
    cfg = tiny_config(16)
    model = JointCompletionModel(cfg)
    path = tmp_path / "ckpt.pt"
    save_checkpoint(path, model, extra={"epoch": 3})
    loaded, extra = load_checkpoint(path)
    assert extra["epoch"] == 3
    for (na, pa), (nb, pb) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert na == nb
        assert torch.equal(pa, pb)
    with pytest.raises(CheckpointConfigError):
        load_checkpoint(path, expected_shape_config=EncoderConfig(resolution=32, base_channels=2,
                                                                  decoder_hidden=(16, 8)))


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(resolution=24)
    with pytest.raises(ValueError):
        EncoderConfig(resolution=8)
    with pytest.raises(ValueError):
        EncoderConfig(resolution=16, base_channels=0)
