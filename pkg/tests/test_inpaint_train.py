import numpy as np
import pytest
import torch

from scancomplete.refine import (
    FixedFeatureExtractor,
    InpaintConfig,
    InpaintLossWeights,
    PartialConvUNet,
    inpaint_losses,
    load_inpainter,
    save_inpainter,
    train_inpainter,
)


def synthetic_pair(rng, res=32, hole=True):
    # structured (learnable) target: a smooth two-axis color gradient
    u, v = np.meshgrid(np.linspace(0, 1, res), np.linspace(0, 1, res), indexing="ij")
    phase = rng.random(3) * 2 * np.pi
    target = np.stack([0.5 + 0.45 * np.sin(2 * np.pi * u + phase[0]),
                       0.5 + 0.45 * np.cos(2 * np.pi * v + phase[1]),
                       0.5 + 0.45 * np.sin(2 * np.pi * (u + v) + phase[2])],
                      axis=-1).astype(np.float32)
    background = np.ones((res, res), dtype=np.float32)
    background[: res // 8] = 0.0
    mask = background.copy()
    if hole:
        mask[res // 4: res // 2, res // 4: res // 2] = 0.0
    coarse = target.copy()
    coarse[mask == 0] = 0.3
    return coarse, mask, background, target


def test_zero_hole_dataset_hole_loss_zero():
    rng = np.random.default_rng(0)
    coarse, mask, background, target = synthetic_pair(rng, hole=False)
    torch.manual_seed(0)
    net = PartialConvUNet(depth=2, base_channels=4, channel_cap=8)
    extractor = FixedFeatureExtractor(seed=0)
    img = torch.from_numpy(coarse).permute(2, 0, 1)[None]
    m = torch.from_numpy(mask)[None, None]
    b = torch.from_numpy(background)[None, None]
    t = torch.from_numpy(target).permute(2, 0, 1)[None]
    out, _ = net(img, m, b)
    losses = inpaint_losses(out, t, m, b, extractor)
    assert losses["hole"].item() == 0.0


def test_valid_only_weights_equal_masked_regression():
    rng = np.random.default_rng(1)
    coarse, mask, background, target = synthetic_pair(rng)
    torch.manual_seed(1)
    net = PartialConvUNet(depth=2, base_channels=4, channel_cap=8).double()
    extractor = FixedFeatureExtractor(seed=0).double()
    img = torch.from_numpy(coarse).double().permute(2, 0, 1)[None]
    m = torch.from_numpy(mask).double()[None, None]
    b = torch.from_numpy(background).double()[None, None]
    t = torch.from_numpy(target).double().permute(2, 0, 1)[None]
    out, _ = net(img, m, b)
    weights = InpaintLossWeights(valid=1.0, hole=0.0, perceptual=0.0, style=0.0, tv=0.0)
    losses = inpaint_losses(out, t, m, b, extractor, weights)
    valid = (m * b)[0, 0].numpy()
    diff = np.abs(out[0].detach().numpy() - t[0].numpy())
    oracle = (diff * valid).sum() / (valid.sum() * 3)
    assert losses["total"].item() == pytest.approx(oracle, rel=1e-9)


def test_loss_components_finite_and_logged():
    rng = np.random.default_rng(2)
    pairs = [synthetic_pair(rng) for _ in range(2)]
    cfg = InpaintConfig(iterations=3, learning_rate=1e-3, atlas_resolution=32,
                        base_channels=4, channel_cap=8, depth=2, seed=0, log_every=1)
    net, history = train_inpainter(pairs, cfg)
    assert len(history["total"]) == 3
    assert all(np.isfinite(history[k]).all() for k in ("total", "hole", "valid"))


def test_training_loss_decreases_small():
    # scaled-down stand-in for the desk-scale run (kept fast for the suite)
    rng = np.random.default_rng(3)
    pairs = [synthetic_pair(rng, res=32) for _ in range(3)]
    cfg = InpaintConfig(iterations=300, learning_rate=2e-3, atlas_resolution=32,
                        base_channels=8, channel_cap=16, depth=2, seed=0, log_every=10)
    net, history = train_inpainter(pairs, cfg)
    first = np.mean(history["total"][:3])
    last = np.mean(history["total"][-3:])
    assert last <= first / 5.0


@pytest.mark.slow
def test_desk_scale_training_loss_decreases():
    # full desk-scale profile: 256x256 atlases, 20 pairs, 5000 iterations
    rng = np.random.default_rng(4)
    pairs = [synthetic_pair(rng, res=256) for _ in range(20)]
    cfg = InpaintConfig(iterations=5000, learning_rate=1e-4, atlas_resolution=256,
                        base_channels=16, channel_cap=64, seed=0, log_every=100)
    net, history = train_inpainter(pairs, cfg)
    assert np.mean(history["total"][-3:]) <= np.mean(history["total"][:3]) / 5.0


def test_non_finite_aborts():
    rng = np.random.default_rng(5)
    pairs = [synthetic_pair(rng)]
    cfg = InpaintConfig(iterations=2, learning_rate=1e-3, atlas_resolution=32,
                        base_channels=4, channel_cap=8, depth=2, seed=0)
    torch.manual_seed(0)
    net = PartialConvUNet(depth=2, base_channels=4, channel_cap=8)
    with torch.no_grad():
        net.encoder[0].pconv.conv.weight[0, 0, 0, 0] = float("nan")
    with pytest.raises(RuntimeError):
        train_inpainter(pairs, cfg, network=net)


def test_checkpoint_roundtrip(tmp_path):
    torch.manual_seed(7)
    net = PartialConvUNet(depth=2, base_channels=4, channel_cap=8)
    cfg = InpaintConfig(atlas_resolution=32, depth=2)
    path = tmp_path / "inpainter.pt"
    save_inpainter(path, net, cfg)
    loaded = load_inpainter(path)
    assert loaded.depth == 2
    for a, b in zip(net.state_dict().values(), loaded.state_dict().values()):
        assert torch.equal(a, b)


def test_feature_extractor_frozen_and_seeded():
    a = FixedFeatureExtractor(seed=3)
    b = FixedFeatureExtractor(seed=3)
    c = FixedFeatureExtractor(seed=4)
    x = torch.rand(1, 3, 16, 16)
    fa = a(x)
    fb = b(x)
    fc = c(x)
    assert all(torch.equal(p, q) for p, q in zip(fa, fb))
    assert not torch.equal(fa[0], fc[0])
    assert all(not p.requires_grad for p in a.parameters())
