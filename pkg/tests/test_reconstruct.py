import numpy as np
import pytest
import torch

from scancomplete.fixtures import make_fixture
from scancomplete.mesh import normalize_to_unit_cube
from scancomplete.nets import EncoderConfig, JointCompletionModel
from scancomplete.reconstruct import (
    complete_scan,
    extract_completed_mesh,
    predict_occupancy_volume,
    predict_vertex_colors,
)
from scancomplete.sampling import sample_surface_points
from scancomplete.training import TrainConfig, build_training_sample, train_joint
from scancomplete.voxelize import voxelize_color, voxelize_occupancy


def untrained_model(n=16, base=1, hidden=(4,)):
    torch.manual_seed(0)
    return JointCompletionModel(
        EncoderConfig(resolution=n, base_channels=base, decoder_hidden=hidden)).eval()


@pytest.fixture(scope="module")
def overfit_sphere():
    fx = make_fixture(0)
    gt, transform = normalize_to_unit_cube(fx.mesh)
    contains = lambda pts: fx.contains(transform.invert(pts))
    sample = build_training_sample(gt, gt, 32, seed=0, contains_fn=contains,
                                   bank_size=8192, voxel_samples=20000)
    torch.manual_seed(2)
    model = JointCompletionModel(
        EncoderConfig(resolution=32, base_channels=8, decoder_hidden=(96, 64)))
    cfg = TrainConfig(learning_rate=1.5e-3, epochs=120, subsample=1024, bank_size=8192,
                      batch_size=1, seed=0)
    train_joint([sample], cfg, model)
    radius_norm = 0.45  # unit sphere scaled so its diameter fills 0.9
    return model, sample, gt, radius_norm


def test_chunked_equals_single_pass():
    model = untrained_model()
    occ = np.zeros((16, 16, 16), dtype=np.uint8)
    occ[6:10, 6:10, 6:10] = 1
    full = predict_occupancy_volume(model, occ, 32, chunk_points=32 ** 3)
    chunked = predict_occupancy_volume(model, occ, 32, chunk_points=997)
    assert np.abs(full - chunked).max() < 1e-6


def test_dense_retrieval_256_probabilities():
    model = untrained_model()
    occ = np.zeros((16, 16, 16), dtype=np.uint8)
    occ[5:11, 5:11, 5:11] = 1
    vol = predict_occupancy_volume(model, occ, 256, chunk_points=65536)
    assert vol.shape == (256, 256, 256)
    assert vol.min() >= 0.0 and vol.max() <= 1.0


def test_requires_model():
    with pytest.raises(ValueError):
        predict_occupancy_volume(None, np.zeros((16, 16, 16)), 32)


def test_overfit_level_set_within_two_voxels(overfit_sphere):
    model, sample, _, radius = overfit_sphere
    vol = predict_occupancy_volume(model, sample.occupancy, 64)
    mesh = extract_completed_mesh(vol, threshold=0.5)
    assert not mesh.is_empty()
    radii = np.linalg.norm(mesh.vertices, axis=1)
    assert np.abs(radii - radius).max() <= 2.0 / 64


def test_vertex_colors_shape_and_clamping(overfit_sphere):
    model, sample, gt, _ = overfit_sphere
    vol = predict_occupancy_volume(model, sample.occupancy, 48)
    mesh = extract_completed_mesh(vol)
    colors = predict_vertex_colors(model, sample.occupancy, sample.colors, mesh)
    assert colors.shape == (mesh.num_vertices, 3)
    assert colors.min() >= 0.0 and colors.max() <= 1.0


def test_vertex_colors_pointwise_duplicates():
    model = untrained_model()
    occ = np.zeros((16, 16, 16), dtype=np.uint8)
    occ[6:10, 6:10, 6:10] = 1
    col = np.full((16, 16, 16, 3), -1.0, dtype=np.float32)
    col[6:10, 6:10, 6:10] = 0.5
    from scancomplete.mesh import TexturedMesh
    verts = np.array([[0.1, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.2, 0.0]])
    mesh = TexturedMesh(vertices=verts, triangles=np.array([[0, 1, 2]]))
    colors = predict_vertex_colors(model, occ, col, mesh)
    np.testing.assert_allclose(colors[0], colors[1], atol=1e-6)


def test_vertex_outside_domain_clamped(caplog):
    model = untrained_model()
    occ = np.zeros((16, 16, 16), dtype=np.uint8)
    occ[6:10, 6:10, 6:10] = 1
    col = np.full((16, 16, 16, 3), -1.0, dtype=np.float32)
    from scancomplete.mesh import TexturedMesh
    mesh = TexturedMesh(vertices=np.array([[0.9, 0.0, 0.0], [0, 0, 0], [0, 0.1, 0]]),
                        triangles=np.array([[0, 1, 2]]))
    import logging
    with caplog.at_level(logging.WARNING):
        colors = predict_vertex_colors(model, occ, col, mesh)
    assert colors.shape == (3, 3)
    assert any("clamped" in r.message for r in caplog.records)


def test_complete_scan_end_to_end(overfit_sphere):
    model, _, gt, radius = overfit_sphere
    completed = complete_scan(model, gt, input_resolution=32, out_resolution=48,
                              seed=0, voxel_samples=20000)
    assert not completed.is_empty()
    assert completed.vertex_colors is not None
    assert len(completed.vertex_colors) == completed.num_vertices
    radii = np.linalg.norm(completed.vertices, axis=1)
    assert np.abs(radii - radius).max() <= 3.0 / 48


def test_empty_volume_empty_mesh():
    mesh = extract_completed_mesh(np.zeros((16, 16, 16), dtype=np.float32))
    assert mesh.is_empty()
