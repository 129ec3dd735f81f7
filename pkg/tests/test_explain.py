import numpy as np
import pytest

from leafcnn.errors import ParameterError
from leafcnn.explain import (
    bilinear_matrix, cell_footprint, colorize, feature_layer, grad_cam, normalize, overlay, read_pfm,
    upsample_bilinear, write_pfm, write_ppm,
)
from leafcnn.model import Sequential, custom_cnn_config

from gradcam_rig import CELL_PIXELS, GRID, single_cell_image, single_cell_model
from oracles import hat_mass_fraction


def tiny_224(seed):
    return Sequential(custom_cnn_config(filters=(3, 4), hidden=4, input_size=224), seed=seed)


def test_feature_layer_is_last_conv_relu(full_model):
    assert full_model.layers[feature_layer(full_model)].kind == "relu"
    assert feature_layer(full_model) == full_model.conv_indices()[-1] + 1
    with pytest.raises(ParameterError):
        feature_layer(full_model, conv_index=1)


@pytest.mark.parametrize("case", range(50))
def test_heatmap_range_and_shape(case):
    rng = np.random.default_rng(case)
    model = tiny_224(case)
    img = rng.random((224, 224, 3)).astype(np.float32)
    h = grad_cam(model, img, int(rng.integers(0, 2)))
    assert h.values.shape == (224, 224)
    assert np.isfinite(h.values).all()
    assert h.values.min() >= 0 and h.values.max() <= 1


def test_full_model_heatmap(full_model):
    img = np.random.default_rng(9).random((224, 224, 3)).astype(np.float32)
    h = grad_cam(full_model, img, 1)
    assert h.values.shape == (224, 224) and 0 <= h.values.min() <= h.values.max() <= 1
    assert h.raw.shape == (28, 28)  # last conv runs before the fourth pool


def test_zero_gradient_gives_zero_map():
    model = tiny_224(1)
    head = model.layers[-2]
    head.params["W"][...] = 0  # constant logits
    h = grad_cam(model, np.random.default_rng(0).random((224, 224, 3)), 0)
    assert (h.values == 0).all()


@pytest.mark.parametrize("cell", [(5, 9), (14, 14), (20, 3)])
def test_single_active_cell(cell):
    model = single_cell_model()
    h = grad_cam(model, single_cell_image(cell), 0)
    expected_raw = np.zeros((GRID, GRID))
    expected_raw[cell] = 0.75
    np.testing.assert_allclose(h.raw, expected_raw, atol=1e-12)
    assert h.values.max() == pytest.approx(1.0, abs=1e-12)
    foot = cell_footprint(cell, (GRID, GRID), (224, 224))
    assert h.values[foot].sum() / h.values.sum() >= 0.90
    r0, c0 = cell[0] * CELL_PIXELS, cell[1] * CELL_PIXELS
    block = h.values[r0 : r0 + CELL_PIXELS, c0 : c0 + CELL_PIXELS].sum() / h.values.sum()
    # the cell's own 8x8 block keeps 0.75 of the hat mass per axis
    assert block == pytest.approx(hat_mass_fraction(CELL_PIXELS) ** 2, abs=1e-12)
    assert block == pytest.approx(0.5625, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("scale", [0.5, 3.0, 40.0])
def test_positive_logit_scaling_invariance(seed, scale):
    model = tiny_224(seed)
    img = np.random.default_rng(seed).random((224, 224, 3)).astype(np.float32)
    before = grad_cam(model, img, 1).values
    head = model.layers[-2]
    head.params["W"] *= np.float32(scale)
    head.params["b"] *= np.float32(scale)
    after = grad_cam(model, img, 1).values
    assert np.abs(after - before).max() <= 1e-5


def test_bad_target_class():
    with pytest.raises(ParameterError):
        grad_cam(tiny_224(0), np.zeros((224, 224, 3)), 2)


def test_bilinear_matrix_rows_sum_to_one():
    m = bilinear_matrix(14, 224)
    np.testing.assert_allclose(m.sum(axis=1), 1.0)
    np.testing.assert_allclose(upsample_bilinear(np.full((3, 5), 2.0), 12, 20), 2.0)


def test_normalize_edge_cases():
    assert (normalize(np.zeros((3, 3))) == 0).all()
    assert (normalize(np.full((2, 2), 4.0)) == 1).all()
    np.testing.assert_allclose(normalize(np.array([1.0, 3.0])), [0, 1])


def test_pfm_roundtrip(tmp_path):
    v = np.random.default_rng(0).random((7, 5)).astype(np.float32)
    write_pfm(tmp_path / "h.pfm", v)
    assert (tmp_path / "h.pfm").read_bytes().startswith(b"Pf\n5 7\n-1.0\n")
    np.testing.assert_array_equal(read_pfm(tmp_path / "h.pfm"), v)


def test_overlay_and_ppm(tmp_path):
    img = np.random.default_rng(1).random((224, 224, 3))
    out = overlay(img, np.zeros((224, 224)))
    np.testing.assert_allclose(out, 0.6 * img + 0.4 * colorize(np.zeros((224, 224))))
    write_ppm(tmp_path / "o.ppm", out)
    raw = (tmp_path / "o.ppm").read_bytes()
    assert raw.startswith(b"P6\n224 224\n255\n") and len(raw) == len(b"P6\n224 224\n255\n") + 224 * 224 * 3


@pytest.mark.parametrize("seed", range(5))
def test_other_logit_bias_does_not_matter(seed):
    model = tiny_224(seed)
    img = np.random.default_rng(seed).random((224, 224, 3)).astype(np.float32)
    before = grad_cam(model, img, 0)
    model.layers[-2].params["b"][1] += np.float32(5.0)
    after = grad_cam(model, img, 0)
    assert np.abs(after.values - before.values).max() <= 1e-6
    assert (before.raw >= 0).all()
