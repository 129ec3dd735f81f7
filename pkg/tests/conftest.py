import numpy as np
import pytest

from leafcnn.datapipe import save_image
from leafcnn.layers import LayerSpec
from leafcnn.model import ModelConfig, Sequential, custom_cnn_config


@pytest.fixture
def rng():
    return np.random.default_rng(20240201)


def small_config(input_size=8, filters=(4, 6, 8), hidden=8, dropout=0.2):
    return custom_cnn_config(filters=filters, hidden=hidden, dropout=dropout, input_size=input_size)


def color_stub_model(scale=1e-3):
    """Flatten -> dense -> softmax model: red pixels vote Diseased, green vote Healthy."""
    cfg = ModelConfig(
        (224, 224, 3),
        (LayerSpec("flatten"), LayerSpec("dense", units=2), LayerSpec("softmax")),
    )
    model = Sequential(cfg)
    w = np.zeros((224 * 224 * 3, 2), dtype=np.float32)
    w[1::3, 0] = scale  # green -> Healthy
    w[0::3, 1] = scale  # red -> Diseased
    model.layers[1].params["W"] = w
    return model


def solid_image(path, rgb, size=32):
    img = np.empty((size, size, 3), dtype=np.float32)
    img[...] = np.asarray(rgb, dtype=np.float32)
    save_image(path, img)
    return path


RED, GREEN = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)


@pytest.fixture(scope="session")
def full_model():
    return Sequential(custom_cnn_config(), seed=3)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
