"""On-disk fixtures shared by the CLI, service and acceptance tests."""

import numpy as np

from leafcnn.checkpoint import save_checkpoint
from leafcnn.datapipe import save_image
from leafcnn.model import Sequential, custom_cnn_config

from conftest import GREEN, RED, color_stub_model, solid_image


def counts_fixture(root):
    """Solid-colour test split: 30 healthy (2 red) and 30 diseased (3 green); returns the manifest path."""
    lines = []
    healthy = [GREEN] * 28 + [RED] * 2
    diseased = [RED] * 27 + [GREEN] * 3
    for label, colors in (("Healthy", healthy), ("Diseased", diseased)):
        (root / label).mkdir(parents=True, exist_ok=True)
        for i, c in enumerate(colors):
            p = solid_image(root / label / f"{i:03d}.png", c)
            lines.append(f"{p}\t{label}\ttest\n")
    manifest = root / "counts.tsv"
    manifest.write_text("".join(lines))
    return manifest


def perfect_fixture(root):
    lines = []
    for label, color in (("Healthy", GREEN), ("Diseased", RED)):
        (root / label).mkdir(parents=True, exist_ok=True)
        for i in range(5):
            p = solid_image(root / label / f"p{i}.png", color)
            lines.append(f"{p}\t{label}\ttest\n")
    manifest = root / "perfect.tsv"
    manifest.write_text("".join(lines))
    return manifest


def stub_checkpoint(path):
    return save_checkpoint(color_stub_model(), path)


def conv_checkpoint(path, seed=0):
    """Small random conv net at the full 224 input size (Grad-CAM needs a conv layer)."""
    return save_checkpoint(Sequential(custom_cnn_config(filters=(3, 4), hidden=4), seed=seed), path)


def random_images(root, n=20, seed=0):
    """``n`` random-content images, alternating PNG and JPEG, various sizes."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        h, w = (int(v) for v in rng.integers(100, 320, 2))
        img = rng.random((h, w, 3))
        img[: h // 2] *= rng.random(3)
        p = root / f"leaf_{i:02d}.{'png' if i % 2 else 'jpg'}"
        save_image(p, img)
        paths.append(p)
    return paths


def balanced_checkpoint(path, images, seed=0):
    """Random conv net whose head bias is shifted so ``images`` split between both labels."""
    from leafcnn.datapipe import load_image

    model = Sequential(custom_cnn_config(filters=(3, 4), hidden=4), seed=seed)
    z = model.logits(np.stack([load_image(p) for p in images])).astype(np.float64)
    margin = z[:, 1] - z[:, 0]
    model.layers[-2].params["b"][1] -= np.float32(np.median(margin))
    return save_checkpoint(model, path)
