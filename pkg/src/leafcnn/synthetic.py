"""Synthetic leaf-like images for fixtures and overfit checks.

Each image is a noisy green background with one bright blob. The blob sits
in the top-left quadrant for Healthy and in the bottom-right quadrant for
Diseased, so the class is recoverable from position alone.
"""

from pathlib import Path

import numpy as np

from .datapipe import save_image
from .model import CLASS_NAMES, INPUT_SIZE

BACKGROUND = np.array([0.20, 0.45, 0.15], dtype=np.float32)
BLOB = np.array([0.85, 0.70, 0.20], dtype=np.float32)


def quadrant_blob(label, rng, size=INPUT_SIZE, noise=0.05):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    half = size / 2
    lo, hi = 0.25 * half, 0.75 * half
    cy, cx = rng.uniform(lo, hi, 2)
    if label == 1:
        cy, cx = cy + half, cx + half
    sigma = rng.uniform(0.08, 0.14) * size
    weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))[..., None]
    img = (1 - weight) * BACKGROUND + weight * BLOB
    img += rng.normal(0, noise, img.shape).astype(np.float32)
    return np.clip(img, 0, 1).astype(np.float32)


def make_quadrant_blobs(n, seed=0, size=INPUT_SIZE, noise=0.05):
    """``n`` images with alternating labels 0, 1, 0, ...; returns ``(x, y)``."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = np.stack([quadrant_blob(int(label), rng, size, noise) for label in y])
    return x, y


def write_image_folder(root, x, y, class_names=CLASS_NAMES, prefix="img", suffix=".png"):
    """Save images under ``root/<class>/`` and return their paths."""
    root = Path(root)
    paths = []
    for i, (img, label) in enumerate(zip(x, y)):
        folder = root / class_names[int(label)]
        folder.mkdir(parents=True, exist_ok=True)
        path = folder / f"{prefix}_{i:04d}{suffix}"
        save_image(path, img)
        paths.append(path)
    return paths
