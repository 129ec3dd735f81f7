"""Grad-CAM heatmaps and their export formats."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

OVERLAY_ALPHA = 0.4


@dataclass
class Heatmap:
    values: np.ndarray
    source_layer: int
    target_class: int
    raw: np.ndarray = None


def feature_layer(model, conv_index=None):
    """Index of the layer whose output Grad-CAM reads.

    Defaults to the last conv layer; when a ReLU directly follows the conv,
    its rectified output is used as the feature maps.
    """
    convs = model.conv_indices()
    if not convs:
        raise ParameterError("Grad-CAM needs a model with at least one conv2d layer")
    if conv_index is None:
        conv_index = convs[-1]
    if conv_index not in convs:
        raise ParameterError(f"layer {conv_index} is not a conv2d layer (conv layers: {convs})")
    nxt = conv_index + 1
    if nxt < len(model.layers) and model.layers[nxt].kind == "relu":
        return nxt
    return conv_index


def bilinear_matrix(n_in, n_out):
    """``[n_out, n_in]`` interpolation weights, half-pixel centres, edges clamped."""
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1 - frac
    m[np.arange(n_out), hi] += frac
    return m


def upsample_bilinear(a, out_h, out_w):
    return bilinear_matrix(a.shape[0], out_h) @ a @ bilinear_matrix(a.shape[1], out_w).T


def cell_footprint(cell, in_shape, out_shape):
    """Output pixels whose bilinear interpolation draws on feature cell ``(i, j)``."""
    rows = bilinear_matrix(in_shape[0], out_shape[0])[:, cell[0]] > 0
    cols = bilinear_matrix(in_shape[1], out_shape[1])[:, cell[1]] > 0
    return np.outer(rows, cols)


def normalize(h):
    """Min-max scale to [0, 1]; an all-zero map stays all-zero."""
    hi, lo = h.max(), h.min()
    if hi <= 0:
        return np.zeros_like(h)
    if hi == lo:
        return np.ones_like(h)
    return (h - lo) / (hi - lo)


def grad_cam(model, image, target_class, conv_index=None):
    """Gradient-weighted class activation map of ``image`` for ``target_class``.

    The class score is the pre-softmax logit. Channel weights are the
    spatial means of its gradient over the chosen conv layer's feature maps;
    the rectified weighted sum is upsampled to the input size and min-max
    normalised.
    """
    k = len(model.class_names)
    if not 0 <= int(target_class) < k:
        raise ParameterError(f"target class {target_class} out of range for {k} classes")
    x = np.asarray(image)[None] if np.ndim(image) == 3 else np.asarray(image)
    model.check_input(x)
    feat = feature_layer(model, conv_index)
    acts = model.run(x.astype(model.dtype, copy=False), 0, feat + 1)
    logits = model.run(acts, feat + 1, -1)
    seed = np.zeros_like(logits)
    seed[:, int(target_class)] = 1
    grads = model.backward(seed, start=len(model.layers) - 1, stop=feat + 1)
    alpha = grads[0].mean(axis=(0, 1))
    raw = np.maximum((acts[0] * alpha).sum(axis=-1), 0)
    h, w = model.config.input_shape[:2]
    up = upsample_bilinear(raw.astype(np.float64), h, w)
    model.clear_caches()
    return Heatmap(normalize(up), feat, int(target_class), raw)


# -- export -----------------------------------------------------------------


def write_pfm(path, values):
    """Greyscale portable float map (little-endian, rows stored bottom to top)."""
    values = np.asarray(values, dtype="<f4")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(values[::-1].tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        w, h = (int(v) for v in fh.readline().split())
        scale = float(fh.readline())
        if kind != b"Pf":
            raise ValueError(f"{path}: only greyscale PFM is supported")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dtype)
    return data.reshape(h, w)[::-1].astype(np.float32)


def colorize(values, cmap="jet"):
    from matplotlib import colormaps

    return colormaps[cmap](np.clip(values, 0, 1))[..., :3]


def overlay(image, heatmap, alpha=OVERLAY_ALPHA):
    """Blend a colourised heatmap onto an RGB image in [0, 1]."""
    values = heatmap.values if isinstance(heatmap, Heatmap) else heatmap
    return (1 - alpha) * np.asarray(image, dtype=np.float64) + alpha * colorize(values)


def write_ppm(path, rgb):
    """Binary 8-bit PPM (P6) of an RGB array in [0, 1]."""
    arr = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
