"""Layer zoo: convolution, pooling, dropout, dense and activations.

Each layer exposes ``forward(x, training=False, step=0)`` and
``backward(grad)``. Parameterised layers keep ``params`` and, after a
backward pass, matching ``grads`` keyed by ``"W"`` and ``"b"``.
The stateless kernels are also available as module-level functions.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError, ParameterError, StateError
from .tensor import DEFAULT_DTYPE, Shape4, col2im, im2col, matmul

KINDS = ("conv2d", "maxpool2d", "dropout", "flatten", "dense", "relu", "softmax")
DEFAULT_DROPOUT = 0.2


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    ``units`` is the filter count for ``conv2d`` and the unit count for
    ``dense``; it is ignored by the other kinds.
    """

    kind: str
    units: int = 0
    kernel: tuple = (2, 2)
    rate: float = DEFAULT_DROPOUT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "kernel", tuple(self.kernel))
        if self.kind in ("conv2d", "maxpool2d") and self.kernel != (2, 2):
            raise ParameterError(f"{self.kind} kernel must be 2x2, got {self.kernel}")
        if self.kind in ("conv2d", "dense") and self.units < 1:
            raise ParameterError(f"{self.kind} needs units >= 1, got {self.units}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ParameterError(f"dropout rate must be in [0, 1), got {self.rate}")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind in ("conv2d", "dense"):
            d["units"] = self.units
        if self.kind in ("conv2d", "maxpool2d"):
            d["kernel"] = list(self.kernel)
        if self.kind == "dropout":
            d["rate"] = self.rate
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "kernel" in d:
            d["kernel"] = tuple(d["kernel"])
        return cls(**d)


# -- initialisation ---------------------------------------------------------


@dataclass(frozen=True)
class InitBound:
    fan_in: int
    fan_out: int
    r: float = field(init=False)

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ParameterError(f"fans must be >= 1, got ({self.fan_in}, {self.fan_out})")
        object.__setattr__(self, "r", math.sqrt(6.0 / (self.fan_in + self.fan_out)))


def fans(shape):
    """(fan_in, fan_out) of a weight tensor.

    Conv kernels ``[kh, kw, cin, cout]`` count ``kh*kw*cin`` inputs and
    ``kh*kw*cout`` outputs; dense matrices ``[D, U]`` count ``D`` and ``U``.
    """
    if len(shape) == 4:
        kh, kw, cin, cout = shape
        return kh * kw * cin, kh * kw * cout
    if len(shape) == 2:
        return shape[0], shape[1]
    raise ParameterError(f"cannot derive fans from weight shape {tuple(shape)}")


def glorot_init(shape, seed, dtype=DEFAULT_DTYPE):
    """Xavier/Glorot uniform sample in ``[-r, r]``, deterministic in ``seed``."""
    bound = InitBound(*fans(shape))
    rng = np.random.default_rng(seed)
    w = rng.uniform(-bound.r, bound.r, size=shape).astype(dtype)
    # rounding to a narrower dtype can land one ulp past r
    r = np.asarray(bound.r, dtype=dtype)
    if r > bound.r:
        r = np.nextafter(r, np.asarray(0, dtype=dtype))
    return np.clip(w, -r, r)


# -- stateless kernels ------------------------------------------------------


def conv2d_forward(x, w, b):
    """Same-padded stride-1 convolution, NHWC input and ``[2, 2, Cin, Cout]`` kernel."""
    n, h, wd, c = Shape4.of(x)
    kh, kw, cin, cout = w.shape
    if cin != c:
        raise DimensionError(f"conv input has {c} channels but kernel expects {cin}")
    if b.shape != (cout,):
        raise DimensionError(f"conv bias shape {b.shape} does not match {cout} filters")
    cols = im2col(x, (kh, kw))
    out = matmul(cols, w.reshape(kh * kw * cin, cout)) + b
    return out.reshape(n, h, wd, cout)


def conv2d_backward(grad, x, w, cols=None):
    """Gradients of :func:`conv2d_forward` w.r.t. ``(x, w, b)``.

    ``cols`` may pass in the forward im2col matrix to avoid recomputing it.
    """
    kh, kw, cin, cout = w.shape
    g = grad.reshape(-1, cout)
    if cols is None:
        cols = im2col(x, (kh, kw))
    dw = matmul(cols.T, g).reshape(w.shape)
    db = g.sum(axis=0)
    dcols = matmul(g, w.reshape(kh * kw * cin, cout).T)
    dx = col2im(dcols, x.shape, (kh, kw))
    return dx, dw, db


def maxpool2d_forward(x):
    """Disjoint 2x2 max pooling with stride 2.

    Returns the pooled tensor and an argmax mask holding, for every output
    element, the winning position 0..3 inside its window (row-major; ties
    go to the first). Odd trailing rows/columns are dropped.
    """
    n, h, w, c = Shape4.of(x)
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool needs H, W >= 2, got {h}x{w}")
    corners = _corners(x)
    out = np.maximum(np.maximum(corners[0], corners[1]), np.maximum(corners[2], corners[3]))
    # first corner (row-major) that attains the max
    mask = (corners[0] != out).view(np.uint8).copy()
    mask += (mask == 1) & (corners[1] != out)
    mask += (mask == 2) & (corners[2] != out)
    return out, mask


def _corners(x):
    ho, wo = x.shape[1] // 2, x.shape[2] // 2
    return [x[:, di : 2 * ho : 2, dj : 2 * wo : 2, :] for di in (0, 1) for dj in (0, 1)]


def maxpool2d_backward(grad, mask, x_shape):
    dx = np.zeros(x_shape, dtype=grad.dtype)
    for k, view in enumerate(_corners(dx)):
        view[...] = np.where(mask == k, grad, 0)
    return dx


def dropout_mask(shape, rate, seed, step, dtype=DEFAULT_DTYPE):
    """Inverted-dropout multiplier: 0 with probability ``rate``, else ``1/(1-rate)``."""
    rng = np.random.default_rng([seed, step])
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) * np.asarray(1.0 / (1.0 - rate), dtype=dtype)


def dropout_forward(x, rate=DEFAULT_DROPOUT, training=False, seed=0, step=0):
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, seed, step, x.dtype)


def relu(x):
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def softmax(logits):
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError(f"softmax expects [N, K>=2] logits, got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax received non-finite logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(grad, probs):
    return probs * (grad - (grad * probs).sum(axis=1, keepdims=True))


def dense_forward(x, w, b):
    if x.ndim != 2:
        raise DimensionError(f"dense expects [N, D] input, got {x.shape}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"dense bias shape {b.shape} does not match weight {w.shape}")
    return matmul(x, w) + b


# -- layer objects ----------------------------------------------------------


class Layer:
    kind = ""
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def forward(self, x, training=False, step=0):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def clear_cache(self):
        self._cache = None

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.kind}.backward called before forward")
        return self._cache

    def spec(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.spec().to_dict()})"


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, in_channels, filters, seed=0, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.filters = filters
        shape = (2, 2, in_channels, filters)
        self.params = {"W": glorot_init(shape, seed, dtype), "b": np.zeros(filters, dtype)}

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if c != self.params["W"].shape[2]:
            raise DimensionError(f"conv2d expects {self.params['W'].shape[2]} channels, got {c}")
        return h, w, self.filters

    def forward(self, x, training=False, step=0):
        w, b = self.params["W"], self.params["b"]
        if x.ndim == 4 and x.shape[3] != w.shape[2]:
            raise DimensionError(f"conv input has {x.shape[3]} channels but kernel expects {w.shape[2]}")
        cols = im2col(x, (2, 2))
        self._cache = (x.shape, cols)
        out = matmul(cols, w.reshape(-1, w.shape[3])) + b
        return out.reshape(*x.shape[:3], w.shape[3])

    def backward(self, grad, input_grad=True):
        shape, cols = self._cached()
        w = self.params["W"]
        g = grad.reshape(-1, w.shape[3])
        self.grads = {"W": matmul(cols.T, g).reshape(w.shape), "b": g.sum(axis=0)}
        if not input_grad:
            return None
        return col2im(matmul(g, w.reshape(-1, w.shape[3]).T), shape, (2, 2))

    def spec(self):
        return LayerSpec("conv2d", units=self.filters)


class MaxPool2D(Layer):
    kind = "maxpool2d"

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if h < 2 or w < 2:
            raise DimensionError(f"maxpool2d needs H, W >= 2, got {h}x{w}")
        return h // 2, w // 2, c

    def forward(self, x, training=False, step=0):
        out, mask = maxpool2d_forward(x)
        self._cache = (mask, x.shape)
        return out

    def backward(self, grad):
        mask, shape = self._cached()
        return maxpool2d_backward(grad, mask, shape)

    def spec(self):
        return LayerSpec("maxpool2d")


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=DEFAULT_DROPOUT, seed=0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.seed = seed
        self._identity = None

    def forward(self, x, training=False, step=0):
        if not training or self.rate == 0.0:
            self._cache = None
            self._identity = True
            return x
        mask = dropout_mask(x.shape, self.rate, self.seed, step, x.dtype)
        self._cache = mask
        self._identity = False
        return x * mask

    def backward(self, grad):
        if self._identity:
            return grad
        return grad * self._cached()

    def spec(self):
        return LayerSpec("dropout", rate=self.rate)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, step=0):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached())

    def spec(self):
        return LayerSpec("flatten")


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, units, seed=0, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.units = units
        self.params = {"W": glorot_init((in_features, units), seed, dtype), "b": np.zeros(units, dtype)}

    def output_shape(self, input_shape):
        if len(input_shape) != 1 or input_shape[0] != self.params["W"].shape[0]:
            raise DimensionError(
                f"dense expects ({self.params['W'].shape[0]},) input, got {tuple(input_shape)}"
            )
        return (self.units,)

    def forward(self, x, training=False, step=0):
        self._cache = x
        return dense_forward(x, self.params["W"], self.params["b"])

    def backward(self, grad):
        x = self._cached()
        w = self.params["W"]
        self.grads = {"W": matmul(x.T, grad), "b": grad.sum(axis=0)}
        return matmul(grad, w.T)

    def spec(self):
        return LayerSpec("dense", units=self.units)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, step=0):
        self._cache = x > 0
        return relu(x)

    def backward(self, grad):
        return grad * self._cached()

    def spec(self):
        return LayerSpec("relu")


class Softmax(Layer):
    kind = "softmax"

    def output_shape(self, input_shape):
        if len(input_shape) != 1 or input_shape[0] < 2:
            raise DimensionError(f"softmax expects (K>=2,) input, got {tuple(input_shape)}")
        return tuple(input_shape)

    def forward(self, x, training=False, step=0):
        p = softmax(x)
        self._cache = p
        return p

    def backward(self, grad):
        return softmax_backward(grad, self._cached())

    def spec(self):
        return LayerSpec("softmax")


def build_layer(spec, input_shape, seed=0, dtype=DEFAULT_DTYPE):
    """Instantiate ``spec`` for an input of per-sample shape ``input_shape``."""
    if spec.kind == "conv2d":
        if len(input_shape) != 3:
            raise DimensionError(f"conv2d needs (H, W, C) input, got {tuple(input_shape)}")
        return Conv2D(input_shape[2], spec.units, seed=seed, dtype=dtype)
    if spec.kind == "dense":
        if len(input_shape) != 1:
            raise DimensionError(f"dense needs flat input, got {tuple(input_shape)}")
        return Dense(input_shape[0], spec.units, seed=seed, dtype=dtype)
    if spec.kind == "maxpool2d":
        return MaxPool2D()
    if spec.kind == "dropout":
        return Dropout(spec.rate, seed=seed)
    if spec.kind == "flatten":
        return Flatten()
    if spec.kind == "relu":
        return ReLU()
    return Softmax()


__all__ = [
    "LayerSpec", "InitBound", "fans", "glorot_init", "conv2d_forward", "conv2d_backward",
    "maxpool2d_forward", "maxpool2d_backward", "dropout_forward", "dropout_mask", "relu",
    "softmax", "softmax_backward", "dense_forward", "Layer", "Conv2D", "MaxPool2D",
    "Dropout", "Flatten", "Dense", "ReLU", "Softmax", "build_layer",
]
