"""Model configuration and the sequential network built from it."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .layers import DEFAULT_DROPOUT, LayerSpec, build_layer
from .tensor import DEFAULT_DTYPE

CLASS_NAMES = ("Healthy", "Diseased")
INPUT_SIZE = 224
FILTER_PLAN = (16, 32, 64, 128)
HIDDEN_UNITS = 128
# conv blocks (0-based) followed by a dropout layer
DROPOUT_AFTER_BLOCKS = (1, 2)


@dataclass(frozen=True)
class ModelConfig:
    input_shape: tuple = (INPUT_SIZE, INPUT_SIZE, 3)
    layers: tuple = ()
    class_names: tuple = CLASS_NAMES

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if len(self.class_names) < 2:
            raise ParameterError("a classifier needs at least two classes")

    def to_dict(self):
        return {
            "input_shape": list(self.input_shape),
            "class_names": list(self.class_names),
            "layers": [spec.to_dict() for spec in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"input_shape", "class_names", "layers"}
        if unknown:
            raise ParameterError(f"unknown model config keys: {sorted(unknown)}")
        return cls(
            input_shape=tuple(d["input_shape"]),
            class_names=tuple(d.get("class_names", CLASS_NAMES)),
            layers=tuple(LayerSpec.from_dict(s) for s in d["layers"]),
        )

    def trace(self):
        """Per-sample output shape after every layer; raises if the stack does not type-check."""
        shapes = []
        shape = self.input_shape
        for i, spec in enumerate(self.layers):
            try:
                shape = _output_shape(spec, shape)
            except DimensionError as exc:
                raise DimensionError(f"layer {i} ({spec.kind}): {exc}") from None
            shapes.append(shape)
        if shapes and shapes[-1] != (len(self.class_names),):
            raise DimensionError(
                f"network ends in {shapes[-1]} but there are {len(self.class_names)} classes"
            )
        return shapes


def _output_shape(spec, shape):
    if spec.kind == "conv2d":
        if len(shape) != 3:
            raise DimensionError(f"needs (H, W, C) input, got {shape}")
        return (shape[0], shape[1], spec.units)
    if spec.kind == "maxpool2d":
        if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
            raise DimensionError(f"needs (H>=2, W>=2, C) input, got {shape}")
        return (shape[0] // 2, shape[1] // 2, shape[2])
    if spec.kind == "flatten":
        return (int(np.prod(shape)),)
    if spec.kind == "dense":
        if len(shape) != 1:
            raise DimensionError(f"needs flat input, got {shape}")
        return (spec.units,)
    if spec.kind == "softmax" and (len(shape) != 1 or shape[0] < 2):
        raise DimensionError(f"needs (K>=2,) input, got {shape}")
    return shape


def custom_cnn_config(
    filters=FILTER_PLAN,
    hidden=HIDDEN_UNITS,
    dropout=DEFAULT_DROPOUT,
    input_size=INPUT_SIZE,
    channels=3,
    class_names=CLASS_NAMES,
):
    """The leaf classifier: conv/relu/pool blocks, one hidden dense layer, softmax head."""
    specs = []
    for block, units in enumerate(filters):
        specs += [LayerSpec("conv2d", units=units), LayerSpec("relu"), LayerSpec("maxpool2d")]
        if block in DROPOUT_AFTER_BLOCKS:
            specs.append(LayerSpec("dropout", rate=dropout))
    specs += [
        LayerSpec("flatten"),
        LayerSpec("dense", units=hidden),
        LayerSpec("relu"),
        LayerSpec("dropout", rate=dropout),
        LayerSpec("dense", units=len(class_names)),
        LayerSpec("softmax"),
    ]
    return ModelConfig((input_size, input_size, channels), tuple(specs), tuple(class_names))


class Sequential:
    """A stack of layers built from a :class:`ModelConfig`.

    Layer ``i`` is seeded with ``[seed, i]`` so that Glorot draws and dropout
    masks are reproducible. The final layer must be ``softmax``;
    :meth:`logits` stops just before it.
    """

    def __init__(self, config, seed=0, dtype=DEFAULT_DTYPE):
        if not config.layers or config.layers[-1].kind != "softmax":
            raise ParameterError("the last layer must be softmax")
        config.trace()
        self.config = config
        self.seed = seed
        self.layers = []
        shape = config.input_shape
        for i, spec in enumerate(config.layers):
            layer = build_layer(spec, shape, seed=[seed, i], dtype=dtype)
            self.layers.append(layer)
            shape = layer.output_shape(shape)

    @property
    def class_names(self):
        return self.config.class_names

    @property
    def dtype(self):
        for _, _, p in self.parameters():
            return p.dtype
        return np.dtype(DEFAULT_DTYPE)

    def check_input(self, x):
        if x.ndim != 4 or tuple(x.shape[1:]) != self.config.input_shape:
            raise DimensionError(
                f"model expects [N, {', '.join(map(str, self.config.input_shape))}], got {x.shape}"
            )

    def forward(self, x, training=False, step=0, stop=None):
        """Run layers ``[0, stop)``; by default the whole network (probabilities)."""
        self.check_input(x)
        return self.run(x.astype(self.dtype, copy=False), 0, stop, training, step)

    def run(self, x, start=0, stop=None, training=False, step=0):
        """Run ``layers[start:stop]`` on an intermediate activation ``x``."""
        for layer in self.layers[start:stop]:
            x = layer.forward(x, training=training, step=step)
        return x

    def logits(self, x, training=False, step=0):
        return self.forward(x, training=training, step=step, stop=-1)

    def predict_proba(self, x, batch_size=32):
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def backward(self, grad, start=None, stop=0, input_grad=True):
        """Backpropagate ``grad`` from the output of layer ``start - 1`` down to layer ``stop``.

        ``start`` defaults to the layer before softmax so the gradient is the
        one w.r.t. logits. Returns the gradient w.r.t. the input of ``stop``,
        or None when ``input_grad`` is false and that layer can skip it.
        """
        if start is None:
            start = len(self.layers) - 1
        for i in range(start - 1, stop - 1, -1):
            layer = self.layers[i]
            if i == stop and not input_grad and layer.kind == "conv2d":
                return layer.backward(grad, input_grad=False)
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        """Yield ``(layer_index, name, array)`` in a fixed order."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def gradients(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.grads.get(name)

    def param_count(self):
        return sum(p.size for _, _, p in self.parameters())

    def state_dict(self):
        return {f"{i}.{name}": p.copy() for i, name, p in self.parameters()}

    def load_state_dict(self, state):
        expected = {f"{i}.{name}": p for i, name, p in self.parameters()}
        if set(state) != set(expected):
            raise ParameterError(f"state keys {sorted(state)} do not match {sorted(expected)}")
        for key, p in expected.items():
            if state[key].shape != p.shape:
                raise DimensionError(f"{key}: shape {state[key].shape} != {p.shape}")
            i, name = key.split(".")
            self.layers[int(i)].params[name] = np.array(state[key], dtype=p.dtype)

    def astype(self, dtype):
        for layer in self.layers:
            for name, p in layer.params.items():
                layer.params[name] = p.astype(dtype)
        return self

    def clear_caches(self):
        for layer in self.layers:
            layer.clear_cache()

    def conv_indices(self):
        return [i for i, layer in enumerate(self.layers) if layer.kind == "conv2d"]

    def summary(self):
        lines = [f"input {self.config.input_shape}"]
        for i, (spec, shape) in enumerate(zip(self.config.layers, self.config.trace())):
            lines.append(f"{i:2d} {spec.kind:<9s} -> {shape}")
        lines.append(f"parameters: {self.param_count()}")
        return "\n".join(lines)
