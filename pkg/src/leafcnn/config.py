"""Application configuration: JSON file, command-line overrides, defaults.

Precedence is flags > config file > defaults. Unknown keys are rejected at
every level. Example file::

    {
      "data": "leaves/",
      "train": {"epochs": 25, "batch_size": 32, "seed": 7},
      "optimizer": {"alpha": 0.001},
      "augment": {"rotation_deg": 15},
      "port": 8080
    }

Setting ``"augment": null`` disables augmentation.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .datapipe import AugmentSpec
from .errors import ParameterError
from .layers import DEFAULT_DROPOUT
from .model import FILTER_PLAN, HIDDEN_UNITS, custom_cnn_config
from .training import OptimizerConfig, TrainConfig


@dataclass(frozen=True)
class ArchConfig:
    filters: tuple = FILTER_PLAN
    hidden: int = HIDDEN_UNITS
    dropout: float = DEFAULT_DROPOUT

    def model_config(self):
        return custom_cnn_config(tuple(self.filters), self.hidden, self.dropout)


@dataclass(frozen=True)
class AppConfig:
    data: str = None
    manifest: str = None
    model: str = None
    port: int = 8000
    crop_boxes: bool = False
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)

    def to_dict(self):
        d = asdict(self)
        d["train"].pop("checkpoint_path")
        return d


_SECTIONS = {"arch": ArchConfig, "train": TrainConfig, "optimizer": OptimizerConfig, "augment": AugmentSpec}


def _build(cls, values, where):
    allowed = {f.name for f in fields(cls)} - {"checkpoint_path"}
    unknown = set(values) - allowed
    if unknown:
        raise ParameterError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**values)


def from_dict(d, base=None):
    """Overlay ``d`` onto ``base`` (defaults when omitted)."""
    base = base or AppConfig()
    if not isinstance(d, dict):
        raise ParameterError("configuration must be a JSON object")
    top = {f.name for f in fields(AppConfig)}
    unknown = set(d) - top
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    changes = {}
    for key, value in d.items():
        if key in _SECTIONS:
            if key == "augment" and value is None:
                changes[key] = None
                continue
            if not isinstance(value, dict):
                raise ParameterError(f"config section {key!r} must be an object")
            current = getattr(base, key) or _SECTIONS[key]()
            merged = {**_plain(current), **value}
            changes[key] = _build(_SECTIONS[key], merged, key)
        else:
            changes[key] = value
    return replace(base, **changes)


def _plain(section):
    d = asdict(section)
    d.pop("checkpoint_path", None)
    return d


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then ``overrides`` (same shape as the file)."""
    cfg = AppConfig()
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config {path} is not valid JSON: {exc}") from exc
        cfg = from_dict(raw, cfg)
    if overrides:
        cfg = from_dict(overrides, cfg)
    return cfg
