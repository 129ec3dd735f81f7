"""Adam, cross-entropy losses and the epoch loop."""

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .errors import DataError, DimensionError, DivergenceError, NumericError, ParameterError
from .layers import softmax_backward

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
LOSSES = ("categorical_ce", "binary_ce")


@dataclass(frozen=True)
class OptimizerConfig:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        # alpha = 0 is allowed: it freezes the weights, which the tests rely on
        if not self.alpha >= 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError(f"betas must be in [0, 1), got ({self.beta1}, {self.beta2})")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class OptimizerState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state, cfg=OptimizerConfig()):
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``state`` is created on first use when its moment lists are empty.
    Returns ``(params, state)``.
    """
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not (p.shape == g.shape == m.shape == v.shape):
            raise DimensionError(
                f"adam shape mismatch: param {p.shape}, grad {g.shape}, moments {m.shape}/{v.shape}"
            )
    state.t += 1
    c1 = 1.0 - cfg.beta1**state.t
    c2 = 1.0 - cfg.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params, state


# -- losses -----------------------------------------------------------------


def categorical_cross_entropy(pred, target):
    """Mean negative log-likelihood of the true class.

    Returns ``(loss, grad)`` where ``grad`` is taken w.r.t. the logits that
    produced ``pred`` through softmax: ``(pred - target) / N``.
    """
    if pred.shape != target.shape or pred.ndim != 2:
        raise DimensionError(f"pred {pred.shape} and target {target.shape} must be equal [N, K]")
    if not np.allclose(pred.sum(axis=1), 1.0, atol=1e-4):
        raise NumericError("prediction rows must sum to 1")
    if not (np.isin(target, (0, 1)).all() and (target.sum(axis=1) == 1).all()):
        raise DataError("targets must be one-hot rows")
    n = pred.shape[0]
    p_true = np.maximum(pred[target.astype(bool)], PROB_FLOOR)
    loss = -float(np.log(p_true.astype(np.float64)).sum()) / n
    return loss, (pred - target) / pred.dtype.type(n)


def binary_cross_entropy(pred, target):
    """Mean binary cross-entropy; returns ``(loss, grad w.r.t. pred)``."""
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    if not np.all(np.isfinite(pred)) or pred.min() < 0 or pred.max() > 1:
        raise NumericError("binary cross-entropy needs probabilities in (0, 1)")
    if not np.isin(target, (0, 1)).all():
        raise DataError("binary targets must be 0 or 1")
    n = pred.shape[0]
    p = np.clip(pred, PROB_FLOOR, 1 - PROB_FLOOR)
    p64 = p.astype(np.float64)
    t64 = target.astype(np.float64)
    loss = -float((t64 * np.log(p64) + (1 - t64) * np.log(1 - p64)).sum()) / n
    grad = (p - target) / (p * (1 - p)) / pred.dtype.type(n)
    return loss, grad


def one_hot(labels, k):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, k), dtype=np.float32)
    out[np.arange(labels.size), labels] = 1
    return out


def predict_labels(probs):
    """Argmax over classes; exact ties resolve to the highest class index (Diseased)."""
    return probs.shape[1] - 1 - np.argmax(probs[:, ::-1], axis=1)


def loss_and_grad(probs, labels, loss="categorical_ce"):
    """Loss on ``probs`` and the gradient w.r.t. the model's logits."""
    if loss == "categorical_ce":
        return categorical_cross_entropy(probs, one_hot(labels, probs.shape[1]).astype(probs.dtype))
    if loss == "binary_ce":
        if probs.shape[1] != 2:
            raise ParameterError("binary_ce needs a two-class model")
        value, dp = binary_cross_entropy(probs[:, 1], labels)
        dprobs = np.zeros_like(probs)
        dprobs[:, 1] = dp
        return value, softmax_backward(dprobs, probs)
    raise ParameterError(f"unknown loss {loss!r}; expected one of {LOSSES}")


# -- fit --------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    loss: str = "categorical_ce"
    seed: int = 0
    checkpoint_path: str = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if self.loss not in LOSSES:
            raise ParameterError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


class TrainingHistory(list):
    """List of :class:`EpochRecord` with CSV export."""

    def column(self, name):
        return [getattr(r, name) for r in self]

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for r in self:
            writer.writerow([r.epoch] + [repr(getattr(r, c)) for c in HISTORY_COLUMNS[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            EpochRecord(int(r["epoch"]), *(float(r[c]) for c in HISTORY_COLUMNS[1:])) for r in rows
        )


@dataclass
class FitResult:
    history: TrainingHistory
    best_epoch: int
    best_val_loss: float
    best_state: dict
    checkpoint_path: str = None


def evaluate_loss(model, dataset, loss="categorical_ce", batch_size=32):
    """Inference-mode (loss, accuracy) over a whole dataset."""
    total, correct, n = 0.0, 0, len(dataset)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        x, y = dataset.batch(idx)
        probs = model.forward(x)
        value, _ = loss_and_grad(probs, y, loss)
        total += value * len(idx)
        correct += int((predict_labels(probs) == y).sum())
    return total / n, correct / n


def fit(model, train_set, val_set, train_cfg=TrainConfig(), opt_cfg=OptimizerConfig(), on_epoch=None):
    """Train ``model`` in place and keep the weights with the lowest validation loss.

    Each epoch shuffles the training set with ``[seed, epoch]``, trains on
    batches of ``batch_size`` (the last one may be smaller), then scores the
    validation set in inference mode. Whenever validation loss improves the
    weights are snapshotted, and written to ``checkpoint_path`` if one is set.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training and validation sets must be non-empty")
    params = [p for _, _, p in model.parameters()]
    state = OptimizerState()
    history = TrainingHistory()
    best = FitResult(history, 0, math.inf, model.state_dict(), train_cfg.checkpoint_path)
    n = len(train_set)
    n_batches = math.ceil(n / train_cfg.batch_size)
    for epoch in range(1, train_cfg.epochs + 1):
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(n)
        loss_sum, correct = 0.0, 0
        for b in range(n_batches):
            idx = order[b * train_cfg.batch_size : (b + 1) * train_cfg.batch_size]
            x, y = train_set.batch(idx, epoch=epoch)
            step = (epoch - 1) * n_batches + b
            try:
                probs = model.forward(x, training=True, step=step)
            except NumericError:
                raise DivergenceError(epoch, b, math.nan) from None
            value, dlogits = loss_and_grad(probs, y, train_cfg.loss)
            if not math.isfinite(value):
                raise DivergenceError(epoch, b, value)
            model.backward(dlogits, input_grad=False)
            adam_step(params, [g for _, _, g in model.gradients()], state, opt_cfg)
            loss_sum += value * len(idx)
            correct += int((predict_labels(probs) == y).sum())
        model.clear_caches()
        val_loss, val_acc = evaluate_loss(model, val_set, train_cfg.loss, train_cfg.batch_size)
        if not math.isfinite(val_loss):
            raise DivergenceError(epoch, "validation", val_loss)
        record = EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc)
        history.append(record)
        log.info(
            "epoch %d: train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f",
            *(getattr(record, c) for c in HISTORY_COLUMNS),
        )
        if val_loss < best.best_val_loss:
            best.best_epoch, best.best_val_loss = epoch, val_loss
            best.best_state = model.state_dict()
            if train_cfg.checkpoint_path:
                meta = {c: getattr(record, c) for c in HISTORY_COLUMNS}
                save_checkpoint(model, train_cfg.checkpoint_path, metadata=meta)
        if on_epoch is not None:
            on_epoch(record)
    return best
