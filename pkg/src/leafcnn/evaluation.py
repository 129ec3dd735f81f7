"""Confusion matrices, accuracy/precision/recall/F1 and report rendering."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .model import CLASS_NAMES
from .training import predict_labels

POSITIVE_CLASS = "Diseased"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DataError(f"confusion counts must be non-negative: {self}")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    cm: ConfusionMatrix
    degenerate: tuple = ()
    positive: str = POSITIVE_CLASS
    per_class: dict = field(default_factory=dict)

    @property
    def macro_f1(self):
        return float(np.mean([m["f1"] for m in self.per_class.values()])) if self.per_class else self.f1


def confusion_matrix(predictions, truths, positive=POSITIVE_CLASS):
    """One-vs-rest tally of ``predictions`` against ``truths`` for ``positive``."""
    predictions, truths = list(predictions), list(truths)
    if len(predictions) != len(truths):
        raise DataError(f"{len(predictions)} predictions but {len(truths)} truths")
    if not truths:
        raise DataError("cannot build a confusion matrix from zero samples")
    tp = fp = tn = fn = 0
    for p, t in zip(predictions, truths):
        if p == positive:
            if t == positive:
                tp += 1
            else:
                fp += 1
        elif t == positive:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


def compute_metrics(cm, positive=POSITIVE_CLASS, per_class=None):
    """Accuracy, precision, recall and F1 of ``cm``.

    A zero denominator yields 0 for that metric and names it in
    ``degenerate`` instead of raising.
    """
    if cm.total == 0:
        raise DataError("cannot compute metrics of an empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision, bad_p = _ratio(cm.tp, cm.tp + cm.fp)
    recall, bad_r = _ratio(cm.tp, cm.tp + cm.fn)
    f1, bad_f = _ratio(2 * precision * recall, precision + recall)
    degenerate = tuple(n for n, bad in (("precision", bad_p), ("recall", bad_r), ("f1", bad_f)) if bad)
    return MetricsReport(accuracy, precision, recall, f1, cm, degenerate, positive, per_class or {})


def per_class_metrics(predictions, truths, classes):
    """One-vs-rest precision/recall/F1 and support for every class."""
    out = {}
    for c in classes:
        m = compute_metrics(confusion_matrix(predictions, truths, c), c)
        support = sum(1 for t in truths if t == c)
        correct = sum(1 for p, t in zip(predictions, truths) if p == t == c)
        out[c] = {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": support, "correct": correct}
    return out


def evaluate_predictions(predictions, truths, class_names=CLASS_NAMES, positive=POSITIVE_CLASS):
    predictions, truths = list(predictions), list(truths)
    cm = confusion_matrix(predictions, truths, positive)
    return compute_metrics(cm, positive, per_class_metrics(predictions, truths, class_names))


def predict_dataset(model, dataset, batch_size=32):
    """Inference-mode class probabilities for every sample in ``dataset``."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate an empty dataset")
    probs = []
    for start in range(0, len(dataset), batch_size):
        x, _ = dataset.batch(np.arange(start, min(start + batch_size, len(dataset))))
        probs.append(model.forward(x))
    return np.concatenate(probs)


def evaluate_model(model, dataset, positive=POSITIVE_CLASS, batch_size=32):
    probs = predict_dataset(model, dataset, batch_size)
    names = model.class_names
    predictions = [names[i] for i in predict_labels(probs)]
    truths = [names[i] for i in dataset.labels]
    return evaluate_predictions(predictions, truths, names, positive)


# -- rendering --------------------------------------------------------------


def format_report(report, fmt="text", class_names=CLASS_NAMES):
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["accuracy", "precision", "recall", "f1", "tp", "fp", "tn", "fn"])
        cm = report.cm
        w.writerow([repr(report.accuracy), repr(report.precision), repr(report.recall), repr(report.f1),
                    cm.tp, cm.fp, cm.tn, cm.fn])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    cm = report.cm
    negative = next((c for c in class_names if c != report.positive), "rest")
    lines = [
        f"accuracy   {report.accuracy:.4f}",
        f"precision  {report.precision:.4f}",
        f"recall     {report.recall:.4f}",
        f"f1         {report.f1:.4f}",
        f"confusion matrix (positive = {report.positive})",
        f"{'':>14s}{'pred ' + negative:>16s}{'pred ' + report.positive:>16s}",
        f"{'true ' + negative:>14s}{cm.tn:>16d}{cm.fp:>16d}",
        f"{'true ' + report.positive:>14s}{cm.fn:>16d}{cm.tp:>16d}",
    ]
    if report.degenerate:
        lines.append(f"degenerate: {', '.join(report.degenerate)} (zero denominator, reported as 0)")
    for name, m in report.per_class.items():
        lines.append(
            f"class {name}: {m['correct']}/{m['support']} correct, "
            f"precision {m['precision']:.4f} recall {m['recall']:.4f} f1 {m['f1']:.4f}"
        )
    return "\n".join(lines) + "\n"
