"""Matplotlib figures written next to the text/CSV reports."""

from contextlib import contextmanager

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .explain import overlay  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


@contextmanager
def report_style():
    with plt.rc_context(STYLE):
        yield


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_confusion_matrix(report, path, class_names=("Healthy", "Diseased")):
    """2x2 count matrix, rows = truth, columns = prediction."""
    cm = report.cm
    neg, pos = [c for c in class_names if c != report.positive][0], report.positive
    counts = np.array([[cm.tn, cm.fp], [cm.fn, cm.tp]])
    with report_style():
        fig, ax = plt.subplots(figsize=(3.4, 3.0))
        ax.imshow(counts, cmap="Blues")
        for (i, j), v in np.ndenumerate(counts):
            color = "white" if v > counts.max() / 2 else "black"
            ax.text(j, i, str(v), ha="center", va="center", color=color)
        ax.set_xticks([0, 1], [neg, pos])
        ax.set_yticks([0, 1], [neg, pos])
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(f"accuracy {report.accuracy:.4f}")
        return _save(fig, path)


def plot_history(history, path):
    """Accuracy and loss curves per epoch, train against validation."""
    epochs = history.column("epoch")
    with report_style():
        fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        ax_acc.plot(epochs, history.column("train_acc"), label="train")
        ax_acc.plot(epochs, history.column("val_acc"), label="validation")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("accuracy")
        ax_acc.legend(frameon=False)
        ax_loss.plot(epochs, history.column("train_loss"), label="train")
        ax_loss.plot(epochs, history.column("val_loss"), label="validation")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("loss")
        ax_loss.legend(frameon=False)
        return _save(fig, path)


def plot_gradcam(image, heatmap, path, title=None):
    with report_style():
        fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.7))
        axes[0].imshow(np.clip(image, 0, 1))
        axes[0].set_title("input")
        im = axes[1].imshow(heatmap.values, cmap="jet", vmin=0, vmax=1)
        axes[1].set_title("Grad-CAM")
        fig.colorbar(im, ax=axes[1], fraction=0.046)
        axes[2].imshow(np.clip(overlay(image, heatmap), 0, 1))
        axes[2].set_title(title or "overlay")
        for ax in axes:
            ax.axis("off")
        return _save(fig, path)
