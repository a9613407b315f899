"""Training run artifacts: a delimited epoch log plus rendered figures.

write_report produces three files in the output directory:

    report.tsv        epoch / train_loss / val_precision / val_recall /
                      val_accuracy, one row per epoch
    loss_curve.png    training loss over epochs
    val_metrics.png   validation precision, recall, accuracy over epochs
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .training import TrainReport  # noqa: E402

COLUMNS = ("epoch", "train_loss", "val_precision", "val_recall", "val_accuracy")


def write_tsv(report: TrainReport, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(COLUMNS)
        for e in report.epochs:
            w.writerow([e.epoch, f"{e.train_loss:.6f}", f"{e.val_precision:.4f}",
                        f"{e.val_recall:.4f}", f"{e.val_accuracy:.4f}"])
    return path


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_loss(report: TrainReport, path: Path) -> Path:
    xs = [e.epoch for e in report.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, [e.train_loss for e in report.epochs], marker="o", lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_title("trigger detector training loss")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_val_metrics(report: TrainReport, path: Path) -> Path:
    xs = [e.epoch for e in report.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    for field, label in (("val_precision", "precision"),
                         ("val_recall", "recall"),
                         ("val_accuracy", "accuracy")):
        ax.plot(xs, [getattr(e, field) for e in report.epochs],
                marker=".", lw=1.2, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation metric")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("validation metrics")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def write_report(report: TrainReport, out_dir) -> list[Path]:
    """Write the TSV and both figures; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        write_tsv(report, out / "report.tsv"),
        plot_loss(report, out / "loss_curve.png"),
        plot_val_metrics(report, out / "val_metrics.png"),
    ]
