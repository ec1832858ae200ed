"""Figure rendering for the CLI report paths.

Every figure mirrors a delimited text file written next to it, so the plots
are a convenience view, never the only record. Rendering is headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import EvaluationReport  # noqa: E402


def save_curve_figure(rows: list[dict], path: Path, title: str = "") -> None:
    """Onset/offset confidence curves over the padded grid."""
    fig, ax = plt.subplots(figsize=(8, 3.2))
    n = [r["n"] for r in rows]
    ax.plot(n, [r["f_plus"] for r in rows], label="onset confidence",
            color="tab:blue")
    ax.plot(n, [r["f_minus"] for r in rows], label="offset confidence",
            color="tab:red")
    ax.set_xlabel("padded segment index")
    ax.set_ylabel("confidence")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_figure(rows: list[dict], path: Path) -> None:
    """Accuracy as a function of the segment window size."""
    ok = [r for r in rows if r["status"] == "ok"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([r["win_ms"] for r in ok], [r["accuracy"] for r in ok],
            marker="o", color="tab:blue")
    ax.set_xlabel("segment size (ms)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion_figure(report: EvaluationReport, path: Path) -> None:
    """Confusion matrix heatmap (rows: true class, columns: predicted)."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    im = ax.imshow(report.confusion, cmap="Blues")
    ax.set_xticks(range(len(report.classes)), report.classes,
                  rotation=45, ha="right")
    ax.set_yticks(range(len(report.classes)), report.classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(len(report.classes)):
        for j in range(len(report.classes)):
            v = int(report.confusion[i, j])
            if v:
                ax.text(j, i, str(v), ha="center", va="center", fontsize=8,
                        color="white" if v > report.confusion.max() / 2
                        else "black")
    fig.colorbar(im, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
