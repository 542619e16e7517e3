"""Report figures rendered to files alongside the text and JSON outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import EvalReport, TYPE_ORDER, TypeScore


def save_accuracy_figure(report: EvalReport, path: str | Path) -> Path:
    """Bar chart of per-type accuracy with the overall accuracy as a line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = [t.value for t in TYPE_ORDER]
    scores = [report.per_type.get(t.value, TypeScore()) for t in TYPE_ORDER]
    accuracies = [s.accuracy for s in scores]

    fig, ax = plt.subplots(figsize=(7, 4))
    bars = ax.bar(labels, accuracies, color="#4878cf")
    ax.axhline(report.overall.accuracy, color="#d65f5f", linestyle="--", linewidth=1.2,
               label=f"overall {report.overall.accuracy:.3f}")
    for bar, score in zip(bars, scores):
        ax.annotate(
            f"{score.correct}/{score.total}",
            xy=(bar.get_x() + bar.get_width() / 2, bar.get_height()),
            xytext=(0, 3), textcoords="offset points",
            ha="center", fontsize=8,
        )
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title("Accuracy per answer type")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_error_breakdown_figure(counts: dict[str, int], total: int, path: str | Path) -> Path:
    """Horizontal bars with the share of each annotated error category."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = list(counts.keys())
    shares = [100.0 * counts[k] / total if total else 0.0 for k in labels]

    fig, ax = plt.subplots(figsize=(7, 0.5 * max(len(labels), 4) + 1.5))
    bars = ax.barh(labels, shares, color="#6acc65")
    for bar, share in zip(bars, shares):
        ax.annotate(
            f"{share:.1f}%",
            xy=(bar.get_width(), bar.get_y() + bar.get_height() / 2),
            xytext=(4, 0), textcoords="offset points",
            va="center", fontsize=8,
        )
    ax.set_xlabel("% of traces")
    ax.set_title("Error categories")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
