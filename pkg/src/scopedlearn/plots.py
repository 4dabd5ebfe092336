"""Matplotlib rendering of precision-recall curves to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")  # file output only; must be set before pyplot loads

import matplotlib.pyplot as plt

from .evaluation import PRCurve

__all__ = ["render_pr_curves"]


def render_pr_curves(curves: dict[str, PRCurve], path, title: str | None = None) -> None:
    """Draw one or more named curves (recall on x, precision on y) and save.

    PNG output carries no software/date metadata so repeated runs of the
    same evaluation produce byte-identical files.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name in sorted(curves):
        points = sorted(curves[name].points, key=lambda p: p[2])  # by recall
        ax.plot(
            [r for _, _, r in points],
            [p for _, p, _ in points],
            marker=".",
            markersize=3,
            linewidth=1.2,
            label=name,
        )
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, 1.02)
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
