"""Figures for benchmark reports.

Uses :class:`matplotlib.figure.Figure` directly with the Agg canvas, so
nothing depends on pyplot state or a display.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.colors import ListedColormap
from matplotlib.figure import Figure

VERDICT_ORDER = ("VERIFIED", "BLOCKED", "FAILED", "HALLUCINATED")
VERDICT_COLORS = ("#4c9f70", "#8da0cb", "#c9c9c9", "#d95f5f")


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    return path


def plot_hallucination_rates(rows: Sequence[Mapping[str, object]], path: str | Path) -> Path:
    """Bar per system: hallucination rate with the raw count on top."""
    fig = Figure(figsize=(4.8, 3.2))
    ax = fig.add_subplot()
    names = [str(r["system"]) for r in rows]
    rates = [float(r["hallucination_rate"]) * 100 for r in rows]
    bars = ax.bar(names, rates, color="#d95f5f", width=0.6)
    for bar, row in zip(bars, rows):
        ax.annotate(str(row["hallucination"]), (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    xytext=(0, 3), textcoords="offset points", ha="center", fontsize=8)
    ax.set_ylim(0, 110)
    ax.set_ylabel("hallucination rate (%)")
    ax.set_xlabel("system")
    ax.spines[["top", "right"]].set_visible(False)
    return _save(fig, path)


def plot_outcome_matrix(matrix: Mapping[str, Mapping[str, str]], path: str | Path) -> Path:
    """Task x system grid coloured by audit verdict. ``matrix[system][task] = verdict``."""
    systems = list(matrix)
    tasks = sorted({t for col in matrix.values() for t in col})
    codes = [[VERDICT_ORDER.index(matrix[s].get(t, "FAILED")) for s in systems] for t in tasks]

    fig = Figure(figsize=(1.3 * len(systems) + 1.5, 0.38 * len(tasks) + 1.0))
    ax = fig.add_subplot()
    ax.imshow(codes, cmap=ListedColormap(VERDICT_COLORS), vmin=0, vmax=len(VERDICT_ORDER) - 1, aspect="auto")
    for i, task in enumerate(tasks):
        for j, system in enumerate(systems):
            ax.text(j, i, matrix[system].get(task, ""), ha="center", va="center", fontsize=6.5)
    ax.set_xticks(range(len(systems)), systems)
    ax.set_yticks(range(len(tasks)), tasks)
    ax.tick_params(length=0)
    return _save(fig, path)
