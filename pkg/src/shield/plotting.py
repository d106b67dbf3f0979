"""Figures for the polynomial-space reports."""

from __future__ import annotations

import io
import math
from typing import Mapping

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .explorer import SpaceReport

GOLDEN = (math.sqrt(5) - 1) / 2

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}


def _render(fig: Figure) -> bytes:
    FigureCanvasAgg(fig)
    buf = io.BytesIO()
    # no Software/date metadata, so identical inputs give identical bytes
    fig.savefig(buf, format="png", dpi=150, metadata={"Software": None})
    return buf.getvalue()


def _draw_space(ax, report: SpaceReport, title: str | None, annotate: bool = True) -> None:
    finite = [r for r in report.rows if math.isfinite(r.epsilon)]
    ax.scatter([r.epsilon for r in finite], [100 * r.gta for r in finite],
               s=6, color="0.7", label="polynomials", zorder=1)
    front = report.front
    ax.plot([r.epsilon for r in front], [100 * r.gta for r in front], "-o", ms=3.5,
            color="C0", lw=1, label="Pareto front", zorder=2)
    if annotate and len(front) <= 12:
        for r in front:
            ax.annotate(r.label, (r.epsilon, 100 * r.gta), fontsize=6,
                        xytext=(3, -8), textcoords="offset points")
    ref = report.exact_argmax
    ax.axhline(100 * ref.gta, color="C3", lw=0.8, ls="--", label="exact argmax GTA")
    ax.set_xlabel(r"$\varepsilon$" + f" ($\\delta$={report.delta:g}, {report.mode})")
    ax.set_ylabel("GTA (%)")
    if title:
        ax.set_title(title, fontsize=9)
    ax.grid(True, lw=0.3, alpha=0.6)


def pareto_figure(report: SpaceReport, title: str | None = None, width: float = 4.5) -> bytes:
    """PNG of one polynomial space: all points, the front, the argmax GTA."""
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width, width * GOLDEN * 1.2))
        ax = fig.add_subplot()
        _draw_space(ax, report, title)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        return _render(fig)


def fronts_figure(reports: Mapping[int, SpaceReport], width: float = 9.0) -> bytes:
    """One panel per coefficient-sum bound, side by side."""
    import matplotlib

    with matplotlib.rc_context(STYLE):
        n = len(reports)
        fig = Figure(figsize=(width, width / max(n, 1) * 1.1))
        for j, (bound, report) in enumerate(sorted(reports.items())):
            ax = fig.add_subplot(1, n, j + 1)
            _draw_space(ax, report, f"coefficient sum <= {bound}", annotate=False)
            if j:
                ax.set_ylabel("")
        fig.axes[-1].legend(loc="lower right", frameon=False)
        fig.tight_layout()
        return _render(fig)
