"""Log-log variance plots written as SVG with a companion CSV.

Every plot is rendered from its CSV (long format: ``panel, series, style,
scale, value, ci_lo, ci_hi``), so the CSV alone regenerates the figure.
Solid lines are empirical, dashed lines implied; ``ci_lo``/``ci_hi``
(optional) draw a band.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["KINDS", "PlotSeries", "PlotSpec", "render_svg", "series_to_csv", "write_plot"]

KINDS = ("wv", "wv_compare", "fit_overlay", "fit_decomposition", "auto_grid")
STYLES = ("empirical", "implied", "component")
COLUMNS = ["panel", "series", "style", "scale", "value", "ci_lo", "ci_hi"]


@dataclass(frozen=True)
class PlotSpec:
    kind: str = "wv"
    title: str = ""
    ci: bool = True
    xlabel: str = "scale (s)"
    ylabel: str = "wavelet variance"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")


@dataclass(frozen=True)
class PlotSeries:
    name: str
    scale: np.ndarray
    value: np.ndarray
    style: str = "empirical"
    ci_lo: np.ndarray | None = None
    ci_hi: np.ndarray | None = None
    panel: str = ""


def series_to_csv(series: Iterable[PlotSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for s in series:
        if s.style not in STYLES:
            raise ValueError(f"unknown style {s.style!r}")
        for k in range(len(s.scale)):
            lo = "" if s.ci_lo is None else repr(float(s.ci_lo[k]))
            hi = "" if s.ci_hi is None else repr(float(s.ci_hi[k]))
            w.writerow([s.panel, s.name, s.style, repr(float(s.scale[k])), repr(float(s.value[k])), lo, hi])
    return buf.getvalue()


def _parse(csv_text: str) -> list[PlotSeries]:
    rows = list(csv.DictReader(io.StringIO(csv_text)))
    groups: dict[tuple[str, str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["panel"], r["series"], r["style"]), []).append(r)
    out = []
    for (panel, name, style), rs in groups.items():
        has_ci = all(r["ci_lo"] != "" and r["ci_hi"] != "" for r in rs)
        out.append(
            PlotSeries(
                name,
                np.array([float(r["scale"]) for r in rs]),
                np.array([float(r["value"]) for r in rs]),
                style,
                np.array([float(r["ci_lo"]) for r in rs]) if has_ci else None,
                np.array([float(r["ci_hi"]) for r in rs]) if has_ci else None,
                panel,
            )
        )
    return out


def render_svg(csv_text: str, spec: PlotSpec) -> str:
    """SVG text for the series in ``csv_text``; byte-identical for identical input."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = _parse(csv_text)
    panels = list(dict.fromkeys(s.panel for s in series)) or [""]
    n = len(panels)
    ncol = min(3, n)
    nrow = math.ceil(n / ncol)
    rc = {"svg.hashsalt": "wvcal", "svg.fonttype": "none", "font.family": "DejaVu Sans", "font.size": 9}
    with plt.rc_context(rc):
        fig, axes = plt.subplots(nrow, ncol, figsize=(4.2 * ncol, 3.4 * nrow), squeeze=False)
        for ax, panel in zip(axes.flat, panels):
            colors = iter(plt.rcParams["axes.prop_cycle"].by_key()["color"] * 4)
            for s in (s for s in series if s.panel == panel):
                ok = (s.scale > 0) & (s.value > 0)
                color = next(colors)
                ls = {"empirical": "-", "implied": "--", "component": ":"}[s.style]
                ax.plot(s.scale[ok], s.value[ok], ls, color=color, marker="o" if s.style == "empirical" else None, ms=3, lw=1.2, label=s.name)
                if spec.ci and s.ci_lo is not None and s.ci_hi is not None:
                    band = ok & (s.ci_lo > 0) & (s.ci_hi > 0)
                    ax.fill_between(s.scale[band], s.ci_lo[band], s.ci_hi[band], color=color, alpha=0.18, lw=0)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.grid(True, which="both", lw=0.3, alpha=0.5)
            ax.set_xlabel(spec.xlabel)
            ax.set_ylabel(spec.ylabel)
            if panel:
                ax.set_title(panel)
            if ax.lines:
                ax.legend(fontsize=7, frameon=False)
        for ax in list(axes.flat)[n:]:
            ax.set_visible(False)
        if spec.title:
            fig.suptitle(spec.title)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "wvcal"})
        plt.close(fig)
    return buf.getvalue()


def write_plot(path: str | Path, series: Sequence[PlotSeries], spec: PlotSpec) -> tuple[Path, Path]:
    """Write ``<path>.svg`` and ``<path>.csv``; the SVG is rendered from the CSV text."""
    base = Path(path)
    if base.suffix.lower() in (".svg", ".csv"):
        base = base.with_suffix("")
    csv_path, svg_path = base.with_suffix(".csv"), base.with_suffix(".svg")
    text = series_to_csv(series)
    csv_path.write_text(text)
    svg_path.write_text(render_svg(text, spec))
    return svg_path, csv_path
