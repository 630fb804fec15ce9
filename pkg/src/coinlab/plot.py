"""Diagnostic figures: residual scatter and per-symbol-pair histograms.

Figures are rendered to SVG with a fixed hash salt, text kept as text, and
no date metadata, so the same data yields byte-identical files on every run.
"""
from __future__ import annotations

from dataclasses import dataclass

import matplotlib
from matplotlib.figure import Figure

import numpy as np

from .bell import EmptyClass, chsh_S, chsh_stderr, tally
from .matcher import CoincidenceSet, MutualPairs

GLYPHS = {0: "s", 1: "D", 2: "+", 3: "x"}
MULTIPLE_GLYPH = "$M$"
PALETTE = {0: "#1f77b4", 1: "#2ca02c", 2: "#d62728", 3: "#9467bd"}
MULTIPLE_COLOR = "#444444"
HIST_BIN_PS = 60

_SVG_RC = {"svg.hashsalt": "coinlab", "svg.fonttype": "none"}


def save_svg(fig: Figure, path) -> None:
    """Write a figure as reproducible SVG."""
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})


@dataclass
class ScatterSpec:
    """View window and styling for the residual scatter."""

    t_range_s: tuple[float, float] = (0.0, 2.0)
    delta_range_ns: float = 3.0
    marker_size: float = 14.0
    title: str = ""


def build_scatter_figure(cset: CoincidenceSet, spec: ScatterSpec | None = None) -> Figure:
    """Residual vs time, one glyph per perspective-station symbol.

    Records flagged multiple are drawn as 'M' regardless of symbol.
    """
    spec = spec if spec is not None else ScatterSpec()
    fig = Figure(figsize=(10.0, 5.0))
    ax = fig.add_subplot()
    x = cset.t.astype(np.float64) / 1e12
    y = cset.delta_ps.astype(np.float64) / 1e3
    for code in (0, 1, 2, 3):
        sel = ~cset.multiple & (cset.symbol_self == code)
        if GLYPHS[code] in ("+", "x"):
            # line-art markers take a single color, no edge/face split
            colors = {"color": PALETTE[code]}
        else:
            colors = {"facecolors": "none", "edgecolors": PALETTE[code]}
        ax.scatter(
            x[sel],
            y[sel],
            s=spec.marker_size,
            marker=GLYPHS[code],
            linewidths=0.8,
            label=f"symbol {code}",
            **colors,
        )
    sel = cset.multiple
    ax.scatter(
        x[sel],
        y[sel],
        s=spec.marker_size * 1.6,
        marker=MULTIPLE_GLYPH,
        facecolors=MULTIPLE_COLOR,
        edgecolors="none",
        label="multiple",
    )
    ax.set_xlim(spec.t_range_s)
    ax.set_ylim(-spec.delta_range_ns, spec.delta_range_ns)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("residual [ns]")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(loc="upper right", fontsize=8, framealpha=0.9)
    return fig


def scatter_svg(cset: CoincidenceSet, path, spec: ScatterSpec | None = None) -> None:
    save_svg(build_scatter_figure(cset, spec), path)


@dataclass
class HistogramGrid:
    """Residual histograms for every (symbol_a, symbol_b) combination.

    counts has shape (4, 4, nbins) over 60 ps bins spanning
    [-window_ps/2, window_ps/2), index order (perspective symbol, partner
    symbol, bin).  chsh_s is None when any setting class is empty.
    """

    bin_edges_ps: np.ndarray
    counts: np.ndarray
    n_pairs: int
    chsh_s: float | None
    chsh_stderr: float | None

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return (self.bin_edges_ps[:-1] + self.bin_edges_ps[1:]) // 2


def histogram_grid(
    cset: CoincidenceSet, pairs: MutualPairs | None = None, window_ps: int = 3_000
) -> HistogramGrid:
    """Bin non-multiple residuals per symbol pair; annotate with CHSH from pairs."""
    if window_ps <= 0 or window_ps % (2 * HIST_BIN_PS) != 0:
        raise ValueError(f"window_ps must be a positive multiple of {2 * HIST_BIN_PS}")
    half = window_ps // 2
    nbins = window_ps // HIST_BIN_PS
    edges = -half + HIST_BIN_PS * np.arange(nbins + 1, dtype=np.int64)
    sel = ~cset.multiple & (cset.delta_ps >= -half) & (cset.delta_ps < half)
    cls = cset.symbol_self[sel].astype(np.int64) * 4 + cset.symbol_other[sel]
    bin_idx = (cset.delta_ps[sel] + half) // HIST_BIN_PS
    counts = np.bincount(cls * nbins + bin_idx, minlength=16 * nbins).reshape(4, 4, nbins)
    s = err = None
    n_pairs = 0
    if pairs is not None:
        n_pairs = len(pairs)
        try:
            tallied = tally(pairs)
            s = chsh_S(tallied)
            err = chsh_stderr(tallied)
        except EmptyClass:
            pass
    return HistogramGrid(edges, counts, n_pairs, s, err)


def build_grid_figure(grid: HistogramGrid) -> Figure:
    """4 x 4 panel of residual histograms, rows = perspective symbol."""
    fig = Figure(figsize=(11.0, 9.0))
    axes = fig.subplots(4, 4, sharex=True, sharey=True)
    edges_ns = grid.bin_edges_ps.astype(np.float64) / 1e3
    for i in range(4):
        for j in range(4):
            ax = axes[i][j]
            ax.stairs(grid.counts[i, j], edges_ns, fill=True, color=PALETTE[i])
            ax.tick_params(labelsize=7)
            if i == 3:
                ax.set_xlabel(f"b={j}  [ns]", fontsize=8)
            if j == 0:
                ax.set_ylabel(f"a={i}", fontsize=8)
    if grid.chsh_s is not None:
        title = f"S = {grid.chsh_s:.3f} +- {grid.chsh_stderr:.3f}  ({grid.n_pairs} pairs)"
    else:
        title = f"S undefined  ({grid.n_pairs} pairs)"
    fig.suptitle(title)
    return fig


def grid_csv_lines(grid: HistogramGrid) -> list[str]:
    header = "bin_center_ps," + ",".join(f"c_a{i}b{j}" for i in range(4) for j in range(4))
    lines = [header + "\n"]
    centers = grid.bin_centers_ps
    flat = grid.counts.reshape(16, -1)
    for k in range(centers.shape[0]):
        lines.append(f"{centers[k]}," + ",".join(str(int(flat[c, k])) for c in range(16)) + "\n")
    return lines


def grid_export(grid: HistogramGrid, svg_path=None, csv_path=None) -> None:
    """Render the grid figure and/or dump its counts as CSV."""
    if svg_path is not None:
        save_svg(build_grid_figure(grid), svg_path)
    if csv_path is not None:
        with open(csv_path, "wb") as fh:
            fh.write("".join(grid_csv_lines(grid)).encode("ascii"))
