"""Annotated SVG heatmap of the association matrix."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402

# five fixed stops from pale to dark, mapped linearly onto [vmin, 1]
RAMP_STOPS = ("#f7fbff", "#c6dbef", "#6baed6", "#2171b5", "#08306b")
RAMP = LinearSegmentedColormap.from_list("forestlens_ramp", RAMP_STOPS)


def heatmap_figure(values, labels, title="Surrogate association (PMOA)", vmin=None, vmax=1.0):
    """Build the figure: one coloured, annotated cell per entry, NaN hatched.

    The ramp runs from ``vmin`` (default: 0, or the smallest entry if that is
    negative, since PMOA is unbounded below) to ``vmax``.
    """
    values = np.asarray(values, dtype=float)
    if vmin is None:
        finite = values[np.isfinite(values)]
        vmin = min(0.0, float(finite.min())) if finite.size else 0.0
    n = values.shape[0]
    fig, ax = plt.subplots(figsize=(1.2 * n + 2.0, 1.1 * n + 1.2))
    shown = np.ma.masked_invalid(np.clip(values, vmin, vmax))
    cmap = RAMP.copy()
    cmap.set_bad("white")
    im = ax.imshow(shown, cmap=cmap, vmin=vmin, vmax=vmax)
    for e in range(n):
        for g in range(n):
            v = values[e, g]
            if np.isnan(v):
                ax.add_patch(plt.Rectangle((g - 0.5, e - 0.5), 1, 1, fill=False, hatch="///", edgecolor="0.6", lw=0))
                ax.text(g, e, "n/a", ha="center", va="center", fontsize=9, color="0.35")
                continue
            level = (min(max(v, vmin), vmax) - vmin) / (vmax - vmin)
            ax.text(g, e, f"{v:.2f}", ha="center", va="center", fontsize=9, color="white" if level > 0.55 else "black")
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_yticklabels(labels)
    ax.set_xlabel("surrogate feature")
    ax.set_ylabel("split feature")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    return fig


def heatmap_svg(values, labels, **kwargs) -> bytes:
    """Render to SVG bytes; identical inputs give identical bytes."""
    with matplotlib.rc_context({"svg.hashsalt": "forestlens", "svg.fonttype": "none"}):
        fig = heatmap_figure(values, labels, **kwargs)
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()
