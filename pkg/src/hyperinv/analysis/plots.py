"""SVG line plots written next to CSV artifacts."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def line_plot(path, x, series, xlabel, ylabel, title=None):
    """``series`` maps a label to y values; the figure is saved as SVG at ``path``."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for label, y in series.items():
        ax.plot(x, y, marker="o", ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
