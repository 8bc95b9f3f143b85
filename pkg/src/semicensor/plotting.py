"""PNG figures for the experiment outputs (non-interactive Agg backend)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "legend.fontsize": "small",
    "lines.linewidth": 1.2,
}

# the Software tag is the only PNG metadata matplotlib writes; pin it
_METADATA = {"Software": "semicensor"}


def _save(fig, path):
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)


def plot_curves(path, x, curves, xlabel, ylabel, title=None):
    """Line plot of ``curves`` (label -> values) against ``x``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in curves.items():
            ax.plot(x, y, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def _hist_axis(ax, edges, density, reference=None, reference_label="exact"):
    ax.stairs(density, edges, fill=True, alpha=0.5, label="sampled")
    if reference is not None:
        ax.stairs(reference, edges, color="k", linewidth=1.0, label=reference_label)


def plot_histogram_panels(path, panels, xlabel, ncols=2):
    """Grid of histograms; each panel is ``(title, edges, density, reference)``."""
    nrows = -(-len(panels) // ncols)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(4.0 * ncols, 3.0 * nrows), squeeze=False)
        for ax, (title, edges, density, reference) in zip(axes.flat, panels):
            _hist_axis(ax, edges, density, reference)
            ax.set_title(title)
            ax.set_xlabel(xlabel)
        for ax in list(axes.flat)[len(panels):]:
            ax.set_visible(False)
        axes.flat[0].legend()
        fig.tight_layout()
        _save(fig, path)
