"""Optional matplotlib rendering of report tables and fields to files.

Rendering is opt-in on the command line (--plot); the delimited outputs
remain the canonical record.
"""

from __future__ import annotations

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_ratio_table(reports, path, title="verified inequality ratios"):
    plt = _plt()
    names = [r.name for r in reports]
    ratios = [r.ratio if np.isfinite(r.ratio) else 0.0 for r in reports]
    tols = [r.tolerance for r in reports]
    fig, ax = plt.subplots(figsize=(7, 0.5 * len(names) + 1.5))
    y = np.arange(len(names))
    ax.barh(y, ratios, color=["tab:blue" if r.passed else "tab:red" for r in reports])
    for i, t in enumerate(tols):
        if np.isfinite(t):
            ax.plot([t, t], [i - 0.4, i + 0.4], "k--", lw=1)
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("lhs / rhs")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_field(field, path, title="", extent=None):
    """Heat map of a space-time (1-D) or spatial (2-D) array."""
    plt = _plt()
    field = np.asarray(field)
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(field.T if field.ndim == 2 else field,
                   origin="lower", aspect="auto", extent=extent, cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_solution_slices(u, path, n_slices=6, title="solution slices"):
    plt = _plt()
    grid = u.grid
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = np.linspace(0, grid.nt - 1, n_slices).astype(int)
    if grid.spatial.dim == 1:
        x = grid.spatial.centers(0)
        for k in ks:
            ax.plot(x, u.values[k], label=f"t={grid.times[k]:.3g}")
        ax.legend(fontsize=7)
        ax.set_xlabel("x")
    else:
        im = ax.imshow(u.values[ks[-1]].T, origin="lower", cmap="viridis")
        fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_decay(values, path, title="pairwise energy decay", xlabel="scale index"):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(range(len(values)), np.maximum(values, 1e-300), "o-")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
