"""Static figures for score tables and simulation sweeps."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps PNG bytes identical across reruns
_PNG_META = {"Software": None}


def stability_figure(names: Sequence[str], kinds: Sequence[str], values: Sequence[Fraction], path, alpha=None, title=None):
    """Horizontal bar chart of feature stabilities."""
    fig, ax = plt.subplots(figsize=(6.4, max(2.0, 0.32 * len(names) + 1.2)))
    ys = list(range(len(names)))
    colors = ["#4c72b0" if k == "leaf" else "#dd8452" for k in kinds]
    ax.barh(ys, [float(v) for v in values], color=colors)
    ax.set_yticks(ys)
    ax.set_yticklabels(names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0, 1.02)
    ax.set_xlabel("stability")
    if alpha is not None:
        ax.axvline(float(alpha), color="0.3", linestyle="--", linewidth=1)
    if title:
        ax.set_title(title)
    from matplotlib.patches import Patch

    ax.legend(
        handles=[Patch(color="#4c72b0", label="leaf"), Patch(color="#dd8452", label="edge")],
        loc="lower right",
        fontsize=8,
    )
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)


def sweep_figure(rows, path, max_rank: int | None = None):
    """Mean true discoveries against sample size and against branch scale, one line per q."""
    qs = sorted({r.q for r in rows})
    ns = sorted({r.n for r in rows})
    sigmas = sorted({r.sigma for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)

    def panel(ax, xs, key, fixed, xlabel):
        for q in qs:
            pts = [(x, float(r.mean_td)) for x in xs for r in rows if r.q == q and key(r) == x and fixed(r)]
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"q = {float(q):g}")
        if max_rank is not None:
            ax.axhline(max_rank, color="0.6", linestyle="--", linewidth=1)
        ax.set_xlabel(xlabel)

    sigma_ref = 1.0 if 1.0 in sigmas else sigmas[len(sigmas) // 2]
    n_ref = max(ns)
    panel(axes[0], ns, lambda r: r.n, lambda r: r.sigma == sigma_ref, f"n (sigma = {sigma_ref:g})")
    panel(axes[1], sigmas, lambda r: r.sigma, lambda r: r.n == n_ref, f"sigma (n = {n_ref})")
    axes[0].set_ylabel("mean true discoveries")
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
