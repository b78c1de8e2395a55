"""Figure rendering for the report path.

Renders log-log error-decay curves (with shape-only theoretical overlays) to
image files next to the delimited output.  Kept out of the experiment harness
so the harness stays plotting-free.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_decay_figure(reports: dict, path, title: str = "uniform recovery error decay"):
    """reports: mapping label -> SweepReport."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label, report in reports.items():
        ms = list(report.m_grid)
        errs = [report.aggregate[m] for m in ms]
        finite = [(m, e) for m, e in zip(ms, errs) if np.isfinite(e) and e > 0]
        if not finite:
            continue
        ms_f, errs_f = zip(*finite)
        ax.loglog(ms_f, errs_f, marker="o", label=f"{label} (slope {report.fitted_slope:+.2f})")
        overlay_vals = [
            report.overlays[m]["predicted_error"] if report.overlays.get(m) else None
            for m in ms_f
        ]
        if all(v is not None for v in overlay_vals):
            # shape-only overlay: anchor the bound to the first finite data point
            anchor = errs_f[0] / overlay_vals[0] if overlay_vals[0] > 0 else 1.0
            ax.loglog(
                ms_f,
                [v * anchor for v in overlay_vals],
                linestyle="--",
                alpha=0.6,
                label=f"{label} bound overlay (shape only)",
            )
    ax.set_xlabel("measurements m")
    ax.set_ylabel("mean max recovery error")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
