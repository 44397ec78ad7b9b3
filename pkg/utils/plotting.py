# --- Start of File: utils/plotting.py ---
import logging

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed SVG ids and no timestamp, so reruns write identical files.
matplotlib.rcParams['svg.hashsalt'] = 'potts-phase-diagram'


def _draw_panel(ax, curves):
    Bs = np.asarray(curves.Bs)
    ok = np.isfinite(curves.beta_free) & np.isfinite(curves.beta_c) & np.isfinite(curves.beta_plus)
    B, bf, bc, bp = Bs[ok], curves.beta_free[ok], curves.beta_c[ok], curves.beta_plus[ok]
    ax.fill_betweenx(B, bf, bc, color='#4B7DD1', alpha=0.35, label=r'$\mathsf{R}_{free}$')
    ax.fill_betweenx(B, bc, bp, color='#F07E40', alpha=0.35, label=r'$\mathsf{R}_{1}$')
    ax.plot(bf, B, '-', color='#0249B2', linewidth=1.5, label=r'$\beta_{free}(B)$')
    ax.plot(bc, B, '-', color='black', linewidth=2.0, label=r'$\beta_c(B)$')
    ax.plot(bp, B, '-', color='#B24A02', linewidth=1.5, label=r'$\beta_{+}(B)$')
    ax.plot([curves.beta_minus], [curves.B_plus], 'o', color='black', markersize=4)
    ax.set_xlabel(r'$\beta$')
    ax.set_ylabel(r'$B$')
    ax.set_title(f"q={curves.q}, d={curves.d}")
    ax.legend(frameon=False, loc='upper right', fontsize=8)


def plot_phase_diagram(curves_list, path):
    """
    Renders one panel per CriticalCurves side by side and saves an SVG.
    The shaded bands are R_free (between beta_free and beta_c) and R_1
    (between beta_c and beta_plus); they merge at (beta_minus, B_plus).
    """
    curves_list = list(curves_list)
    fig, axes = plt.subplots(1, len(curves_list), figsize=(5.5 * len(curves_list), 4.5), squeeze=False)
    try:
        for ax, curves in zip(axes[0], curves_list):
            _draw_panel(ax, curves)
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
    finally:
        plt.close(fig)
    logger.info(f"Saved phase diagram ({len(curves_list)} panel(s)) to {path}")
    return path

# --- END OF FILE: utils/plotting.py ---
