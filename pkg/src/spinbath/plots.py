"""Figure rendering for the CLI's report paths.

matplotlib is imported inside each function so the data-only paths never pay
for (or require a working) plotting stack. All figures go to files; nothing
opens a window.
"""

from __future__ import annotations

from .scaling import UNBOUNDED


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def plot_coherence_curve(curve, fit, path: str):
    """Ensemble mean with its spread band, plus the fitted decay overlay."""
    import numpy as np

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    t_ms = curve.times_s * 1e3
    ax.fill_between(
        t_ms,
        curve.values - curve.stderr,
        curve.values + curve.stderr,
        alpha=0.25,
        linewidth=0,
        label="ensemble spread",
    )
    ax.plot(t_ms, curve.values, lw=1.2, label="mean $|\\mathcal{L}|$")
    if fit is not None:
        model = np.exp(-((curve.times_s / fit.t2) ** fit.eta))
        ax.plot(
            t_ms,
            model,
            "--",
            lw=1.0,
            label=f"fit: $T_2$={fit.t2 * 1e3:.3g} ms, $\\eta$={fit.eta:.2f}",
        )
    ax.set_xlabel("total free evolution time (ms)")
    ax.set_ylabel("echo coherence")
    ax.set_ylim(-0.02, 1.05)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_element_table(rows, path: str):
    """Horizontal bars of per-element T2, longest at the top.

    rows: (element, t2) pairs where t2 may be UNBOUNDED. Unbounded hosts are
    drawn full-width in a distinct shade since no finite bar represents them.
    """
    plt = _pyplot()
    finite = [(el, t2) for el, t2 in rows if t2 is not UNBOUNDED]
    free = [el for el, t2 in rows if t2 is UNBOUNDED]
    finite.sort(key=lambda p: p[1])
    labels = free + [el for el, _ in finite]
    height = max(3.0, 0.22 * len(labels))
    fig, ax = plt.subplots(figsize=(6.5, height))
    if finite:
        ax.barh(
            range(len(free), len(labels)),
            [t2 for _, t2 in finite],
            color="#4878a8",
        )
        top = max(t2 for _, t2 in finite) * 2
    else:
        top = 1.0
    if free:
        ax.barh(range(len(free)), [top] * len(free), color="#88c999")
        for i in range(len(free)):
            ax.text(top, i, " no spinful isotope", va="center", fontsize=7)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.set_xscale("log")
    ax.set_xlabel("nuclear-bath $T_2$ (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_screening_report(report, path: str):
    """Ranking bars for a screening report, rank 1 at the top."""
    plt = _pyplot()
    rows = list(report.rows)
    if not rows:
        fig, ax = plt.subplots(figsize=(6.0, 2.0))
        ax.text(0.5, 0.5, "no materials passed the filters", ha="center", va="center")
        ax.set_axis_off()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        return
    finite = [r.t2 for r in rows if r.t2 is not UNBOUNDED]
    top = max(finite) * 2 if finite else 1.0
    values = [top if r.t2 is UNBOUNDED else r.t2 for r in rows]
    colors = ["#88c999" if r.t2 is UNBOUNDED else "#4878a8" for r in rows]
    labels = [f"{i}. {r.formula}" for i, r in enumerate(rows, start=1)]
    fig, ax = plt.subplots(figsize=(6.5, max(2.5, 0.3 * len(rows))))
    positions = range(len(rows) - 1, -1, -1)  # rank 1 on top
    ax.barh(list(positions), values, color=colors)
    ax.set_yticks(list(positions))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xscale("log")
    ax.set_xlabel("predicted $T_2$ (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_decoupling_fields(rows, path: str):
    """Bar chart of pair decoupling fields in millitesla.

    rows: (label, b_dec_T) pairs, e.g. ("29Si-17O", 2.9e-4).
    """
    plt = _pyplot()
    rows = sorted(rows, key=lambda p: p[1])
    fig, ax = plt.subplots(figsize=(6.5, max(2.5, 0.3 * len(rows))))
    ax.barh(range(len(rows)), [b * 1e3 for _, b in rows], color="#4878a8")
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([label for label, _ in rows], fontsize=8)
    ax.set_xlabel("decoupling field (mT)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_calibration(dataset, result, path: str):
    """Log-log T2 vs density per isotope, with the fitted scaling overlay."""
    import numpy as np

    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    by_isotope = {}
    for isotope, density, t2 in dataset:
        by_isotope.setdefault(isotope, []).append((density, t2))
    constants = result.constants
    for isotope, points in sorted(by_isotope.items(), key=lambda kv: str(kv[0])):
        points.sort()
        n = np.array([p[0] for p in points])
        t2 = np.array([p[1] for p in points])
        (line,) = ax.plot(n, t2, "o", ms=5, label=str(isotope))
        model = (
            constants.c
            * abs(isotope.g_factor) ** constants.g_exponent
            * float(isotope.spin) ** constants.i_exponent
            * n ** constants.n_exponent
        )
        ax.plot(n, model, "-", lw=1.0, color=line.get_color(), alpha=0.6)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("spin density (cm$^{-3}$)")
    ax.set_ylabel("$T_2$ (s)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
