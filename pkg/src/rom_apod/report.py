"""Figure rendering for experiment reports.

One figure per reduced method showing the evolution of the relative
error and the indicator (marked instants starred), plus one comparison
figure overlaying the error curves of every method that has one.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .adaptive import error_series  # noqa: E402


def _error_curve(res, ref):
    if ref is None:
        return None, None
    err = error_series(ref, res.trajectory)
    ok = np.isfinite(err)
    return res.trajectory.times[ok], err[ok]


def render_figures(out_dir, cfg, results, ref) -> list:
    """Write the per-method and comparison figures; returns the paths."""
    written = []
    error_curves = []
    for name in cfg.method:
        res = results.get(name)
        if res is None or name == "fem":
            continue
        t_err, err = _error_curve(res, ref)
        if t_err is not None:
            error_curves.append((name, t_err, err))

        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        ax.set_xlabel("t")
        if t_err is not None and len(t_err):
            ax.semilogy(t_err, err, "b-", lw=1.0, label="relative error")
            ax.set_ylabel("relative error")
        if res.samples:
            t_eta = np.array([s.t for s in res.samples])
            eta = np.array([s.eta for s in res.samples])
            marked = np.array([s.marked for s in res.samples], dtype=bool)
            ax2 = ax.twinx()
            pos = eta > 0
            if pos.any():
                ax2.semilogy(t_eta[pos], eta[pos], "r--", lw=1.0, label="indicator")
            if marked.any():
                ax2.plot(t_eta[marked], np.maximum(eta[marked], 1e-300), "r*",
                         ms=10.0, label="update")
            ax2.set_ylabel("indicator")
            lines, labels = ax.get_legend_handles_labels()
            lines2, labels2 = ax2.get_legend_handles_labels()
            ax.legend(lines + lines2, labels + labels2, loc="lower right",
                      fontsize=8)
        elif t_err is not None:
            ax.legend(loc="lower right", fontsize=8)
        ax.set_title(f"{cfg.problem}, eps={cfg.epsilon:g}: {name}")
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"fig_{name}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    if error_curves:
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for name, t_err, err in error_curves:
            ax.semilogy(t_err, err, lw=1.0, label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("relative error")
        ax.set_title(f"{cfg.problem}, eps={cfg.epsilon:g}: method comparison")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "fig_error_comparison.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
