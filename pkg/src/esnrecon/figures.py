"""Figure rendering for the experiment commands. Every function writes a PNG
next to the CSV artifacts; the CSVs remain the machine-readable contract."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SCHEME_STYLE = {
    "exact": dict(color="tab:blue"),
    "fe": dict(color="tab:orange"),
}


def _new_fig(nrows=1, ncols=1, width=8.0, height=2.6):
    fig, axes = plt.subplots(nrows, ncols, figsize=(width, height * nrows),
                             squeeze=False, constrained_layout=True)
    return fig, axes


def _save(fig, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trajectory(path, t, states, names, window=3000):
    n = min(window, t.size)
    fig, axes = _new_fig(nrows=states.shape[0])
    for k, name in enumerate(names):
        ax = axes[k, 0]
        ax.plot(t[:n], states[k, :n], lw=0.8)
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("t")
    axes[0, 0].set_title("reference trajectory")
    _save(fig, path)


def save_derivative_accuracy(path, sizes, mean_fe, mean_exact, mean_output):
    fig, axes = _new_fig(height=3.2)
    ax = axes[0, 0]
    ax.loglog(sizes, mean_fe, "o-", label="forward difference", **_SCHEME_STYLE["fe"])
    ax.loglog(sizes, mean_exact, "s-", label="exact tangent", **_SCHEME_STYLE["exact"])
    ax.loglog(sizes, mean_output, "^--", color="tab:green", label="output error")
    ax.set_xlabel("reservoir size")
    ax.set_ylabel("mean squared error")
    ax.set_title("output-derivative accuracy vs reservoir size")
    ax.legend()
    _save(fig, path)


def save_error_series(path, t, series_map, n_r, window=500):
    n = min(window, t.size)
    fig, axes = _new_fig(height=3.2)
    ax = axes[0, 0]
    for label, series in series_map.items():
        ax.semilogy(t[:n], series[:n], lw=0.8, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("squared error")
    ax.set_title(f"per-step squared errors, reservoir size {n_r}")
    ax.legend()
    _save(fig, path)


def save_reconstruction_series(path, t, truth, estimates, names, window=2000):
    n = min(window, t.size)
    fig, axes = _new_fig(nrows=len(names))
    for k, name in enumerate(names):
        ax = axes[k, 0]
        ax.plot(t[:n], truth[k, :n], lw=0.9, color="k", label="truth")
        ax.plot(t[:n], estimates[k, :n], lw=0.9, ls="--", color="tab:red",
                label="reconstruction")
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("t")
    axes[0, 0].set_title("hidden-state reconstruction (training interval)")
    axes[0, 0].legend(loc="upper right")
    _save(fig, path)


def save_pdf_comparison(path, histograms):
    variables = sorted({h.variable for h in histograms})
    datasets = ["train", "test"]
    fig, axes = _new_fig(nrows=len(variables), ncols=2, width=9.0)
    for i, var in enumerate(variables):
        for j, dataset in enumerate(datasets):
            ax = axes[i, j]
            for h in histograms:
                if h.variable != var or h.dataset != dataset:
                    continue
                centers = 0.5 * (h.edges[:-1] + h.edges[1:])
                ax.plot(centers, h.truth_density, color="k", lw=1.0, label="truth")
                ax.plot(centers, h.estimate_density, color="tab:red", lw=1.0,
                        ls="--", label="reconstruction")
            ax.set_title(f"{var} ({dataset})")
            ax.set_xlabel(var)
            ax.set_ylabel("density")
    axes[0, 0].legend()
    _save(fig, path)


def save_nrmse_vs_size(path, sizes, curves):
    """curves: (variable, dataset, scheme) -> {size: nrmse}."""
    variables = sorted({var for var, _, _ in curves})
    fig, axes = _new_fig(ncols=len(variables), width=4.5 * len(variables), height=3.2)
    for j, var in enumerate(variables):
        ax = axes[0, j]
        for (cvar, dataset, scheme), by_size in sorted(curves.items()):
            if cvar != var:
                continue
            ys = [by_size.get(n) for n in sizes if n in by_size]
            xs = [n for n in sizes if n in by_size]
            style = _SCHEME_STYLE.get(scheme, {})
            ax.semilogy(xs, ys, marker="o", ls="-" if dataset == "train" else "-.",
                        label=f"{scheme} ({dataset})", **style)
        ax.set_xlabel("reservoir size")
        ax.set_ylabel(f"NRMSE({var})")
        ax.legend(fontsize=8)
    _save(fig, path)


def save_lyapunov(path, running):
    fig, axes = _new_fig(height=3.2)
    ax = axes[0, 0]
    ax.plot(running, lw=0.9)
    ax.set_xlabel("renormalization interval")
    ax.set_ylabel("running exponent estimate")
    ax.set_title("Lyapunov exponent convergence")
    _save(fig, path)
