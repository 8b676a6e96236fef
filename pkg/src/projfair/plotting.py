"""Figures written next to the CSV reports.

All functions render with the Agg backend and save straight to a file; nothing
is shown interactively.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}
# PNG metadata otherwise carries the matplotlib version string
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def plot_history(history, path, title=None):
    """Training and validation curves, one panel per loss."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 3, figsize=(9, 2.8))
        epochs = np.arange(1, len(history) + 1)
        for ax, name in zip(axes, ("rec", "corr", "joint")):
            ax.plot(epochs, getattr(history, f"{name}_train"), label="train", lw=1.2)
            ax.plot(epochs, getattr(history, f"{name}_val"), label="validation", lw=1.2)
            ax.set_xlabel("epoch")
            ax.set_title(f"{name} loss")
        axes[0].legend(frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def plot_latent_correlations(matrices, path):
    """Side-by-side latent correlation heatmaps, one per method.

    ``matrices`` maps method name to a square correlation matrix.
    """
    names = list(matrices)
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(names), figsize=(2.8 * len(names), 2.8), squeeze=False)
        for ax, name in zip(axes[0], names):
            C = np.asarray(matrices[name])
            im = ax.imshow(np.abs(C), vmin=0, vmax=1, cmap="viridis")
            off = np.abs(C[~np.eye(C.shape[0], dtype=bool)]).mean()
            ax.set_title(f"{name}\nmean |r| = {off:.3f}")
            ax.set_xticks([])
            ax.set_yticks([])
        fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
        _save(fig, path)


def plot_bias_correlations(reports, path):
    """Grouped bars of mean signed Corr(t_hat, s_i) per method."""
    biases = reports[0].biases
    width = 0.8 / max(len(reports), 1)
    x = np.arange(len(biases))
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(biases), 3))
        for i, rep in enumerate(reports):
            agg = rep.aggregate()
            vals = [agg.bias_corr[b] for b in biases]
            if all(np.isnan(vals)):
                continue
            ax.bar(x + (i - (len(reports) - 1) / 2) * width, vals, width, label=rep.method)
        ax.axhline(0, color="k", lw=0.6)
        ax.set_xticks(x)
        ax.set_xticklabels(biases)
        ax.set_ylabel("Corr(t_hat, s)")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_traversal(result, path, wiring=None, target=None):
    """Frame strip (features x frames) above the last-minus-first difference map.

    With ``wiring``, columns wired to each attribute are shaded in the lower panel.
    """
    frames = result.frames
    diff = result.difference_map
    m = frames.shape[1]
    with plt.rc_context(RC):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 5), gridspec_kw={"height_ratios": [1.2, 1]})
        lim = np.abs(frames - frames.mean(axis=0)).max() or 1.0
        top.imshow((frames - frames.mean(axis=0)), aspect="auto", cmap="RdBu_r", vmin=-lim, vmax=lim)
        top.set_yticks(range(len(result.k)))
        top.set_yticklabels([f"{t:.2f}" for t in result.t_hat])
        top.set_ylabel("predicted target")
        top.set_xlabel("feature")
        top.set_title("frames (deviation from frame mean)")
        colors = ["#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628", "#f781bf"]
        if wiring:
            for i, (name, cols) in enumerate(wiring.items()):
                cols = np.asarray(cols)
                bottom.bar(cols, np.full(cols.size, np.abs(diff).max() * 1.05), width=1.0,
                           color=colors[i % len(colors)], alpha=0.12,
                           label=f"{name}{' (target)' if name == target else ''}")
        bottom.bar(np.arange(m), diff, width=0.8, color="k")
        bottom.axhline(0, color="k", lw=0.5)
        bottom.set_xlim(-0.5, m - 0.5)
        bottom.set_xlabel("feature")
        bottom.set_ylabel("last - first")
        if wiring:
            bottom.legend(frameon=False, ncol=min(len(wiring), 4))
        fig.tight_layout()
        _save(fig, path)


def plot_sweep(settings, bias_names, path):
    """Mean |Corr(t_hat, s_i)| per bias against the number of corrected biases.

    ``settings`` is a list of ``(label, {bias: mean_abs_corr})``.
    """
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        x = np.arange(len(settings))
        for b in bias_names:
            ax.plot(x, [s[1][b] for s in settings], marker="o", lw=1.2, label=b)
        ax.plot(x, [sum(s[1].values()) for s in settings], color="k", ls="--", lw=1, label="sum")
        ax.set_xticks(x)
        ax.set_xticklabels([s[0] for s in settings], rotation=30, ha="right")
        ax.set_ylabel("|Corr(t_hat, s)|")
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)
