"""Matplotlib rendering of report artifacts, alongside the delimited files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .classifier import QuadraticSurfaceModel


def render_boundary(model: QuadraticSurfaceModel, out_png, X=None, labels=None,
                    resolution: int = 200) -> None:
    """Filled decision-value map with the f = 0 boundary, optionally with data."""
    active = model.active_features()
    feats = list(active[:2]) + [j for j in range(model.n) if j not in active[:2]]
    f1 = feats[0]
    f2 = feats[1] if model.n > 1 else feats[0]
    lo1, hi1 = model.mean[f1] - 3 * model.scale[f1], model.mean[f1] + 3 * model.scale[f1]
    lo2, hi2 = model.mean[f2] - 3 * model.scale[f2], model.mean[f2] + 3 * model.scale[f2]
    if X is not None:
        lo1, hi1 = min(lo1, X[:, f1].min()), max(hi1, X[:, f1].max())
        lo2, hi2 = min(lo2, X[:, f2].min()), max(hi2, X[:, f2].max())
    g1 = np.linspace(lo1, hi1, resolution)
    g2 = np.linspace(lo2, hi2, resolution)
    A, B = np.meshgrid(g1, g2, indexing="ij")
    pts = np.tile(model.mean, (A.size, 1))
    pts[:, f1] = A.ravel()
    pts[:, f2] = B.ravel()
    F = model.decision_values(pts).reshape(A.shape)

    fig, ax = plt.subplots(figsize=(6, 5))
    lim = max(1e-12, np.abs(F).max())
    pcm = ax.pcolormesh(A, B, F, cmap="RdBu_r", vmin=-lim, vmax=lim, shading="auto")
    ax.contour(A, B, F, levels=[0.0], colors="k", linewidths=1.5)
    if X is not None and labels is not None:
        for cls in sorted(set(np.asarray(labels, dtype=object).tolist())):
            mask = np.asarray(labels, dtype=object) == cls
            ax.scatter(X[mask, f1], X[mask, f2], s=12, label=str(cls),
                       edgecolors="k", linewidths=0.3)
        ax.legend(loc="best", fontsize=8)
    fig.colorbar(pcm, ax=ax, label="decision value")
    ax.set_xlabel(f"x{f1 + 1}")
    ax.set_ylabel(f"x{f2 + 1}")
    ax.set_title("quadratic-surface decision boundary")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_magnitudes(model: QuadraticSurfaceModel, out_png) -> None:
    """Heatmap of |W| next to a bar chart of |b|."""
    fig, (ax1, ax2) = plt.subplots(
        1, 2, figsize=(9, 4), gridspec_kw={"width_ratios": [1.3, 1]})
    im = ax1.imshow(np.abs(model.W), cmap="viridis")
    ax1.set_title("|W|")
    ax1.set_xticks(range(model.n))
    ax1.set_yticks(range(model.n))
    fig.colorbar(im, ax=ax1, fraction=0.046)
    ax2.bar(range(1, model.n + 1), np.abs(model.b), color="tab:blue")
    ax2.set_title("|b|")
    ax2.set_xlabel("feature")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_k_sweep(rows, out_png) -> None:
    ks = [r.k for r in rows]
    acc = [r.test_accuracy for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, acc, "o-", color="tab:blue")
    ax.set_xlabel("sparsity budget k")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.set_title("accuracy vs sparsity level")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_trace(trace, out_png) -> None:
    rows = list(trace.rows())
    its = [r[0] for r in rows]
    q = [r[2] for r in rows]
    gap = [r[3] for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(its, q, "-", color="tab:blue")
    ax1.set_ylabel("penalized objective")
    ax1.grid(alpha=0.3)
    ax2.semilogy(its, np.maximum(gap, 1e-16), "-", color="tab:red")
    ax2.set_ylabel("||z - u||_inf")
    ax2.set_xlabel("inner iteration")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_cv(report, out_png) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    folds = [f.fold for f in report.folds]
    accs = [f.test_accuracy for f in report.folds]
    ax.bar(folds, accs, color="tab:blue", alpha=0.8)
    ax.axhline(report.mean_accuracy, color="tab:red", linestyle="--",
               label=f"mean {report.mean_accuracy:.3f}")
    ax.set_xlabel("fold")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_trace_file(tsv_path, out_png) -> None:
    data = np.genfromtxt(tsv_path, delimiter="\t", names=True)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(data["iteration"], data["q_rho"], "-", color="tab:blue")
    ax1.set_ylabel("penalized objective")
    ax1.grid(alpha=0.3)
    ax2.semilogy(data["iteration"], np.maximum(data["z_u_gap"], 1e-16), "-",
                 color="tab:red")
    ax2.set_ylabel("||z - u||_inf")
    ax2.set_xlabel("inner iteration")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_sweep_file(tsv_path, out_png) -> None:
    data = np.genfromtxt(tsv_path, delimiter="\t", names=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.atleast_1d(data["k"]), np.atleast_1d(data["test_accuracy"]),
            "o-", color="tab:blue")
    ax.set_xlabel("sparsity budget k")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
