"""Convergence figures written to SVG or PNG files.

Output is byte-reproducible: a fixed SVG hash salt and no date metadata.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "polyapprox", "svg.fonttype": "path", "font.size": 9}


def _save(fig, path):
    ext = os.path.splitext(path)[1].lower()
    meta = {"Date": None} if ext == ".svg" else {}
    if ext == ".pdf":
        meta = {"CreationDate": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def plot_scaling(report, path):
    """Log-log plot of mean Delta_s against N with the fitted and reference slopes."""
    N = np.asarray(report.schedule, dtype=float)
    mean = np.array([r["mean_delta_s"] for r in report.rows])
    err = np.array([r["stderr"] for r in report.rows])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.errorbar(N, mean, yerr=err, fmt="o", color="C0", capsize=2, label="mean $\\Delta_s$")
        logN = np.log(N)
        intercept = np.mean(np.log(mean) - report.slope * logN)
        grid = np.geomspace(N[0], N[-1], 50)
        ax.plot(grid, np.exp(intercept) * grid ** report.slope, color="C0",
                label=f"fit: slope {report.slope:.3f} $\\pm$ {report.slope_halfwidth:.3f}")
        ref0 = np.exp(np.mean(np.log(mean) - report.expected_slope * logN))
        ax.plot(grid, ref0 * grid ** report.expected_slope, "--", color="0.4",
                label=f"reference slope {report.expected_slope:g}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("$\\Delta_s((1-c)K, P_N)$")
        ax.set_title(report.body, fontsize=8)
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_deficit(rows, path, title=""):
    """Normalised hull deficit against N with the asymptotic constant."""
    N = np.array([r["n_points"] for r in rows], dtype=float)
    norm = np.array([r["normalized"] for r in rows])
    scale = norm / np.array([r["mean_deficit"] for r in rows])
    err = np.array([r["stderr"] for r in rows]) * scale
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.errorbar(N, norm, yerr=err, fmt="o", color="C1", capsize=2, label="normalised deficit")
        ax.axhline(rows[0]["target"], ls="--", color="0.4", label="asymptotic constant")
        ax.set_xscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("$N^{2/(n-1)}$ deficit")
        ax.set_title(title, fontsize=8)
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)
