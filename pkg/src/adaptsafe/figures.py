"""Matplotlib renderings of run logs, written straight to files.

Three per-run figures: the planar trajectory against the obstacles, the
parameter estimate traces, and the evolution of the uncertainty sets
(zonotopes and 95 % Gaussian ellipses) over the early part of the run.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle, Polygon

from .plant import desired_trajectory
from .simulate import RunLog

# Chi-square 0.95 quantile with 2 degrees of freedom: -2 ln(0.05).
_CHI2_95_2DOF = -2.0 * math.log(0.05)


def _desired_curve(t_max: float) -> tuple[np.ndarray, np.ndarray]:
    ts = np.linspace(0.0, max(t_max, 20.0), 800)
    pts = np.array([desired_trajectory(t)[0] for t in ts])
    return pts[:, 0], pts[:, 1]


def _draw_workspace(ax, log: RunLog) -> None:
    xd, yd = _desired_curve(float(log.t[-1]) if len(log) else 20.0)
    ax.plot(xd, yd, "k--", linewidth=0.8, label="desired")
    for obs in log.config.plant.obstacles:
        ax.add_patch(
            Circle(obs.center, obs.radius, color="0.6", alpha=0.8, zorder=0)
        )
    ax.set_aspect("equal")
    ax.set_xlabel("q1 [m]")
    ax.set_ylabel("q2 [m]")


def trajectory_figure(log: RunLog, path: Union[str, Path]) -> Path:
    """Planar path of the run against the reference and obstacles."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    _draw_workspace(ax, log)
    ax.plot(log.x[:, 0], log.x[:, 1], "-", color="tab:blue", linewidth=1.4,
            label=log.config.mode.value)
    if len(log):
        ax.plot(log.x[0, 0], log.x[0, 1], "o", color="tab:blue", markersize=4)
    ax.legend(loc="upper left", fontsize=8)
    ax.set_title(f"min h = {log.metrics.min_h:.3g}")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def parameter_figure(log: RunLog, path: Union[str, Path]) -> Path:
    """Estimate traces with the true values overlaid."""
    p = log.theta_hat.shape[1]
    fig, axes = plt.subplots(p, 1, figsize=(5.0, 2.0 * p), sharex=True)
    if p == 1:
        axes = [axes]
    theta_true = log.config.plant.theta_true
    for i, ax in enumerate(axes):
        ax.plot(log.t, log.theta_hat[:, i], color="tab:blue", linewidth=1.2)
        if i < theta_true.shape[0]:
            ax.axhline(theta_true[i], color="black", linewidth=0.8)
        ax.set_ylabel(f"theta_{i + 1}")
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _zonotope_polygon(center: np.ndarray, gen: np.ndarray) -> np.ndarray:
    g1, g2 = gen[:, 0], gen[:, 1]
    return np.array(
        [center + g1 + g2, center + g1 - g2, center - g1 - g2, center - g1 + g2]
    )


def _gaussian_ellipse(mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    vals = np.maximum(vals, 0.0)
    angles = np.linspace(0.0, 2.0 * math.pi, 100)
    circle = np.stack([np.cos(angles), np.sin(angles)])
    pts = (vecs * np.sqrt(_CHI2_95_2DOF * vals)) @ circle
    return (mean[:, None] + pts).T


def sets_figure(
    log: RunLog,
    path: Union[str, Path],
    snapshot_times: Sequence[float] = (0.0, 1.0, 2.0, 3.0, 4.0),
) -> Path:
    """Uncertainty sets at a few early instants, darker as time advances."""
    sigma0_inv = log.config.prior.sigma0_inv
    theta_true = log.config.plant.theta_true
    fig, (ax_z, ax_g) = plt.subplots(1, 2, figsize=(8.0, 4.0))
    n_snap = len(snapshot_times)
    for rank, t_snap in enumerate(snapshot_times):
        idx = int(np.argmin(np.abs(log.t - t_snap)))
        alpha = 0.15 + 0.7 * rank / max(n_snap - 1, 1)
        center = log.theta_hat[idx]
        gamma = log.gamma[idx]
        ax_z.add_patch(
            Polygon(
                _zonotope_polygon(center, gamma),
                closed=True,
                facecolor="tab:blue",
                edgecolor="none",
                alpha=alpha,
            )
        )
        cov = gamma @ sigma0_inv @ gamma.T
        ax_g.add_patch(
            Polygon(
                _gaussian_ellipse(center, cov),
                closed=True,
                facecolor="tab:purple",
                edgecolor="none",
                alpha=alpha,
            )
        )
    for ax, title in ((ax_z, "parameter zonotopes"), (ax_g, "95% Gaussian ellipses")):
        ax.axvline(theta_true[0], color="black", linestyle=":", linewidth=0.8)
        ax.axhline(theta_true[1], color="black", linestyle=":", linewidth=0.8)
        ax.set_xlabel("theta_1")
        ax.set_ylabel("theta_2")
        ax.set_title(title)
        ax.autoscale_view()
        ax.relim()
        ax.set_aspect("equal")
    ax_z.set_xlim(-3.5, 3.5)
    ax_z.set_ylim(-3.5, 3.5)
    ax_g.set_xlim(-3.5, 3.5)
    ax_g.set_ylim(-3.5, 3.5)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def comparison_figure(logs: Sequence[RunLog], path: Union[str, Path]) -> Path:
    """Trajectories of several runs side by side."""
    n = len(logs)
    ncols = min(n, 2)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4.5 * ncols, 3.8 * nrows), squeeze=False
    )
    for i, log in enumerate(logs):
        ax = axes[i // ncols][i % ncols]
        _draw_workspace(ax, log)
        ax.plot(log.x[:, 0], log.x[:, 1], "-", color="tab:blue", linewidth=1.3)
        ax.set_title(
            f"{log.config.mode.value} (min h = {log.metrics.min_h:.3g})", fontsize=9
        )
    for j in range(n, nrows * ncols):
        axes[j // ncols][j % ncols].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_run_figures(log: RunLog, outdir: Union[str, Path]) -> dict[str, Path]:
    """Render the standard per-run figures next to the CSV outputs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return {
        "trajectory": trajectory_figure(log, outdir / "trajectory.png"),
        "parameters": parameter_figure(log, outdir / "params.png"),
        "sets": sets_figure(log, outdir / "sets.png"),
    }
