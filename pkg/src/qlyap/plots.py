"""Figure rendering for design, replay, sweep, and ensemble outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .control import DesignReport
from .robustness import EnsembleResult, SweepResult

DPI = 150


def render_design(path, report: DesignReport) -> None:
    """Fidelity/Lyapunov traces on top, the scheduled fields below."""
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    t = report.times_recorded
    ax1.plot(t, report.fidelity_trace, label="fidelity")
    ax1.plot(t, report.lyapunov_trace, label="V")
    ax1.set_ylabel("fidelity / V")
    ax1.legend(loc="center right")
    sched = report.schedule
    for n in range(sched.n_fields):
        ax2.plot(sched.times, sched.fields[:, n], lw=0.8,
                 label=f"f_{n + 1}")
    ax2.set_xlabel("t")
    ax2.set_ylabel("control fields")
    ax2.legend(loc="upper right", ncol=min(sched.n_fields, 4))
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def render_replay(path, times: np.ndarray, series: np.ndarray) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, series)
    ax.set_xlabel("t")
    ax.set_ylabel("fidelity")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def render_sweep(path, result: SweepResult) -> None:
    """Final fidelity heatmap over the two perturbation axes."""
    a1 = result.grid.axis1.points()
    a2 = result.grid.axis2.points()
    fig, ax = plt.subplots(figsize=(6, 5))
    mesh = ax.pcolormesh(a1, a2, result.values.T, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="final fidelity")
    ax.set_xlabel(result.grid.axis1.name)
    ax.set_ylabel(result.grid.axis2.name)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def render_ensemble(path, result: EnsembleResult) -> None:
    """Ensemble mean with min-max band, trial 0 overlaid."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.fill_between(result.times, result.min, result.max, alpha=0.25,
                    label="min-max")
    ax.plot(result.times, result.mean, label="mean")
    ax.plot(result.times, result.trial0, lw=0.8, label="trial 0")
    ax.set_xlabel("t")
    ax.set_ylabel("fidelity")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
