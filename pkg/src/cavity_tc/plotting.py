"""Figures written next to the CSV outputs (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .model import TWO_PI  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trace(record, path, spectrum=None):
    """N_P(t) and eps(t), plus the spectrum when given."""
    ncol = 2 if spectrum is not None else 1
    fig, axes = plt.subplots(1, ncol, figsize=(5.5 * ncol, 3.6), squeeze=False)
    ax = axes[0, 0]
    ax.plot(record.times * 1e3, record.n_photon, lw=0.6, color="C0")
    ax.set_xlabel("t (ms)")
    ax.set_ylabel("N_P")
    ax2 = ax.twinx()
    ax2.plot(record.times * 1e3, record.epsilon, lw=0.6, color="C3", alpha=0.6)
    ax2.set_ylabel("eps (E_rec)", color="C3")
    for b in record.boundaries[:-1]:
        ax.axvline(b * 1e3, color="0.6", ls="--", lw=0.6)
    if spectrum is not None:
        ax = axes[0, 1]
        ax.semilogy(spectrum.frequencies * 1e-3, spectrum.power + 1e-30, lw=0.7)
        ax.set_xlabel("f (kHz)")
        ax.set_ylabel("|N_P(f)|^2")
        ax.set_xlim(0, min(40.0, spectrum.frequencies[-1] * 1e-3))
    return _save(fig, path)


def plot_phases(phases, amplitudes, path, labels=None):
    fig = plt.figure(figsize=(4.2, 4.2))
    ax = fig.add_subplot(projection="polar")
    if labels is None:
        ax.scatter(phases, amplitudes, s=14)
    else:
        ax.scatter(phases, amplitudes, c=np.asarray(labels), s=14, cmap="coolwarm")
    ax.set_title("oscillation phase vs drive")
    return _save(fig, path)


def plot_branches(times, branches, path):
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for k, b in enumerate(branches):
        axes[0].plot(times * 1e3, b.n_photon, lw=0.6, label=f"branch {k} ({b.size})")
        axes[1].plot(times * 1e3, b.n11, lw=0.6)
    axes[0].set_ylabel("N_P")
    axes[1].set_ylabel("N_11")
    axes[1].set_xlabel("t (ms)")
    axes[0].legend(fontsize=8)
    return _save(fig, path)


def plot_map(result, field, path, title=None):
    """Heat map (2 axes) or line (1 axis) of one SweepResult field."""
    arr = result.field_array(field)
    names = [n for n, _ in result.spec.axes]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    x = np.array(result.spec.axes[0][1])
    xs = x / TWO_PI * 1e-3 if names[0] in ("omega_dr", "delta_eff") else x
    if arr.ndim == 1:
        ax.plot(xs, arr, "o-")
        ax.set_xlabel(names[0])
        ax.set_ylabel(field)
    else:
        y = np.array(result.spec.axes[1][1])
        ys = y / TWO_PI * 1e-3 if names[1] in ("omega_dr", "delta_eff") else y
        m = ax.pcolormesh(xs, ys, arr.T, shading="nearest", cmap="viridis")
        fig.colorbar(m, ax=ax, label=field)
        ax.set_xlabel(names[0])
        ax.set_ylabel(names[1])
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_curves(xs, curves: dict, path, xlabel, ylabel, errors: dict | None = None):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, ys in curves.items():
        err = None if errors is None else errors.get(name)
        ax.errorbar(xs, ys, yerr=err, marker="o", ms=3, capsize=2, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _save(fig, path)
