"""Figure rendering for the report command; all output goes to PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evalkit import LDPC_RATE_THRESHOLDS

_FEC_LINES = {"6.25% HD-FEC": 4.7e-3, "25% SD-FEC": 4.0e-2}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": "prdsp"})
    plt.close(fig)
    return path


def plot_ber_curve(
    axis_values, ber_per_seed: dict[int, list[float]], axis_label: str, path: str | Path
) -> Path:
    """BER versus a sweep axis, one line per seed plus the FEC thresholds."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for seed, bers in sorted(ber_per_seed.items()):
        floored = np.maximum(np.asarray(bers, dtype=float), 1e-6)
        ax.semilogy(axis_values, floored, marker="o", label=f"seed {seed}")
    for name, level in _FEC_LINES.items():
        ax.axhline(level, linestyle="--", linewidth=0.8, color="grey")
        ax.annotate(name, (axis_values[0], level), fontsize=7, va="bottom")
    ax.set_xlabel(axis_label)
    ax.set_ylabel("pre-FEC BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_net_rate(
    pilot_ratios, net_rates_gbps, code_rates, path: str | Path
) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.plot(pilot_ratios, net_rates_gbps, marker="s")
    ax1.set_xlabel("pilot symbol ratio")
    ax1.set_ylabel("net data rate (Gb/s)")
    ax1.grid(alpha=0.3)
    ax2.plot(pilot_ratios, code_rates, marker="d")
    ax2.set_yticks(sorted(LDPC_RATE_THRESHOLDS))
    ax2.set_xlabel("pilot symbol ratio")
    ax2.set_ylabel("selected LDPC code rate")
    ax2.grid(alpha=0.3)
    return _save(fig, Path(path))


def plot_iteration_curve(
    amp_errors, bers, path: str | Path
) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    it = np.arange(1, len(amp_errors) + 1)
    ax.semilogy(it, np.maximum(amp_errors, 1e-12), label="inter-trace amplitude error")
    if bers:
        ax.semilogy(
            np.arange(1, len(bers) + 1), np.maximum(bers, 1e-6),
            linestyle="--", label="BER",
        )
    ax.set_xlabel("iteration")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_constellation(symbols: np.ndarray, path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    n = min(len(symbols), 20000)
    ax.scatter(symbols.real[:n], symbols.imag[:n], s=2, alpha=0.35, linewidths=0)
    ax.set_xlabel("in-phase")
    ax.set_ylabel("quadrature")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title, fontsize=9)
    ax.grid(alpha=0.3)
    return _save(fig, Path(path))
