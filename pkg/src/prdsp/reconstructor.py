"""Reconstruction stage: dual-trace modified Gerchberg-Saxton iteration.

Two field estimates propagate between the transmitter projection plane and
the two detector planes under the trained distortion picture. Each trace
visits the branches in the opposite order, measured amplitudes are imposed
at the detector planes, known symbols (guards, training, pilots) are imposed
at the transmitter plane after a matched-filter downsample, and the traces
are cross-mixed each iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fieldcore import (
    ComplexWaveform,
    IntensityTrace,
    bandwidth_filter,
    matched_filter_downsample,
    propagate_cd,
    rrc_shape,
)
from .trainer import ChannelEstimate, equalize_trace
from .txchain import FrameLayout, QamConstellation, qam_demap


@dataclass
class PrConfig:
    max_iters: int = 60
    convergence_rel_change: float = 1e-3
    convergence_hold_iters: int = 10
    phase_reset_enabled: bool = False
    phase_reset_threshold: float = 0.5
    phase_reset_start_iteration: int = 20
    phase_reset_period: int = 10
    bandwidth_cutoff_hz: float | None = None  # default: (1+rolloff)*baud/2
    trace_schedule: str = "sequential"  # sequential | alternate
    amplitude_step: float = 2.0
    mixing_weight: float = 0.5
    track_ber: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.convergence_rel_change <= 0 or self.phase_reset_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.phase_reset_period < 1:
            raise ValueError("phase_reset_period must be >= 1")
        if self.trace_schedule not in ("sequential", "alternate"):
            raise ValueError("trace_schedule must be sequential or alternate")
        if not 0.0 <= self.mixing_weight <= 0.5:
            raise ValueError("mixing_weight must be in [0, 1/2]")

    def reset_fires(self, iteration: int) -> bool:
        """Resets are gated: they target stalls, not the early transient."""
        if not self.phase_reset_enabled:
            return False
        if iteration < self.phase_reset_start_iteration:
            return False
        return (iteration - self.phase_reset_start_iteration) % self.phase_reset_period == 0


@dataclass
class ReconstructionResult:
    recovered_symbols: np.ndarray
    iterations_used: int
    per_iteration_amp_error: list[float]
    converged: bool
    per_iteration_ber: list[float] | None = None
    resets_per_iteration: list[int] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def check_convergence(history: list[float], cfg: PrConfig) -> bool:
    """Full convergence: the last `hold` relative changes all under the bound."""
    hold = cfg.convergence_hold_iters
    if len(history) < hold + 1:
        return False
    recent = np.asarray(history[-(hold + 1):])
    denom = np.maximum(recent[:-1], 1e-30)
    rel = np.abs(np.diff(recent)) / denom
    return bool(np.all(rel < cfg.convergence_rel_change))


def selective_phase_reset(
    trace_a: np.ndarray, trace_b: np.ndarray, threshold: float
) -> tuple[np.ndarray, np.ndarray, int]:
    """Zero the phase of samples whose amplitudes disagree beyond the threshold.

    The discrepancy measure is |ampA - ampB| relative to the mean amplitude
    of both traces; disagreement flags likely estimation failures.
    """
    amp_a, amp_b = np.abs(trace_a), np.abs(trace_b)
    mean_amp = float(np.mean(0.5 * (amp_a + amp_b)))
    if not np.isfinite(threshold):
        return trace_a, trace_b, 0
    bad = np.abs(amp_a - amp_b) > threshold * mean_amp
    n = int(bad.sum())
    if n:
        trace_a = np.where(bad, amp_a.astype(np.complex128), trace_a)
        trace_b = np.where(bad, amp_b.astype(np.complex128), trace_b)
    return trace_a, trace_b, n


class _GsEngine:
    """Precomputed operators for one reconstruction run."""

    def __init__(
        self,
        traces: tuple[IntensityTrace, IntensityTrace],
        est: ChannelEstimate,
        layout: FrameLayout,
        cfg: PrConfig,
    ):
        spec = layout.spec
        self.spec = spec
        self.cfg = cfg
        self.fs = spec.sample_rate_hz
        self.cutoff = cfg.bandwidth_cutoff_hz or (
            (1.0 + spec.rolloff) * spec.symbol_rate_baud / 2.0
        )
        self.est = est
        self.premix = spec.premix_dispersion

        # measured amplitudes on the model scale: equalised, aligned,
        # unit-mean intensity, then amplitude via sqrt(max(., 0))
        amps = {}
        for branch, trace, lag, fir, dc in (
            (1, traces[0], est.lag_b1, est.rx_ffe_b1, est.dc_b1),
            (2, traces[1], est.lag_b2, est.rx_ffe_b2, est.dc_b2),
        ):
            eq = equalize_trace(trace, fir, dc)
            eq = np.roll(eq, -lag)
            eq = eq / max(np.mean(eq), 1e-30)
            amps[branch] = np.sqrt(np.maximum(eq, 0.0))
        self.measured_amp = amps

        self.known_mask = layout.known_symbol_mask()
        self.known_vals = np.where(self.known_mask, layout.symbols, 0.0)
        self.distortion_aware = not (
            est.tx_response.is_identity() and est.iq.is_identity() and est.nl.is_identity()
        )

    # residual dispersion between the premix plane and each branch detector
    def _branch_residual(self, branch: int):
        return self.est.branch_dispersion(branch).plus(self.premix.negated())

    def forward_to_branch(self, w: ComplexWaveform, branch: int) -> ComplexWaveform:
        out = propagate_cd(w, self.premix)
        if self.distortion_aware:
            out = self.est.forward_distort(out)
        return propagate_cd(out, self._branch_residual(branch))

    def backward_from_branch(self, w: ComplexWaveform, branch: int) -> ComplexWaveform:
        out = propagate_cd(w, self._branch_residual(branch).negated())
        if self.distortion_aware:
            out = self.est.reverse_distort(out)
        return propagate_cd(out, self.premix.negated())

    def amplitude_constraint(self, samples: np.ndarray, branch: int) -> np.ndarray:
        mag = np.abs(samples)
        phase = samples / np.maximum(mag, 1e-30)
        new_mag = mag + self.cfg.amplitude_step * (self.measured_amp[branch] - mag)
        return new_mag * phase

    def tx_plane_constraint(self, w: ComplexWaveform) -> tuple[ComplexWaveform, np.ndarray]:
        """Downsample to symbols, impose known symbols, re-shape, band-limit."""
        symbols = matched_filter_downsample(w, self.spec.rolloff, self.spec.sps)
        symbols[self.known_mask] = self.known_vals[self.known_mask]
        shaped = rrc_shape(
            symbols, self.spec.rolloff, self.spec.sps, sample_rate_hz=self.fs
        )
        return bandwidth_filter(shaped, self.cutoff), symbols

    def half_cycle(self, state: ComplexWaveform, branch: int):
        fwd = self.forward_to_branch(state, branch)
        constrained = fwd.with_samples(self.amplitude_constraint(fwd.samples, branch))
        back = self.backward_from_branch(constrained, branch)
        back = bandwidth_filter(back, self.cutoff)
        return self.tx_plane_constraint(back)

    def initial_state(self) -> ComplexWaveform:
        shaped = rrc_shape(
            self.known_vals, self.spec.rolloff, self.spec.sps, sample_rate_hz=self.fs
        )
        return bandwidth_filter(shaped, self.cutoff)


def gs_iteration_step(
    state: tuple[ComplexWaveform, ComplexWaveform],
    engine: _GsEngine,
    iteration: int,
) -> tuple[tuple[ComplexWaveform, ComplexWaveform], dict]:
    """One dual-trace iteration; returns the new state and step diagnostics.

    Trace A visits the branches in order (1,2,1,2,...) from this iteration's
    phase, trace B in the opposite order; under the "alternate" schedule each
    trace applies a single branch constraint per iteration instead.
    """
    cfg = engine.cfg
    tr_a, tr_b = state
    first_a = 1 + (iteration % 2)      # 1,2,1,2...
    first_b = 1 + ((iteration + 1) % 2)
    if cfg.trace_schedule == "sequential":
        mid_a, _ = engine.half_cycle(tr_a, first_a)
        new_a, syms_a = engine.half_cycle(mid_a, 3 - first_a)
        mid_b, _ = engine.half_cycle(tr_b, first_b)
        new_b, syms_b = engine.half_cycle(mid_b, 3 - first_b)
    else:
        new_a, syms_a = engine.half_cycle(tr_a, first_a)
        new_b, syms_b = engine.half_cycle(tr_b, first_b)

    amp_err = float(np.mean(np.abs(np.abs(new_a.samples) - np.abs(new_b.samples))))

    resets = 0
    sa, sb = new_a.samples, new_b.samples
    if cfg.reset_fires(iteration):
        sa, sb, resets = selective_phase_reset(sa, sb, cfg.phase_reset_threshold)

    w = cfg.mixing_weight
    mixed_a = (1.0 - w) * sa + w * sb
    mixed_b = (1.0 - w) * sb + w * sa
    out = (new_a.with_samples(mixed_a), new_b.with_samples(mixed_b))
    diag = {
        "amp_err": amp_err,
        "resets": resets,
        "symbols": 0.5 * (syms_a + syms_b),
    }
    return out, diag


def reconstruct(
    traces: tuple[IntensityTrace, IntensityTrace],
    est: ChannelEstimate,
    layout: FrameLayout,
    cfg: PrConfig,
    constellation: QamConstellation | None = None,
    truth_bits: np.ndarray | None = None,
) -> ReconstructionResult:
    """Run the dual-trace GS loop until full convergence or the iteration cap.

    Returns the payload data symbols recovered at the transmitter projection
    plane after the final known-symbol constraint. Non-convergence is
    reported through `converged=False`, never as an exception.
    """
    engine = _GsEngine(traces, est, layout, cfg)
    state = (engine.initial_state(), engine.initial_state())

    history: list[float] = []
    resets_log: list[int] = []
    ber_log: list[float] = [] if (cfg.track_ber and truth_bits is not None) else None
    data_mask = ~layout.pilot_mask
    symbols = None
    iterations = 0
    converged = False

    for it in range(cfg.max_iters):
        state, diag = gs_iteration_step(state, engine, it)
        history.append(diag["amp_err"])
        resets_log.append(diag["resets"])
        symbols = diag["symbols"]
        iterations = it + 1
        if ber_log is not None:
            recovered = symbols[layout.spec.payload_start:][data_mask]
            bits = qam_demap(recovered, constellation)
            ber_log.append(float(np.mean(bits != truth_bits)))
        if check_convergence(history, cfg):
            converged = True
            break

    recovered = symbols[layout.spec.payload_start:][data_mask]
    return ReconstructionResult(
        recovered_symbols=recovered,
        iterations_used=iterations,
        per_iteration_amp_error=history,
        converged=converged,
        per_iteration_ber=ber_log,
        resets_per_iteration=resets_log,
        diagnostics={"schedule": cfg.trace_schedule, "amplitude_step": cfg.amplitude_step},
    )
