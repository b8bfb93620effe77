"""Training stage: per-branch dispersion search, synchronisation, Rx FFE and
DC recovery, iterative complex Tx response estimation from a single intensity
measurement, and greedy grid search of IQ impairments and modulator
nonlinearity, with optional refinement loops."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .channelsim import (
    IqImpairment,
    NonlinearCoeffs,
    apply_iq,
    apply_nonlinearity,
    apply_tx_response,
    invert_iq,
    invert_nonlinearity,
)
from .fieldcore import (
    ComplexWaveform,
    DispersionSpec,
    FirResponse,
    IntensityTrace,
    bandwidth_filter,
    circular_filter,
    propagate_cd,
    rrc_shape,
)
from .txchain import FrameLayout


@dataclass
class GridSpec:
    span: float
    step: float

    def values(self) -> np.ndarray:
        n = int(round(self.span / self.step))
        return np.arange(-n, n + 1) * self.step


@dataclass
class TrainingConfig:
    ffe_taps: int = 101
    tx_est_taps: int = 511
    tx_est_max_iters: int = 20
    refinement_loops: int = 0
    cd_search_span_ps_per_nm: float = 1000.0
    cd_search_step_ps_per_nm: float = 10.0
    grid_phi: GridSpec = field(default_factory=lambda: GridSpec(0.2, 0.01))
    grid_tau: GridSpec = field(default_factory=lambda: GridSpec(1.0, 0.05))  # samples
    grid_rho: GridSpec = field(default_factory=lambda: GridSpec(0.3, 0.01))
    grid_c2: GridSpec = field(default_factory=lambda: GridSpec(0.2, 0.01))
    grid_c3: GridSpec = field(default_factory=lambda: GridSpec(0.2, 0.01))
    grid_rounds: int = 3
    compensation: str = "full"  # full | ffe_only | none

    def __post_init__(self):
        if self.ffe_taps % 2 == 0 or self.tx_est_taps % 2 == 0:
            raise ValueError("tap counts must be odd")
        if self.grid_rounds < 1:
            raise ValueError("grid_rounds must be >= 1")
        if self.compensation not in ("full", "ffe_only", "none"):
            raise ValueError("compensation must be full, ffe_only or none")


@dataclass
class CdEstimate:
    spec: DispersionSpec
    lag_samples: int
    peak: float
    ambiguous: bool


@dataclass
class ChannelEstimate:
    """Trained channel picture plus everything needed to reverse it."""

    cd_b1: DispersionSpec
    cd_b2: DispersionSpec
    lag_b1: int
    lag_b2: int
    rx_ffe_b1: FirResponse
    rx_ffe_b2: FirResponse
    dc_b1: float
    dc_b2: float
    tx_response: FirResponse
    iq: IqImpairment
    nl: NonlinearCoeffs
    diagnostics: dict = field(default_factory=dict)

    def reverse_iq_params(self) -> IqImpairment:
        return self.iq.negated()

    def branch_dispersion(self, branch: int) -> DispersionSpec:
        return self.cd_b1 if branch == 1 else self.cd_b2

    def forward_distort(self, w: ComplexWaveform) -> ComplexWaveform:
        """Emulate the estimated Tx distortion: response, nonlinearity, IQ."""
        out = apply_tx_response(w, self.tx_response, self.tx_response)
        out = apply_nonlinearity(out, self.nl)
        return apply_iq(out, self.iq)

    def reverse_distort(self, w: ComplexWaveform) -> ComplexWaveform:
        """Undo the estimated Tx distortion in the opposite block order."""
        out = invert_iq(w, self.iq)
        out = invert_nonlinearity(out, self.nl)
        return _apply_inverse_fir(out, self.tx_response)


def identity_estimate(
    cd_b1: DispersionSpec, cd_b2: DispersionSpec, lag_b1: int = 0, lag_b2: int = 0
) -> ChannelEstimate:
    """Estimate that only knows dispersion and timing (conventional receiver).

    The DC offsets are 1.0: traces are normalised to unit mean before
    equalisation, so restoring the natural DC level means adding back 1.
    """
    return ChannelEstimate(
        cd_b1=cd_b1,
        cd_b2=cd_b2,
        lag_b1=lag_b1,
        lag_b2=lag_b2,
        rx_ffe_b1=FirResponse.identity("rx_branch1"),
        rx_ffe_b2=FirResponse.identity("rx_branch2"),
        dc_b1=1.0,
        dc_b2=1.0,
        tx_response=FirResponse.identity("tx_I"),
        iq=IqImpairment(),
        nl=NonlinearCoeffs(),
    )


def _apply_inverse_fir(
    w: ComplexWaveform, fir: FirResponse, floor_rel: float = 1e-2
) -> ComplexWaveform:
    """Frequency-domain FIR inversion with magnitude clamping at nulls."""
    if fir.is_identity():
        return w.with_samples(w.samples.copy())
    n = len(w)
    kernel = np.zeros(n, dtype=np.complex128)
    kernel[: fir.taps.size] = fir.taps
    kernel = np.roll(kernel, -((fir.taps.size - 1) // 2))
    spec = np.fft.fft(kernel)
    mag = np.abs(spec)
    floor = floor_rel * mag.max()
    clamped = np.where(mag < floor, floor * np.exp(1j * np.angle(spec)), spec)
    return w.with_samples(np.fft.ifft(np.fft.fft(w.samples) / clamped))


def _normalize_trace(samples: np.ndarray) -> np.ndarray:
    mean = np.mean(samples)
    if mean <= 0:
        mean = np.mean(np.abs(samples)) or 1.0
    return samples / mean


def _training_reference(layout: FrameLayout) -> ComplexWaveform:
    """Training sequence shaped as its own cyclic block (guards make the
    in-frame training window agree with this block after propagation)."""
    spec = layout.spec
    return rrc_shape(
        layout.training_symbols, spec.rolloff, spec.sps,
        sample_rate_hz=spec.sample_rate_hz,
    )


def _training_window(layout: FrameLayout) -> slice:
    spec = layout.spec
    start = spec.guard_len * spec.sps
    return slice(start, start + spec.training_len * spec.sps)


def estimate_cd(
    trace: IntensityTrace, training: ComplexWaveform, cfg: TrainingConfig,
    center_ps_per_nm: float = 0.0, wavelength_nm: float = 1541.02,
) -> CdEstimate:
    """Grid-search the dispersion maximising the intensity correlation peak.

    Returns the winning dispersion together with the correlation-peak lag
    used for time synchronisation. The estimate is flagged ambiguous when
    the margin over the runner-up is below 3x the correlation noise floor.
    """
    meas = _normalize_trace(trace.samples.astype(float))
    meas = meas - meas.mean()
    meas_spec = np.fft.fft(meas)

    step = cfg.cd_search_step_ps_per_nm
    n_steps = int(round(cfg.cd_search_span_ps_per_nm / step))
    grid = center_ps_per_nm + np.arange(-n_steps, n_steps + 1) * step

    peaks = np.empty(grid.size)
    lags = np.empty(grid.size, dtype=int)
    for i, d in enumerate(grid):
        cand = propagate_cd(training, DispersionSpec(float(d), wavelength_nm))
        ref = np.abs(cand.samples) ** 2
        ref = ref - ref.mean()
        padded = np.zeros(meas.size)
        padded[: ref.size] = ref
        # corr[l] = sum_t ref[t] * meas[t + l]: peak index is the trace lag
        corr = np.fft.ifft(np.conj(np.fft.fft(padded)) * meas_spec).real
        lags[i] = int(np.argmax(corr))
        peaks[i] = corr[lags[i]] / (np.linalg.norm(padded) * np.linalg.norm(meas) + 1e-300)

    best = int(np.argmax(peaks))
    # exclude the main correlation lobe (contiguous descent around the best
    # point, at least +-1 step) before looking for a competing runner-up
    lo = best
    while lo > 0 and peaks[lo - 1] <= peaks[lo]:
        lo -= 1
    hi = best
    while hi < peaks.size - 1 and peaks[hi + 1] <= peaks[hi]:
        hi += 1
    outside = np.ones(grid.size, dtype=bool)
    outside[max(lo, 0):hi + 1] = False
    outside &= np.abs(grid - grid[best]) > step * 1.5
    runner = peaks[outside].max() if outside.any() else 0.0
    noise_floor = 1.4826 * np.median(np.abs(peaks - np.median(peaks))) + 1e-12
    ambiguous = (peaks[best] - runner) < 3.0 * noise_floor
    if ambiguous:
        warnings.warn("dispersion grid search peak is ambiguous", RuntimeWarning)
    lag = lags[best]
    if lag > meas.size // 2:
        lag -= meas.size
    return CdEstimate(
        spec=DispersionSpec(float(grid[best]), wavelength_nm),
        lag_samples=int(lag),
        peak=float(peaks[best]),
        ambiguous=bool(ambiguous),
    )


def _ls_real_fir(x: np.ndarray, y: np.ndarray, rows: np.ndarray, ntaps: int):
    """Least-squares real FIR mapping x -> y over the given row positions."""
    half = ntaps // 2
    n = x.size
    cols = (rows[:, None] - np.arange(-half, half + 1)[None, :]) % n
    design = x[cols]
    taps, _, rank, sv = np.linalg.lstsq(design, y[rows], rcond=None)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if rank < ntaps or cond > 1e12:
        raise ValueError(f"rank-deficient FFE system (cond ~ {cond:.2e})")
    return taps[::-1].copy(), cond


def train_rx_ffe(
    trace: IntensityTrace,
    expected: np.ndarray,
    window: slice,
    cfg: TrainingConfig,
    margin_symbols: int = 128,
    sps: int = 2,
) -> tuple[FirResponse, float, dict]:
    """Train one branch's intensity-domain FFE and recover the DC offset.

    The FFE is a least-squares real FIR from the DC-removed measured trace to
    the DC-removed expected intensity over the interior of the training
    window; the scalar DC offset is then found by a 1-D search minimising the
    equalised-intensity MAE.
    """
    meas = _normalize_trace(trace.samples.astype(float))
    margin = margin_symbols * sps
    rows = np.arange(window.start + margin, window.stop - margin)

    meas_ac = meas - meas.mean()
    exp_mean = expected[window].mean()
    target = np.zeros_like(meas)
    target[rows] = expected[rows] - exp_mean

    taps, cond = _ls_real_fir(meas_ac, target, rows, cfg.ffe_taps)
    fir = FirResponse(taps.astype(np.complex128), "rx_branch1")

    equalized_ac = circular_filter(meas_ac.astype(np.complex128), fir.taps).real

    def mae_at(dc: float) -> float:
        return float(np.mean(np.abs(equalized_ac[rows] + dc - expected[rows])))

    res = scipy.optimize.minimize_scalar(
        mae_at, bounds=(exp_mean - 1.0, exp_mean + 1.0), method="bounded",
        options={"xatol": 1e-6},
    )
    dc = float(res.x)
    pre_mae = float(np.mean(np.abs(meas[rows] - expected[rows])))
    post_mae = mae_at(dc)
    diag = {"condition": float(cond), "pre_mae": pre_mae, "post_mae": post_mae}
    return fir, dc, diag


def equalize_trace(
    trace: IntensityTrace, fir: FirResponse, dc: float
) -> np.ndarray:
    """Apply the trained FFE to the normalised trace and restore the DC level."""
    meas = _normalize_trace(trace.samples.astype(float))
    meas_ac = meas - meas.mean()
    return circular_filter(meas_ac.astype(np.complex128), fir.taps).real + dc


def _ls_complex_fir_circular(
    x: np.ndarray, y: np.ndarray, ntaps: int, ridge: float = 1e-9
) -> np.ndarray:
    """Exact LS for the circular model y = x (*) h with centred taps.

    Solved through the Toeplitz normal equations built from FFT-domain
    auto/cross correlations; a small ridge keeps the system well posed.
    """
    n = x.size
    xf = np.fft.fft(x)
    yf = np.fft.fft(y)
    autocorr = np.fft.ifft(np.abs(xf) ** 2)
    crosscorr = np.fft.ifft(np.conj(xf) * yf)
    half = ntaps // 2
    lags = np.arange(-half, half + 1)
    a = autocorr[(lags[:, None] - lags[None, :]) % n]
    b = crosscorr[lags % n]
    a = a + np.eye(ntaps) * ridge * np.trace(a).real / ntaps
    return np.linalg.solve(a, b)


def estimate_tx_response(
    measured_amplitude: np.ndarray,
    training: ComplexWaveform,
    d: DispersionSpec,
    cfg: TrainingConfig,
    known_distortion: tuple[NonlinearCoeffs, IqImpairment] | None = None,
    bandwidth_cutoff_hz: float | None = None,
) -> tuple[FirResponse, dict]:
    """Iterative single-measurement complex Tx response estimator.

    Alternates between propagating the currently distorted training block to
    the detector plane, merging the measured amplitude with the estimated
    phase, returning through the bandwidth constraint and inverse dispersion,
    and re-fitting the response with least squares. Stops when the amplitude
    MAE starts to increase or the iteration cap is reached; the best-MAE
    estimate is returned.
    """
    p = training
    a = np.asarray(measured_amplitude, dtype=float)
    if bandwidth_cutoff_hz is None:
        bandwidth_cutoff_hz = p.sample_rate_hz / 2.0
    ntaps = cfg.tx_est_taps
    h = np.zeros(ntaps, dtype=np.complex128)
    h[ntaps // 2] = 1.0
    maes: list[float] = []
    best_mae, best_h, best_iter = np.inf, h.copy(), 0

    for k in range(cfg.tx_est_max_iters):
        p_d = p.with_samples(circular_filter(p.samples, h))
        if known_distortion is not None:
            nl, iq = known_distortion
            p_d = apply_iq(apply_nonlinearity(p_d, nl), iq)
        p_d_rx = propagate_cd(p_d, d)
        mae = float(np.mean(np.abs(np.abs(p_d_rx.samples) - a)))
        maes.append(mae)
        if mae < best_mae:
            best_mae, best_h, best_iter = mae, h.copy(), k
        if k > 0 and mae > maes[-2]:
            break
        merged = p_d_rx.with_samples(a * np.exp(1j * np.angle(p_d_rx.samples)))
        back = propagate_cd(merged, d.negated())
        back = bandwidth_filter(back, bandwidth_cutoff_hz)
        if known_distortion is not None:
            nl, iq = known_distortion
            back = invert_nonlinearity(invert_iq(back, iq), nl)
        h = _ls_complex_fir_circular(p.samples, back.samples, ntaps)
    else:
        if len(maes) >= 2 and maes[-1] < maes[-2]:
            warnings.warn(
                "Tx response estimation hit the iteration cap while still improving",
                RuntimeWarning,
            )

    diag = {"maes": maes, "iterations": len(maes), "best_iteration": best_iter}
    return FirResponse(best_h, "tx_I"), diag


_GRID_ORDER = ("phi", "tau", "rho", "c2_i", "c2_q", "c3_i", "c3_q")


def _params_to_models(
    values: dict, sample_rate_hz: float, amplitude_range: float
) -> tuple[NonlinearCoeffs, IqImpairment]:
    iq = IqImpairment(
        rho=values["rho"],
        tau_s=values["tau"] / sample_rate_hz,
        phi_rad=values["phi"],
    )
    nl = NonlinearCoeffs(
        c2_i=values["c2_i"], c3_i=values["c3_i"],
        c2_q=values["c2_q"], c3_q=values["c3_q"],
        amplitude_range=amplitude_range,
    )
    return nl, iq


def estimate_iq_nl(
    measured: dict[int, np.ndarray],
    training_distorted: ComplexWaveform,
    dispersions: dict[int, DispersionSpec],
    cfg: TrainingConfig,
    amplitude_range: float = 2.5,
) -> tuple[IqImpairment, NonlinearCoeffs, dict]:
    """Greedy grid search of (phi, tau, rho, c2_I, c2_Q, c3_I, c3_Q).

    Each parameter is scanned over its grid while the others are held, in
    that fixed order, for `grid_rounds` rounds; every parameter starts from
    zero. The objective is the summed per-branch MAE between power-normalised
    measured and emulated training intensities.
    """
    grids = {
        "phi": cfg.grid_phi.values(),
        "tau": cfg.grid_tau.values(),
        "rho": cfg.grid_rho.values(),
        "c2_i": cfg.grid_c2.values(),
        "c2_q": cfg.grid_c2.values(),
        "c3_i": cfg.grid_c3.values(),
        "c3_q": cfg.grid_c3.values(),
    }
    meas_norm = {b: _normalize_trace(m) for b, m in measured.items()}
    fs = training_distorted.sample_rate_hz

    def objective(values: dict) -> float:
        try:
            nl, iq = _params_to_models(values, fs, amplitude_range)
        except ValueError:
            return np.inf  # non-monotonic candidate cubic
        distorted = apply_iq(apply_nonlinearity(training_distorted, nl), iq)
        total = 0.0
        for b, meas in meas_norm.items():
            emulated = np.abs(propagate_cd(distorted, dispersions[b]).samples) ** 2
            total += float(np.mean(np.abs(_normalize_trace(emulated) - meas)))
        return total

    values = {name: 0.0 for name in _GRID_ORDER}
    curve_log: dict[str, list] = {}
    for round_idx in range(cfg.grid_rounds):
        for name in _GRID_ORDER:
            scores = []
            for candidate in grids[name]:
                trial = dict(values)
                trial[name] = float(candidate)
                scores.append(objective(trial))
            best = int(np.argmin(scores))
            values[name] = float(grids[name][best])
            if best in (0, len(scores) - 1):
                warnings.warn(
                    f"grid optimum for {name} landed on the search boundary",
                    RuntimeWarning,
                )
            curve_log[f"round{round_idx}_{name}"] = [grids[name].tolist(), scores]

    nl, iq = _params_to_models(values, fs, amplitude_range)
    diag = {"values": dict(values), "objective": objective(values), "curves": curve_log}
    return iq, nl, diag


def training_intensity_snr_db(measured: np.ndarray, emulated: np.ndarray) -> float:
    """Intensity SNR of the emulation: signal power over residual power."""
    meas = _normalize_trace(measured)
    emu = _normalize_trace(emulated)
    err = meas - emu
    return float(10.0 * np.log10(np.mean(meas**2) / max(np.mean(err**2), 1e-300)))


def run_training(
    traces: tuple[IntensityTrace, IntensityTrace],
    layout: FrameLayout,
    cfg: TrainingConfig,
) -> ChannelEstimate:
    """Execute the full training cycle, then the configured refinement loops.

    Per cycle: per-branch dispersion search and synchronisation, FFE + DC
    training against the (progressively distortion-aware) expected intensity,
    Tx response estimation from the undispersed branch, and the greedy
    IQ/nonlinearity grid search. `cfg.compensation` selects how much of the
    chain is actually trained (for the conventional-receiver baselines).

    Distortion is emulated at the premix plane, where it physically acts:
    the training block is premixed first, the candidate distortion applied,
    and only the residual (fiber plus element) dispersion propagated after.
    """
    spec = layout.spec
    training_ref = _training_reference(layout)
    window = _training_window(layout)
    cutoff = (1.0 + spec.rolloff) * spec.symbol_rate_baud / 2.0
    t1, t2 = traces

    center = spec.premix_dispersion.dispersion_ps_per_nm
    wl = spec.premix_dispersion.center_wavelength_nm
    cd1 = estimate_cd(t1, training_ref, cfg, center, wl)
    cd2 = estimate_cd(t2, training_ref, cfg, center, wl)
    # the raw correlation lag points at the training window, which sits
    # guard_len symbols into an aligned frame; the excess is the trace delay
    nominal = spec.guard_len * spec.sps
    lag1 = cd1.lag_samples - nominal
    lag2 = cd2.lag_samples - nominal
    aligned = {
        1: IntensityTrace(np.roll(t1.samples, -lag1), t1.sample_rate_hz, t1.branch_id),
        2: IntensityTrace(np.roll(t2.samples, -lag2), t2.sample_rate_hz, t2.branch_id),
    }
    dispersions = {1: cd1.spec, 2: cd2.spec}

    est = identity_estimate(cd1.spec, cd2.spec, lag1, lag2)
    est.diagnostics["cd"] = {
        "b1": {"d": cd1.spec.dispersion_ps_per_nm, "lag": lag1,
               "peak": cd1.peak, "ambiguous": cd1.ambiguous},
        "b2": {"d": cd2.spec.dispersion_ps_per_nm, "lag": lag2,
               "peak": cd2.peak, "ambiguous": cd2.ambiguous},
    }
    if cfg.compensation == "none":
        return est

    premixed_ref = propagate_cd(training_ref, spec.premix_dispersion)
    residual = {
        b: dispersions[b].plus(spec.premix_dispersion.negated()) for b in (1, 2)
    }

    loops = 1 + (cfg.refinement_loops if cfg.compensation == "full" else 0)
    snapshots = []
    for loop in range(loops):
        # expected intensity: premixed training block through the current
        # Tx distortion picture, then the residual branch dispersion
        if cfg.compensation == "full" and loop > 0:
            distorted_ref = est.forward_distort(premixed_ref)
        else:
            distorted_ref = premixed_ref
        ffe, dcs, ffe_diag = {}, {}, {}
        for b in (1, 2):
            expected = np.abs(propagate_cd(distorted_ref, residual[b]).samples) ** 2
            expected = _normalize_trace(expected)
            exp_full = np.zeros(len(aligned[b].samples))
            exp_full[window] = expected
            fir, dc, diag = train_rx_ffe(aligned[b], exp_full, window, cfg, sps=spec.sps)
            fir.reference = f"rx_branch{b}"
            ffe[b], dcs[b], ffe_diag[b] = fir, dc, diag
        est.rx_ffe_b1, est.rx_ffe_b2 = ffe[1], ffe[2]
        est.dc_b1, est.dc_b2 = dcs[1], dcs[2]

        if cfg.compensation == "ffe_only":
            est.diagnostics.setdefault("ffe", []).append(ffe_diag)
            return est

        eq = {
            1: equalize_trace(aligned[1], ffe[1], dcs[1]),
            2: equalize_trace(aligned[2], ffe[2], dcs[2]),
        }
        amp = {b: np.sqrt(np.maximum(eq[b][window], 0.0)) for b in (1, 2)}

        known = (est.nl, est.iq) if loop > 0 else None
        tx_fir, tx_diag = estimate_tx_response(
            amp[2], premixed_ref, residual[2], cfg,
            known_distortion=known, bandwidth_cutoff_hz=cutoff,
        )
        est.tx_response = tx_fir

        distorted_by_fir = premixed_ref.with_samples(
            circular_filter(premixed_ref.samples, tx_fir.taps)
        )
        measured_intensity = {b: eq[b][window] for b in (1, 2)}
        iq, nl, grid_diag = estimate_iq_nl(
            measured_intensity, distorted_by_fir, residual, cfg
        )
        est.iq, est.nl = iq, nl

        snapshot = {
            "loop": loop,
            "ffe": ffe_diag,
            "tx_response_maes": tx_diag["maes"],
            "grid_values": grid_diag["values"],
            "intensity_snr_db": {},
        }
        emulated_full = est.forward_distort(premixed_ref)
        for b in (1, 2):
            emu = np.abs(propagate_cd(emulated_full, residual[b]).samples) ** 2
            snapshot["intensity_snr_db"][b] = training_intensity_snr_db(
                eq[b][window], emu
            )
        snapshots.append(snapshot)

    est.diagnostics["loops"] = snapshots
    return est
