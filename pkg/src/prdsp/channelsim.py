"""Ground-truth channel impairments and the two-branch receiver front end.

The block order follows the transmit chain: Tx rail responses, modulator
nonlinearity, IQ impairments, fiber dispersion, receiver split with the
dispersive element on branch 1, photodetection with ASE/thermal/ENOB noise,
Rx electrical response and DC offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fieldcore import (
    BRANCH_DISPERSED,
    BRANCH_UNDISPERSED,
    SPEED_OF_LIGHT_M_S,
    ComplexWaveform,
    DispersionSpec,
    FirResponse,
    IntensityTrace,
    circular_filter,
    propagate_cd,
)
from .txchain import derive_rng, quantize_trace


@dataclass
class IqImpairment:
    """Power imbalance rho, time skew tau (seconds) and phase error phi (rad)."""

    rho: float = 0.0
    tau_s: float = 0.0
    phi_rad: float = 0.0

    def __post_init__(self):
        if self.rho <= -1.0:
            raise ValueError("rho must exceed -1")

    def is_identity(self) -> bool:
        return self.rho == 0.0 and self.tau_s == 0.0 and self.phi_rad == 0.0

    def negated(self) -> "IqImpairment":
        return IqImpairment(-self.rho, -self.tau_s, -self.phi_rad)


@dataclass
class NonlinearCoeffs:
    """Per-rail cubic transfer x + c2 x^2 + c3 x^3, monotonic over +-amplitude_range."""

    c2_i: float = 0.0
    c3_i: float = 0.0
    c2_q: float = 0.0
    c3_q: float = 0.0
    amplitude_range: float = 2.5

    def __post_init__(self):
        if self.amplitude_range <= 0:
            raise ValueError("amplitude_range must be positive")
        for c2, c3, rail in ((self.c2_i, self.c3_i, "I"), (self.c2_q, self.c3_q, "Q")):
            if not _cubic_monotonic(c2, c3, self.amplitude_range):
                raise ValueError(
                    f"{rail}-rail cubic not monotonic on +-{self.amplitude_range}"
                )

    def is_identity(self) -> bool:
        return self.c2_i == self.c3_i == self.c2_q == self.c3_q == 0.0


def _cubic_monotonic(c2: float, c3: float, a: float) -> bool:
    # derivative 1 + 2 c2 x + 3 c3 x^2 must stay positive on [-a, a]
    xs = [-a, a]
    if c3 != 0.0:
        vertex = -c2 / (3.0 * c3)
        if -a <= vertex <= a:
            xs.append(vertex)
    return all(1.0 + 2.0 * c2 * x + 3.0 * c3 * x * x > 0.0 for x in xs)


def _rail_cubic(x: np.ndarray, c2: float, c3: float) -> np.ndarray:
    return x + c2 * x * x + c3 * x * x * x


def _monotonic_interval(c2: float, c3: float, limit: float) -> tuple[float, float]:
    """Largest interval around 0 where the cubic derivative stays positive."""
    lo, hi = -limit, limit
    if c3 != 0.0:
        disc = 4.0 * c2 * c2 - 12.0 * c3
        if disc > 0:
            r1 = (-2.0 * c2 - np.sqrt(disc)) / (6.0 * c3)
            r2 = (-2.0 * c2 + np.sqrt(disc)) / (6.0 * c3)
            for r in sorted((r1, r2)):
                if r < 0:
                    lo = max(lo, r)
                elif r > 0:
                    hi = min(hi, r)
    elif c2 != 0.0:
        r = -1.0 / (2.0 * c2)
        if r < 0:
            lo = max(lo, r)
        else:
            hi = min(hi, r)
    return lo, hi


def _rail_cubic_inverse_table(
    c2: float, c3: float, amplitude_range: float, n_points: int = 4096
) -> tuple[np.ndarray, np.ndarray]:
    # monotone lookup with 25% margin beyond the declared range, restricted
    # to the interval where the cubic actually stays invertible
    lo, hi = _monotonic_interval(c2, c3, amplitude_range * 1.25)
    margin = 1e-3 * (hi - lo)
    x = np.linspace(lo + margin, hi - margin, n_points)
    return _rail_cubic(x, c2, c3), x


def apply_nonlinearity(w: ComplexWaveform, nl: NonlinearCoeffs) -> ComplexWaveform:
    """Memoryless cubic distortion applied to each drive rail independently."""
    if nl.is_identity():
        return w.with_samples(w.samples.copy())
    i = _rail_cubic(w.samples.real, nl.c2_i, nl.c3_i)
    q = _rail_cubic(w.samples.imag, nl.c2_q, nl.c3_q)
    return w.with_samples(i + 1j * q)


def invert_nonlinearity(w: ComplexWaveform, nl: NonlinearCoeffs) -> ComplexWaveform:
    """Reverse nonlinear transfer via a dense monotone lookup table per rail."""
    if nl.is_identity():
        return w.with_samples(w.samples.copy())
    yi, xi = _rail_cubic_inverse_table(nl.c2_i, nl.c3_i, nl.amplitude_range)
    yq, xq = _rail_cubic_inverse_table(nl.c2_q, nl.c3_q, nl.amplitude_range)
    i = np.interp(w.samples.real, yi, xi)
    q = np.interp(w.samples.imag, yq, xq)
    return w.with_samples(i + 1j * q)


def fractional_shift(x: np.ndarray, shift_samples: float) -> np.ndarray:
    """Advance a real signal by a (fractional) number of samples via linear phase.

    The Nyquist bin has no conjugate partner, so its phase factor is replaced
    by its real part to keep real signals real; the shift is exact for any
    signal with an empty Nyquist bin (always true for band-limited rails).
    """
    if shift_samples == 0.0:
        return x.copy()
    n = x.size
    f = np.fft.fftfreq(n)
    phase = np.exp(2j * np.pi * f * shift_samples)
    if n % 2 == 0:
        phase[n // 2] = np.cos(2 * np.pi * f[n // 2] * shift_samples)
    shifted = np.fft.ifft(np.fft.fft(x) * phase)
    return shifted.real if np.isrealobj(x) else shifted


def apply_iq(w: ComplexWaveform, iq: IqImpairment) -> ComplexWaveform:
    """IQ impairment model s = I + j sqrt(1+rho) Q(t+tau) e^{j phi}."""
    if iq.is_identity():
        return w.with_samples(w.samples.copy())
    q = fractional_shift(w.samples.imag, iq.tau_s * w.sample_rate_hz)
    q_term = np.sqrt(1.0 + iq.rho) * q * np.exp(1j * (iq.phi_rad + np.pi / 2.0))
    return w.with_samples(w.samples.real + q_term)


def invert_iq(w: ComplexWaveform, iq: IqImpairment) -> ComplexWaveform:
    """Exact inverse of apply_iq.

    From s = I + j sqrt(1+rho) Q(t+tau) e^{j phi}:
        I = Re(s) + tan(phi) Im(s)
        Q = delay(Im(s), tau) / (sqrt(1+rho) cos(phi))
    """
    if iq.is_identity():
        return w.with_samples(w.samples.copy())
    re, im = w.samples.real, w.samples.imag
    i_rail = re + np.tan(iq.phi_rad) * im
    q_rail = fractional_shift(im, -iq.tau_s * w.sample_rate_hz)
    q_rail = q_rail / (np.sqrt(1.0 + iq.rho) * np.cos(iq.phi_rad))
    return w.with_samples(i_rail + 1j * q_rail)


def apply_tx_response(
    w: ComplexWaveform, hi: FirResponse, hq: FirResponse
) -> ComplexWaveform:
    """Filter the I and Q rails with their own responses and recombine.

    Equal tap sets on both rails reduce to one complex filter applied to the
    whole field; distinct real tap sets model independent electrical chains.
    """
    if hi.is_identity() and hq.is_identity():
        return w.with_samples(w.samples.copy())
    i_part = circular_filter(w.samples.real.astype(np.complex128), hi.taps)
    q_part = circular_filter(w.samples.imag.astype(np.complex128), hq.taps)
    return w.with_samples(i_part + 1j * q_part)


def reference_bandwidth_hz(center_wavelength_nm: float) -> float:
    """0.1 nm OSNR reference bandwidth converted to Hz at the carrier."""
    lam = center_wavelength_nm * 1e-9
    return SPEED_OF_LIGHT_M_S * 0.1e-9 / lam**2


@dataclass
class ChannelModel:
    """Complete ground-truth impairment set; defaults are an identity channel."""

    tx_response_i: FirResponse = field(default_factory=lambda: FirResponse.identity("tx_I"))
    tx_response_q: FirResponse = field(default_factory=lambda: FirResponse.identity("tx_Q"))
    nl: NonlinearCoeffs = field(default_factory=NonlinearCoeffs)
    iq: IqImpairment = field(default_factory=IqImpairment)
    fiber: DispersionSpec = field(default_factory=lambda: DispersionSpec(0.0))
    splitter_ratio: float = 0.7
    element: DispersionSpec = field(default_factory=lambda: DispersionSpec(-1275.0))
    element_loss_db: float = 3.0
    rx_response_b1: FirResponse = field(default_factory=lambda: FirResponse.identity("rx_branch1"))
    rx_response_b2: FirResponse = field(default_factory=lambda: FirResponse.identity("rx_branch2"))
    dc_offset_b1: float = 0.0
    dc_offset_b2: float = 0.0
    osnr_db: float | None = None
    thermal_noise_a_per_sqrt_hz: float = 0.0
    responsivity_a_per_w: float = 1.0
    enob: float | None = None
    rx_power_w: float = 5e-3  # optical power entering the receiver splitter

    def __post_init__(self):
        if not 0.0 < self.splitter_ratio < 1.0:
            raise ValueError("splitter_ratio must be in (0, 1)")
        if self.rx_power_w <= 0:
            raise ValueError("rx_power_w must be positive")

    def branch_dispersion(self, branch: int) -> DispersionSpec:
        """Total dispersion, fiber plus (for branch 1) the dispersive element."""
        if branch == 1:
            return self.fiber.plus(self.element)
        return self.fiber


def add_ase(
    w: ComplexWaveform, osnr_db: float | None, d: DispersionSpec, rng: np.random.Generator
) -> ComplexWaveform:
    """Inject complex white Gaussian ASE at the OSNR referenced to 0.1 nm."""
    if osnr_db is None or not np.isfinite(osnr_db):
        return w.with_samples(w.samples.copy())
    p_sig = w.power()
    b_ref = reference_bandwidth_hz(d.center_wavelength_nm)
    p_ase = p_sig / 10.0 ** (osnr_db / 10.0) * (w.sample_rate_hz / b_ref)
    noise = rng.standard_normal(len(w)) + 1j * rng.standard_normal(len(w))
    return w.with_samples(w.samples + noise * np.sqrt(p_ase / 2.0))


def photodetect(
    w: ComplexWaveform,
    m: ChannelModel,
    rng_thermal: np.random.Generator,
    rng_adc: np.random.Generator,
    branch_id: str = BRANCH_UNDISPERSED,
) -> IntensityTrace:
    """Square-law detection plus thermal and ENOB-equivalent noise."""
    current = m.responsivity_a_per_w * np.abs(w.samples) ** 2
    if m.thermal_noise_a_per_sqrt_hz > 0:
        sigma = m.thermal_noise_a_per_sqrt_hz * np.sqrt(w.sample_rate_hz / 2.0)
        current = current + rng_thermal.normal(0.0, sigma, current.size)
    current = quantize_trace(current, m.enob, rng_adc)
    return IntensityTrace(current, w.sample_rate_hz, branch_id)


def run_channel(
    w: ComplexWaveform, m: ChannelModel, seed: int
) -> tuple[IntensityTrace, IntensityTrace]:
    """Full impairment chain from the Tx digital waveform to both branch traces."""
    field_in = w.with_samples(w.samples / np.sqrt(max(w.power(), 1e-300)))
    field_tx = apply_tx_response(field_in, m.tx_response_i, m.tx_response_q)
    field_tx = apply_nonlinearity(field_tx, m.nl)
    field_tx = apply_iq(field_tx, m.iq)
    field_rx = propagate_cd(field_tx, m.fiber)

    # receiver input: set the optical power, then add ASE before the splitter
    scale = np.sqrt(m.rx_power_w / max(field_rx.power(), 1e-300))
    field_rx = field_rx.with_samples(field_rx.samples * scale)
    field_rx = add_ase(field_rx, m.osnr_db, m.fiber, derive_rng(seed, "ase"))

    loss = 10.0 ** (-m.element_loss_db / 20.0)
    b1 = field_rx.with_samples(field_rx.samples * np.sqrt(m.splitter_ratio) * loss)
    b1 = propagate_cd(b1, m.element)
    b2 = field_rx.with_samples(field_rx.samples * np.sqrt(1.0 - m.splitter_ratio))

    t1 = photodetect(
        b1, m, derive_rng(seed, "thermal_b1"), derive_rng(seed, "enob_adc_b1"),
        BRANCH_DISPERSED,
    )
    t2 = photodetect(
        b2, m, derive_rng(seed, "thermal_b2"), derive_rng(seed, "enob_adc_b2"),
        BRANCH_UNDISPERSED,
    )

    s1 = circular_filter(t1.samples.astype(np.complex128), m.rx_response_b1.taps).real
    s2 = circular_filter(t2.samples.astype(np.complex128), m.rx_response_b2.taps).real
    t1 = IntensityTrace(s1 + m.dc_offset_b1, t1.sample_rate_hz, BRANCH_DISPERSED)
    t2 = IntensityTrace(s2 + m.dc_offset_b2, t2.sample_rate_hz, BRANCH_UNDISPERSED)
    return t1, t2
