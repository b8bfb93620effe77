"""Complex sampled fields and the propagation primitives built on them.

Everything here is circular (block-periodic): chromatic dispersion, FIR
filtering and pulse shaping are applied on the FFT grid of the block, so a
waveform is always one self-contained period. Frames built upstream carry
guard symbols precisely so that this convention matches the physics over
the regions we care about.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT_M_S = 299792458.0

BRANCH_DISPERSED = "dispersed"
BRANCH_UNDISPERSED = "undispersed"


@dataclass
class ComplexWaveform:
    """Uniformly sampled complex baseband field."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform needs a nonempty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self):
        return self.samples.size

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray) -> "ComplexWaveform":
        return ComplexWaveform(samples, self.sample_rate_hz)


@dataclass
class IntensityTrace:
    """Real sampled photocurrent from one receiver branch."""

    samples: np.ndarray
    sample_rate_hz: float
    branch_id: str = BRANCH_UNDISPERSED

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("trace needs a nonempty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.branch_id not in (BRANCH_DISPERSED, BRANCH_UNDISPERSED):
            raise ValueError(f"unknown branch_id {self.branch_id!r}")

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class DispersionSpec:
    """Accumulated chromatic dispersion of one propagation element."""

    dispersion_ps_per_nm: float
    center_wavelength_nm: float = 1541.02

    def __post_init__(self):
        if not self.center_wavelength_nm > 0:
            raise ValueError("center_wavelength_nm must be positive")

    def negated(self) -> "DispersionSpec":
        return replace(self, dispersion_ps_per_nm=-self.dispersion_ps_per_nm)

    def plus(self, other: "DispersionSpec") -> "DispersionSpec":
        # dispersions along one path compose by adding D values
        return replace(
            self,
            dispersion_ps_per_nm=self.dispersion_ps_per_nm + other.dispersion_ps_per_nm,
        )


@dataclass
class FirResponse:
    """Complex FIR tap set with an odd, group-delay-centred tap count."""

    taps: np.ndarray
    reference: str = "tx_I"

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.complex128)
        if self.taps.ndim != 1 or self.taps.size < 1 or self.taps.size % 2 == 0:
            raise ValueError("taps must be a 1-D odd-length array")

    @classmethod
    def identity(cls, reference: str = "tx_I") -> "FirResponse":
        return cls(np.array([1.0 + 0.0j]), reference)

    def is_identity(self, tol: float = 0.0) -> bool:
        ref = np.zeros_like(self.taps)
        ref[self.taps.size // 2] = 1.0
        return bool(np.allclose(self.taps, ref, atol=tol))


def cd_frequency_response(n: int, sample_rate_hz: float, d: DispersionSpec) -> np.ndarray:
    """All-pass quadratic-phase response H(f) = exp(-j pi D lam^2 f^2 / c).

    D is converted from ps/nm to s/m; f is the baseband FFT frequency grid.
    The sign convention is fixed project-wide so that premix and fiber
    dispersion values compose by plain addition.
    """
    f = np.fft.fftfreq(n, 1.0 / sample_rate_hz)
    d_s_per_m = d.dispersion_ps_per_nm * 1e-3
    lam = d.center_wavelength_nm * 1e-9
    phase = np.pi * d_s_per_m * lam**2 * f**2 / SPEED_OF_LIGHT_M_S
    return np.exp(-1j * phase)


def propagate_cd(w: ComplexWaveform, d: DispersionSpec) -> ComplexWaveform:
    """Propagate through an ideal dispersive element (circular, energy preserving)."""
    if not np.all(np.isfinite(w.samples)):
        raise ValueError("waveform contains non-finite samples")
    if d.dispersion_ps_per_nm == 0.0:
        return w.with_samples(w.samples.copy())
    h = cd_frequency_response(len(w), w.sample_rate_hz, d)
    return w.with_samples(np.fft.ifft(np.fft.fft(w.samples) * h))


def cd_kernel(n: int, sample_rate_hz: float, d: DispersionSpec) -> np.ndarray:
    """Time-domain CD kernel discretised by inverse FFT of the frequency response."""
    return np.fft.ifft(cd_frequency_response(n, sample_rate_hz, d))


def toeplitz_propagate(w: ComplexWaveform, kernel: np.ndarray) -> ComplexWaveform:
    """O(N^2) circular Toeplitz matrix-vector propagation.

    Reference implementation used as a test oracle for the FFT path: the
    matrix rows are circular shifts of the kernel, b_i = sum_k H[i,k] a_k.
    """
    kernel = np.asarray(kernel, dtype=np.complex128)
    if kernel.size == 0:
        raise ValueError("kernel must be nonempty")
    n = len(w)
    if kernel.size > n:
        raise ValueError("kernel longer than waveform")
    padded = np.zeros(n, dtype=np.complex128)
    padded[: kernel.size] = kernel
    i = np.arange(n)
    matrix = padded[(i[:, None] - i[None, :]) % n]
    return w.with_samples(matrix @ w.samples)


def rrc_taps(rolloff: float, sps: int, span_symbols: int = 192) -> np.ndarray:
    """Root-raised-cosine taps over `span_symbols`, energy-normalised to sqrt(sps).

    The sqrt(sps) normalisation makes rrc_shape preserve mean power
    (unit-power symbols give a unit-power waveform) while the matched
    counterpart in matched_filter_downsample restores unit symbol gain.
    """
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must be in [0, 1]")
    if sps < 1:
        raise ValueError("sps must be >= 1")
    n = span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps
    b = rolloff
    h = np.empty(n)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - b + 4.0 * b / np.pi
        elif b > 0 and abs(abs(ti) - 1.0 / (4.0 * b)) < 1e-9:
            h[i] = (b / np.sqrt(2.0)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
            )
        else:
            h[i] = (
                np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))
            ) / (np.pi * ti * (1 - (4 * b * ti) ** 2))
    return h / np.linalg.norm(h) * np.sqrt(sps)


def circular_filter(samples: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Zero-delay circular convolution with a centred tap vector.

    Taps longer than the block wrap around it, which is the exact circular
    semantics for short blocks.
    """
    n = samples.size
    kernel = np.zeros(n, dtype=np.complex128)
    np.add.at(kernel, np.arange(taps.size) % n, taps)
    kernel = np.roll(kernel, -((taps.size - 1) // 2))
    return np.fft.ifft(np.fft.fft(samples) * np.fft.fft(kernel))


def rrc_shape(
    symbols: np.ndarray,
    rolloff: float,
    sps: int,
    sample_rate_hz: float | None = None,
    symbol_rate_baud: float | None = None,
    span_symbols: int = 192,
) -> ComplexWaveform:
    """Upsample symbols by `sps` and apply the root-raised-cosine shaping filter."""
    if sps < 1:
        raise ValueError("sps must be >= 1")
    symbols = np.asarray(symbols, dtype=np.complex128)
    if sample_rate_hz is None:
        if symbol_rate_baud is None:
            raise ValueError("need sample_rate_hz or symbol_rate_baud")
        sample_rate_hz = symbol_rate_baud * sps
    up = np.zeros(symbols.size * sps, dtype=np.complex128)
    up[::sps] = symbols
    taps = rrc_taps(rolloff, sps, span_symbols)
    return ComplexWaveform(circular_filter(up, taps), sample_rate_hz)


def matched_filter_downsample(
    w: ComplexWaveform, rolloff: float, sps: int, span_symbols: int = 192
) -> np.ndarray:
    """Matched-filter an RRC-shaped waveform and sample at the symbol centres."""
    taps = rrc_taps(rolloff, sps, span_symbols) / sps
    return circular_filter(w.samples, taps)[::sps]


def bandwidth_filter(w: ComplexWaveform, cutoff_hz: float) -> ComplexWaveform:
    """Ideal brick-wall low-pass; idempotent by construction."""
    if not 0 < cutoff_hz <= w.sample_rate_hz / 2:
        raise ValueError("cutoff must be in (0, sample_rate/2]")
    f = np.fft.fftfreq(len(w), 1.0 / w.sample_rate_hz)
    spec = np.fft.fft(w.samples)
    spec[np.abs(f) > cutoff_hz] = 0.0
    return w.with_samples(np.fft.ifft(spec))


def square_law(w: ComplexWaveform, branch_id: str = BRANCH_UNDISPERSED) -> IntensityTrace:
    """Photodiode square-law detection: per-sample |field|^2."""
    return IntensityTrace(np.abs(w.samples) ** 2, w.sample_rate_hz, branch_id)
