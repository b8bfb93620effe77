"""Transmit-side digital chain: QAM mapping, framing, premix, clip, DAC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fieldcore import ComplexWaveform, DispersionSpec, propagate_cd, rrc_shape

# Fixed sub-stream indices so every random role draws from its own generator.
RNG_ROLES = {
    "training": 11,
    "payload": 12,
    "pilots": 13,
    "ase": 21,
    "thermal_b1": 22,
    "thermal_b2": 23,
    "enob_dac": 24,
    "enob_adc_b1": 25,
    "enob_adc_b2": 26,
}


def derive_rng(master_seed: int, role: str) -> np.random.Generator:
    """Named random stream derived from the master seed; bit-reproducible."""
    return np.random.default_rng([RNG_ROLES[role], int(master_seed)])


def _gray_code(nbits: int) -> np.ndarray:
    idx = np.arange(2**nbits)
    return idx ^ (idx >> 1)


def _gray_levels(nbits: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude levels -(2^n - 1) .. (2^n - 1) and the Gray label per level."""
    m = 2**nbits
    levels = 2 * np.arange(m) - (m - 1)
    # level index i carries the Gray code of i, so adjacent levels differ by 1 bit
    return levels.astype(float), _gray_code(nbits)


@dataclass
class QamConstellation:
    """Unit-power Gray-labelled constellation for orders 4, 16 and 32."""

    order: int
    points: np.ndarray = field(init=False)
    bit_labels: np.ndarray = field(init=False)  # integer label per point

    def __post_init__(self):
        if self.order not in (4, 16, 32):
            raise ValueError("supported orders: 4, 16, 32")
        if self.order in (4, 16):
            pts, labels = _square_constellation(self.order)
        else:
            pts, labels = _cross32_constellation()
        scale = np.sqrt(np.mean(np.abs(pts) ** 2))
        self.points = pts / scale
        self.bit_labels = labels

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    def bits_of(self, point_indices: np.ndarray) -> np.ndarray:
        """Expand point indices into their label bits, MSB first."""
        m = self.bits_per_symbol
        labels = self.bit_labels[point_indices]
        shifts = np.arange(m - 1, -1, -1)
        return ((labels[:, None] >> shifts[None, :]) & 1).reshape(-1).astype(np.uint8)


def _square_constellation(order: int) -> tuple[np.ndarray, np.ndarray]:
    nbits_axis = int(np.log2(order)) // 2
    levels, gray = _gray_levels(nbits_axis)
    pts, labels = [], []
    for i_idx in range(levels.size):
        for q_idx in range(levels.size):
            pts.append(levels[i_idx] + 1j * levels[q_idx])
            labels.append((gray[i_idx] << nbits_axis) | gray[q_idx])
    return np.array(pts), np.array(labels)


def _cross32_constellation() -> tuple[np.ndarray, np.ndarray]:
    """Cross 32QAM built by folding a Gray-labelled 8x4 rectangle.

    The two outermost columns of the rectangle wrap onto the top/bottom arms
    of the 6x6 cross (corners removed). The per-axis Gray labels survive the
    fold except for a handful of unavoidable adjacencies, which is the usual
    quasi-Gray labelling for cross constellations.
    """
    i_levels, i_gray = _gray_levels(3)  # -7..7, 8 columns
    q_levels, q_gray = _gray_levels(2)  # -3..3, 4 rows
    pts, labels = [], []
    for ii in range(8):
        for qi in range(4):
            x, y = i_levels[ii], q_levels[qi]
            if abs(x) > 5:
                # fold the outer column around the corner onto the arm rows
                s, t = np.sign(x), np.sign(y) if y != 0 else 1.0
                x_f = s * (4 - abs(y))
                y_f = t * 5.0
                x, y = x_f, y_f
            pts.append(x + 1j * y)
            labels.append((i_gray[ii] << 2) | q_gray[qi])
    return np.array(pts), np.array(labels)


def qam_map(bits: np.ndarray, c: QamConstellation) -> np.ndarray:
    """Map a bit stream onto constellation points, MSB first per symbol."""
    bits = np.asarray(bits, dtype=np.uint8)
    m = c.bits_per_symbol
    if bits.size % m != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {m}")
    shifts = np.arange(m - 1, -1, -1)
    labels = (bits.reshape(-1, m) << shifts[None, :]).sum(axis=1)
    label_to_index = np.empty(c.order, dtype=np.int64)
    label_to_index[c.bit_labels] = np.arange(c.order)
    return c.points[label_to_index[labels]]


def qam_demap(symbols: np.ndarray, c: QamConstellation) -> np.ndarray:
    """Hard-decision demap to the nearest constellation point's label bits."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    idx = np.argmin(np.abs(symbols[:, None] - c.points[None, :]), axis=1)
    return c.bits_of(idx)


@dataclass
class FrameSpec:
    """Symbolic frame layout: guards, training, evenly pilot-seeded payload."""

    training_len: int = 8192
    guard_len: int = 64
    payload_block_len: int = 8192
    payload_repeats: int = 1
    pilot_ratio: float = 0.5
    premix_dispersion: DispersionSpec = field(default_factory=lambda: DispersionSpec(-3000.0))
    symbol_rate_baud: float = 50e9
    rolloff: float = 0.01
    sps: int = 2

    def __post_init__(self):
        if self.training_len < 1 or self.payload_block_len < 1 or self.payload_repeats < 1:
            raise ValueError("frame section lengths must be positive")
        if self.guard_len < 0 or self.guard_len > self.training_len:
            raise ValueError("guard_len must be in [0, training_len]")
        if not 0.0 <= self.pilot_ratio <= 0.5:
            raise ValueError("pilot_ratio must be in [0, 1/2]")
        if self.pilot_ratio > 0:
            k = round(1.0 / self.pilot_ratio)
            if abs(self.pilot_ratio - 1.0 / k) > 1e-9:
                raise ValueError("pilot_ratio must be a reciprocal integer 1/k")

    @property
    def payload_len(self) -> int:
        return self.payload_block_len * self.payload_repeats

    @property
    def frame_len(self) -> int:
        return 2 * self.guard_len + self.training_len + self.payload_len

    @property
    def payload_start(self) -> int:
        return 2 * self.guard_len + self.training_len

    @property
    def sample_rate_hz(self) -> float:
        return self.symbol_rate_baud * self.sps

    def pilot_mask_block(self) -> np.ndarray:
        """Pilot positions inside one payload block: every k-th symbol."""
        mask = np.zeros(self.payload_block_len, dtype=bool)
        if self.pilot_ratio > 0:
            k = round(1.0 / self.pilot_ratio)
            mask[::k] = True
        return mask

    def pilot_mask(self) -> np.ndarray:
        return np.tile(self.pilot_mask_block(), self.payload_repeats)


@dataclass
class FrameLayout:
    """Concrete frame realisation produced by build_frame."""

    spec: FrameSpec
    symbols: np.ndarray
    pilot_mask: np.ndarray
    training_symbols: np.ndarray
    payload_bits: np.ndarray

    @property
    def payload_symbols(self) -> np.ndarray:
        return self.symbols[self.spec.payload_start:]

    @property
    def data_symbols(self) -> np.ndarray:
        return self.payload_symbols[~self.pilot_mask]

    def known_symbol_mask(self) -> np.ndarray:
        """True at every receiver-known symbol: guards, training and pilots."""
        mask = np.ones(self.spec.frame_len, dtype=bool)
        mask[self.spec.payload_start:] = self.pilot_mask
        return mask


def build_frame(spec: FrameSpec, c: QamConstellation, seed: int) -> FrameLayout:
    """Assemble a frame from independent seeded training/payload/pilot streams.

    Training is pseudorandom QPSK; guards are its cyclic prefix/postfix; the
    payload block is pseudorandom QAM with every pilot position overwritten
    by pseudorandom QPSK, tiled `payload_repeats` times.
    """
    qpsk = QamConstellation(4)
    train_bits = derive_rng(seed, "training").integers(0, 2, spec.training_len * 2)
    training = qam_map(train_bits.astype(np.uint8), qpsk)

    mask_block = spec.pilot_mask_block()
    n_data = int(np.count_nonzero(~mask_block))
    data_bits = derive_rng(seed, "payload").integers(
        0, 2, n_data * c.bits_per_symbol
    ).astype(np.uint8)
    block = np.empty(spec.payload_block_len, dtype=np.complex128)
    block[~mask_block] = qam_map(data_bits, c)
    if mask_block.any():
        pilot_bits = derive_rng(seed, "pilots").integers(
            0, 2, int(mask_block.sum()) * 2
        ).astype(np.uint8)
        block[mask_block] = qam_map(pilot_bits, qpsk)

    payload = np.tile(block, spec.payload_repeats)
    g = spec.guard_len
    prefix = training[spec.training_len - g:] if g else training[:0]
    postfix = training[:g]
    symbols = np.concatenate([prefix, training, postfix, payload])
    return FrameLayout(
        spec=spec,
        symbols=symbols,
        pilot_mask=spec.pilot_mask(),
        training_symbols=training,
        payload_bits=np.tile(data_bits, spec.payload_repeats),
    )


def shape_frame(layout: FrameLayout) -> ComplexWaveform:
    """RRC-shape the whole frame as one circular block."""
    spec = layout.spec
    return rrc_shape(
        layout.symbols, spec.rolloff, spec.sps, sample_rate_hz=spec.sample_rate_hz
    )


def premix(w: ComplexWaveform, spec: FrameSpec) -> ComplexWaveform:
    """Apply the digital chromatic-dispersion premix of the frame spec."""
    return propagate_cd(w, spec.premix_dispersion)


def clip(w: ComplexWaveform, ratio: float) -> ComplexWaveform:
    """Hard-limit I and Q independently so `ratio` of samples per rail clip.

    The limit level is the empirical quantile: with m = ceil(ratio * N),
    exactly the m largest-magnitude samples per rail end at the limit.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError("clip ratio must be in [0, 1)")
    if ratio == 0.0:
        return w.with_samples(w.samples.copy())
    n = len(w)
    m = int(np.ceil(ratio * n))

    def clip_rail(x: np.ndarray) -> np.ndarray:
        level = np.partition(np.abs(x), n - m)[n - m]
        return np.clip(x, -level, level)

    return w.with_samples(clip_rail(w.samples.real) + 1j * clip_rail(w.samples.imag))


def quantization_noise_sigma(full_scale_amp: float, enob: float) -> float:
    """Noise sigma giving SNR = 6.02*enob + 1.76 dB vs the full-scale sine power."""
    snr_db = 6.02 * enob + 1.76
    sine_power = full_scale_amp**2 / 2.0
    return np.sqrt(sine_power / 10.0 ** (snr_db / 10.0))


def dac_model(
    w: ComplexWaveform, enob: float | None, rng: np.random.Generator
) -> ComplexWaveform:
    """Converter model: per-rail Gaussian noise at the ENOB-equivalent SNR.

    `enob=None` (or inf) disables the converter entirely.
    """
    if enob is None or not np.isfinite(enob):
        return w.with_samples(w.samples.copy())
    if enob <= 0:
        raise ValueError("enob must be positive")
    out = w.samples.copy()
    for rail_get, imag in ((np.real, False), (np.imag, True)):
        x = rail_get(w.samples)
        sigma = quantization_noise_sigma(float(np.max(np.abs(x))), enob)
        noise = rng.normal(0.0, sigma, x.size)
        out = out + (1j * noise if imag else noise)
    return w.with_samples(out)


def quantize_trace(
    samples: np.ndarray, enob: float | None, rng: np.random.Generator
) -> np.ndarray:
    """ADC counterpart of dac_model for a real intensity trace."""
    if enob is None or not np.isfinite(enob):
        return samples.copy()
    if enob <= 0:
        raise ValueError("enob must be positive")
    sigma = quantization_noise_sigma(float(np.max(np.abs(samples))), enob)
    return samples + rng.normal(0.0, sigma, samples.size)
