"""Independent oracles and shared builders for the test suite.

Oracles here are deliberately implemented with different algorithms than the
library paths they check (direct convolution sums, quadrature integration,
closed-form error rates).
"""

import numpy as np
from scipy.special import erfc

from prdsp.config import ExperimentConfig


def direct_circular_convolution(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """O(N*T) centred circular convolution by explicit summation."""
    n = x.size
    half = (taps.size - 1) // 2
    out = np.zeros(n, dtype=complex)
    for i in range(n):
        for m, tap in enumerate(taps):
            out[i] += tap * x[(i - (m - half)) % n]
    return out


def qpsk_ber_awgn(snr_bit_db: float) -> float:
    """Closed-form QPSK bit error rate over AWGN."""
    snr_bit = 10 ** (snr_bit_db / 10)
    return 0.5 * erfc(np.sqrt(snr_bit))


def gmi_awgn_quadrature(points: np.ndarray, labels: np.ndarray, snr_db: float,
                        n_nodes: int = 24) -> float:
    """AWGN GMI by Gauss-Hermite quadrature over the 2-D noise density."""
    m = int(np.log2(points.size))
    es = np.mean(np.abs(points) ** 2)
    sigma2 = es / 10 ** (snr_db / 10)
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    # substitution n = sigma * sqrt(2) * t per real dimension
    scale = np.sqrt(sigma2)
    total = 0.0
    shifts = np.arange(m - 1, -1, -1)
    bits_of = ((labels[:, None] >> shifts[None, :]) & 1).astype(bool)  # (M, m)
    for k, s in enumerate(points):
        for wi, ti in zip(weights, nodes):
            for wq, tq in zip(weights, nodes):
                r = s + scale * (ti + 1j * tq)  # noise std sigma/sqrt(2) per rail * sqrt2
                d2 = np.abs(r - points) ** 2
                loglik = -d2 / sigma2
                loglik -= loglik.max()
                lik = np.exp(loglik)
                denom = lik.sum()
                contrib = 0.0
                for b in range(m):
                    num = lik[bits_of[:, b] == bits_of[k, b]].sum()
                    contrib += np.log2(num / denom)
                total += wi * wq * contrib
    total /= np.pi * points.size
    return m + total


def benchmark_config(order: int = 16, osnr_db: float | None = 35.0,
                     training_len: int = 2048, payload_len: int = 2048,
                     enob: float | None = 8.0) -> ExperimentConfig:
    """The synthetic full-impairment channel used across integration tests."""
    cfg = ExperimentConfig(order=order)
    cfg.frame.training_len = training_len
    cfg.frame.payload_block_len = payload_len
    cfg.channel.fiber_ps_per_nm = 680.0  # 40 km SSMF
    cfg.channel.osnr_db = osnr_db
    cfg.channel.enob = enob
    cfg.channel.thermal_noise_a_per_sqrt_hz = 10e-12
    ripple_r = np.array([0.012, -0.02, 0.03, -0.04, 0.05, -0.07, 0.10, 0.0,
                         0.09, -0.06, 0.05, -0.03, 0.02, -0.015, 0.01]) * 2.5
    ripple_i = np.array([-0.008, 0.01, -0.02, 0.02, -0.04, 0.05, -0.06, 0.0,
                         0.07, -0.05, 0.03, -0.02, 0.015, -0.01, 0.008]) * 2.5
    ripple_r[7] = 1.0
    cfg.channel.tx_fir.taps_real = ripple_r.tolist()
    cfg.channel.tx_fir.taps_imag = ripple_i.tolist()
    cfg.channel.rx_fir_b1.taps_real = [0.15, 1.0, 0.15]
    cfg.channel.rx_fir_b2.taps_real = [0.1, 1.0, 0.2]
    cfg.channel.iq.rho = 0.1
    cfg.channel.iq.tau_samples = 0.1
    cfg.channel.iq.phi_rad = 0.05
    cfg.channel.nl.c2_i = 0.05
    cfg.channel.nl.c3_i = -0.03
    cfg.channel.nl.c2_q = 0.05
    cfg.channel.nl.c3_q = -0.03
    cfg.channel.dc_offset_b1 = 3e-4
    cfg.channel.dc_offset_b2 = 2e-4
    return cfg


def loopback_config(order: int = 4, training_len: int = 2048,
                    payload_len: int = 2048) -> ExperimentConfig:
    """Identity channel: dispersion structure only, no distortion or noise."""
    cfg = ExperimentConfig(order=order)
    cfg.frame.training_len = training_len
    cfg.frame.payload_block_len = payload_len
    cfg.channel.fiber_ps_per_nm = 680.0
    cfg.training.compensation = "none"
    cfg.pr.max_iters = 40
    return cfg
