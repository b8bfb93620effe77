"""Metrics and experiment harnesses: BER, GMI, net-rate bookkeeping, the
noise-floor Monte Carlo validator and the sweep runner."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .txchain import QamConstellation

# Pre-FEC BER admissibility per LDPC rate. Rate 1 uses the 6.25% HD-FEC
# threshold and 3/4 the 25% SD-FEC threshold; the remaining entries are a
# declared modelling table interpolated on the Gaussian-channel rate curve
# (real decoding is out of scope for this simulator).
LDPC_RATE_THRESHOLDS: dict[float, float] = {
    1.0: 4.7e-3,
    9.0 / 10.0: 1.5e-2,
    5.0 / 6.0: 2.5e-2,
    3.0 / 4.0: 4.0e-2,
    2.0 / 3.0: 5.5e-2,
}
OUTER_CODE_OVERHEAD = 1.0625


def compute_ber(
    recovered: np.ndarray, truth_bits: np.ndarray, c: QamConstellation
) -> float:
    """Hard-decision bit error rate of a recovered symbol stream."""
    recovered = np.asarray(recovered, dtype=np.complex128)
    truth_bits = np.asarray(truth_bits, dtype=np.uint8)
    if recovered.size * c.bits_per_symbol != truth_bits.size:
        raise ValueError("recovered symbols and truth bits disagree in length")
    idx = np.argmin(np.abs(recovered[:, None] - c.points[None, :]), axis=1)
    bits = c.bits_of(idx)
    return float(np.mean(bits != truth_bits))


def _bit_sets(c: QamConstellation) -> np.ndarray:
    """bit_value[b, k] of constellation point k for bit position b (MSB first)."""
    m = c.bits_per_symbol
    shifts = np.arange(m - 1, -1, -1)
    return ((c.bit_labels[None, :] >> shifts[:, None]) & 1).astype(bool)


def compute_gmi(
    recovered: np.ndarray, truth_bits: np.ndarray, c: QamConstellation
) -> float:
    """Generalised mutual information under a pooled-variance AWGN assumption.

    Per-bit LLRs come from Gaussian likelihoods with the noise variance
    estimated from the recovered cloud around the transmitted points;
    GMI = m - mean_b log2(1 + exp(+-LLR)).
    """
    recovered = np.asarray(recovered, dtype=np.complex128)
    truth_bits = np.asarray(truth_bits, dtype=np.uint8)
    m = c.bits_per_symbol
    if recovered.size * m != truth_bits.size:
        raise ValueError("recovered symbols and truth bits disagree in length")
    if recovered.size == 0:
        raise ValueError("empty symbol stream")

    tx_idx = np.argmin(
        np.abs(_bits_to_points(truth_bits, c)[:, None] - c.points[None, :]), axis=1
    )
    residual = recovered - c.points[tx_idx]
    sigma2 = float(np.mean(np.abs(residual) ** 2))
    sigma2 = max(sigma2, 1e-10 * float(np.mean(np.abs(c.points) ** 2)))

    # log-likelihood of each candidate point per received symbol
    loglik = -np.abs(recovered[:, None] - c.points[None, :]) ** 2 / sigma2
    bit_is_one = _bit_sets(c)

    bits = truth_bits.reshape(-1, m)
    total = 0.0
    for b in range(m):
        one = logsumexp(loglik[:, bit_is_one[b]], axis=1)
        zero = logsumexp(loglik[:, ~bit_is_one[b]], axis=1)
        llr = one - zero
        sign = 1.0 - 2.0 * bits[:, b].astype(float)  # +1 for bit 0, -1 for bit 1
        total += float(np.mean(np.logaddexp(0.0, sign * llr)) / np.log(2.0))
    return m - total


def _bits_to_points(bits: np.ndarray, c: QamConstellation) -> np.ndarray:
    from .txchain import qam_map

    return qam_map(bits, c)


def estimate_net_rate(
    pre_fec_ber_per_code_rate: dict[float, float],
    pilot_ratio: float,
    symbol_rate: float,
    order: int,
) -> float:
    """Net bit rate from the FEC-threshold rule over the candidate LDPC rates.

    net = baud * log2(M) * (1 - pilot_ratio) * r / 1.0625 for the highest
    rate whose pre-FEC BER clears its admissibility threshold; 0 if none do.
    """
    best = 0.0
    for rate, ber in pre_fec_ber_per_code_rate.items():
        if rate not in LDPC_RATE_THRESHOLDS:
            raise ValueError(f"unknown LDPC rate {rate}")
        if ber < LDPC_RATE_THRESHOLDS[rate]:
            net = (
                symbol_rate * np.log2(order) * (1.0 - pilot_ratio) * rate
                / OUTER_CODE_OVERHEAD
            )
            best = max(best, net)
    return best


def net_rate_from_ber(
    pre_fec_ber: float, pilot_ratio: float, symbol_rate: float, order: int
) -> tuple[float, float]:
    """Convenience wrapper: one measured BER tried against every LDPC rate."""
    table = {rate: pre_fec_ber for rate in LDPC_RATE_THRESHOLDS}
    net = estimate_net_rate(table, pilot_ratio, symbol_rate, order)
    admissible = [r for r, t in LDPC_RATE_THRESHOLDS.items() if pre_fec_ber < t]
    return net, (max(admissible) if admissible else 0.0)


def intensity_papr_db(samples: np.ndarray) -> float:
    """Electrical PAPR of an intensity waveform: peak^2 over mean square."""
    x = np.asarray(samples, dtype=float)
    return float(10.0 * np.log10(np.max(x) ** 2 / np.mean(x**2)))


def noise_floor_montecarlo(
    n0_var: float,
    w0_var: float,
    n_samples: int,
    kernel: np.ndarray,
    seed: int = 0,
) -> float:
    """Monte Carlo of the stationary amplitude-error floor under noisy
    amplitude measurements.

    Random fields propagate through a unit-row-energy circular kernel; the
    squared residual between the noisy measured amplitude and the propagated
    noisy estimate is evaluated at the true phase. The empirical mean tends
    to w0_var + n0_var.
    """
    kernel = np.asarray(kernel, dtype=np.complex128)
    row_energy = float(np.sum(np.abs(kernel) ** 2))
    if abs(row_energy - 1.0) > 1e-6:
        raise ValueError("kernel rows must have unit energy")
    rng = np.random.default_rng(seed)
    block = 1 << 14
    kf = np.fft.fft(kernel, block)
    total, count = 0.0, 0
    while count < n_samples:
        amp = np.abs(rng.standard_normal(block) + 1j * rng.standard_normal(block)) / np.sqrt(2)
        theta = rng.uniform(-np.pi, np.pi, block)
        field = amp * np.exp(1j * theta)
        noisy = (amp + rng.normal(0.0, np.sqrt(n0_var), block)) * np.exp(1j * theta)
        prop_true = np.fft.ifft(np.fft.fft(field) * kf)
        prop_noisy = np.fft.ifft(np.fft.fft(noisy) * kf)
        b_meas = np.abs(prop_true) + rng.normal(0.0, np.sqrt(w0_var), block)
        residual = b_meas * np.exp(1j * np.angle(prop_true)) - prop_noisy
        total += float(np.sum(np.abs(residual) ** 2))
        count += block
    return total / count


@dataclass
class SweepPoint:
    axis_value: float
    seed: int
    config_hash: str
    pre_fec_ber: float
    gmi_bits_per_symbol: float
    iterations_used: int
    converged: bool
    net_rate_bps: float
    code_rate: float
    error: str = ""


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    points: list[SweepPoint] = field(default_factory=list)

    def mean_over_seeds(self, metric: str) -> dict[float, float]:
        out: dict[float, float] = {}
        for v in self.values:
            vals = [
                getattr(p, metric) for p in self.points
                if p.axis_value == v and not p.error
            ]
            out[v] = float(np.mean(vals)) if vals else float("nan")
        return out


SWEEP_AXES = ("osnr", "pilot_ratio", "iterations", "phase_reset_threshold")


def run_sweep(axis, base_config, points, seeds, threads: int = 1) -> SweepResult:
    """Run the full pipeline per (axis point, seed) and collect the metrics.

    Per-point failures are recorded on the row and the sweep continues. The
    `iterations` axis is special-cased: one run at the largest checkpoint
    captures the BER-versus-iteration curve for all the checkpoints.
    """
    from . import pipeline  # deferred to avoid an import cycle

    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; pick one of {SWEEP_AXES}")
    result = SweepResult(axis=axis, values=[float(v) for v in points])

    jobs = []
    if axis == "iterations":
        for seed in seeds:
            jobs.append((max(points), seed))
    else:
        for value in points:
            for seed in seeds:
                jobs.append((value, seed))

    def execute(job):
        value, seed = job
        cfg = pipeline.apply_axis(base_config, axis, value)
        return pipeline.run_experiment(cfg, seed)

    outputs = []
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(execute, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    outputs.append((job, fut.result(), ""))
                except Exception as exc:  # pragma: no cover - depends on runtime env
                    outputs.append((job, None, str(exc)))
    else:
        for job in jobs:
            try:
                outputs.append((job, execute(job), ""))
            except Exception as exc:
                warnings.warn(f"sweep point {job} failed: {exc}", RuntimeWarning)
                outputs.append((job, None, str(exc)))

    for (value, seed), outcome, err in outputs:
        if outcome is None:
            result.points.append(
                SweepPoint(float(value), seed, "", float("nan"), float("nan"),
                           0, False, 0.0, 0.0, error=err)
            )
            continue
        if axis == "iterations":
            curve = outcome.result.per_iteration_ber or []
            for checkpoint in points:
                k = min(int(checkpoint), len(curve)) - 1
                ber = curve[k] if 0 <= k < len(curve) else float("nan")
                net, rate = net_rate_from_ber(
                    ber, outcome.config.frame.pilot_ratio,
                    outcome.config.frame.symbol_rate_baud, outcome.config.order,
                )
                result.points.append(
                    SweepPoint(float(checkpoint), seed, outcome.config_hash, ber,
                               outcome.gmi, int(checkpoint), outcome.result.converged,
                               net, rate)
                )
        else:
            result.points.append(
                SweepPoint(float(value), seed, outcome.config_hash, outcome.ber,
                           outcome.gmi, outcome.result.iterations_used,
                           outcome.result.converged, outcome.net_rate_bps,
                           outcome.code_rate)
            )
    return result
