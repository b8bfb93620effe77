"""File formats: binary waveform/trace containers with a 64-byte header,
JSON channel estimates, CSV result tables and the output-directory manifest.

Binary layout (little endian): magic 8s, version u32, kind u32 (0 = complex
float64 pairs, 1 = real float64), sample_rate f64, length u64, branch u32,
zero padding to 64 bytes, then the float64 payload.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .channelsim import IqImpairment, NonlinearCoeffs
from .fieldcore import (
    BRANCH_DISPERSED,
    BRANCH_UNDISPERSED,
    ComplexWaveform,
    DispersionSpec,
    FirResponse,
    IntensityTrace,
)
from .trainer import ChannelEstimate

MAGIC = b"PRDSPWAV"
VERSION = 1
_HEADER = struct.Struct("<8sIIdQI")
_KIND_COMPLEX = 0
_KIND_REAL = 1
_BRANCHES = {BRANCH_DISPERSED: 0, BRANCH_UNDISPERSED: 1, "": 2}
_BRANCH_NAMES = {v: k for k, v in _BRANCHES.items()}


def _write_blob(path: Path, kind: int, sample_rate: float, branch: int, payload: np.ndarray):
    header = _HEADER.pack(MAGIC, VERSION, kind, sample_rate, payload.size, branch)
    header = header.ljust(64, b"\0")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<f8").tobytes())


def _read_header(fh) -> tuple[int, float, int, int]:
    raw = fh.read(64)
    magic, version, kind, rate, length, branch = _HEADER.unpack(raw[: _HEADER.size])
    if magic != MAGIC:
        raise ValueError("not a prdsp waveform file")
    if version != VERSION:
        raise ValueError(f"unsupported file version {version}")
    return kind, rate, length, branch


def write_waveform(path: str | Path, w: ComplexWaveform) -> None:
    payload = np.empty(2 * len(w))
    payload[0::2] = w.samples.real
    payload[1::2] = w.samples.imag
    _write_blob(Path(path), _KIND_COMPLEX, w.sample_rate_hz, _BRANCHES[""], payload)


def read_waveform(path: str | Path) -> ComplexWaveform:
    with open(path, "rb") as fh:
        kind, rate, length, _ = _read_header(fh)
        if kind != _KIND_COMPLEX:
            raise ValueError("file holds an intensity trace, not a waveform")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != length:
        raise ValueError("truncated waveform file")
    return ComplexWaveform(payload[0::2] + 1j * payload[1::2], rate)


def write_trace(path: str | Path, t: IntensityTrace) -> None:
    _write_blob(
        Path(path), _KIND_REAL, t.sample_rate_hz, _BRANCHES[t.branch_id],
        t.samples.astype(float),
    )


def read_trace(path: str | Path) -> IntensityTrace:
    with open(path, "rb") as fh:
        kind, rate, length, branch = _read_header(fh)
        if kind != _KIND_REAL:
            raise ValueError("file holds a complex waveform, not a trace")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != length:
        raise ValueError("truncated trace file")
    return IntensityTrace(payload.copy(), rate, _BRANCH_NAMES[branch])


def _fir_to_dict(fir: FirResponse) -> dict:
    return {
        "reference": fir.reference,
        "taps_real": fir.taps.real.tolist(),
        "taps_imag": fir.taps.imag.tolist(),
    }


def _fir_from_dict(d: dict) -> FirResponse:
    return FirResponse(
        np.asarray(d["taps_real"]) + 1j * np.asarray(d["taps_imag"]), d["reference"]
    )


def estimate_to_dict(est: ChannelEstimate) -> dict:
    return {
        "cd_b1_ps_per_nm": est.cd_b1.dispersion_ps_per_nm,
        "cd_b2_ps_per_nm": est.cd_b2.dispersion_ps_per_nm,
        "center_wavelength_nm": est.cd_b1.center_wavelength_nm,
        "lag_b1": est.lag_b1,
        "lag_b2": est.lag_b2,
        "dc_b1": est.dc_b1,
        "dc_b2": est.dc_b2,
        "rx_ffe_b1": _fir_to_dict(est.rx_ffe_b1),
        "rx_ffe_b2": _fir_to_dict(est.rx_ffe_b2),
        "tx_response": _fir_to_dict(est.tx_response),
        "iq": {"rho": est.iq.rho, "tau_s": est.iq.tau_s, "phi_rad": est.iq.phi_rad},
        "reverse_iq": {
            "rho": -est.iq.rho, "tau_s": -est.iq.tau_s, "phi_rad": -est.iq.phi_rad,
        },
        "nl": {
            "c2_i": est.nl.c2_i, "c3_i": est.nl.c3_i,
            "c2_q": est.nl.c2_q, "c3_q": est.nl.c3_q,
            "amplitude_range": est.nl.amplitude_range,
        },
        "diagnostics": est.diagnostics,
    }


def save_channel_estimate(path: str | Path, est: ChannelEstimate) -> None:
    with open(path, "w") as fh:
        json.dump(estimate_to_dict(est), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_channel_estimate(path: str | Path) -> ChannelEstimate:
    with open(path) as fh:
        d = json.load(fh)
    wl = d["center_wavelength_nm"]
    return ChannelEstimate(
        cd_b1=DispersionSpec(d["cd_b1_ps_per_nm"], wl),
        cd_b2=DispersionSpec(d["cd_b2_ps_per_nm"], wl),
        lag_b1=int(d["lag_b1"]),
        lag_b2=int(d["lag_b2"]),
        rx_ffe_b1=_fir_from_dict(d["rx_ffe_b1"]),
        rx_ffe_b2=_fir_from_dict(d["rx_ffe_b2"]),
        dc_b1=d["dc_b1"],
        dc_b2=d["dc_b2"],
        tx_response=_fir_from_dict(d["tx_response"]),
        iq=IqImpairment(**d["iq"]),
        nl=NonlinearCoeffs(**d["nl"]),
        diagnostics=d.get("diagnostics", {}),
    )


def write_training_report(path: str | Path, est: ChannelEstimate) -> None:
    """Human-readable training summary: parameters and per-stage errors."""
    lines = ["channel training report", "=" * 40]
    lines.append(f"dispersion branch 1: {est.cd_b1.dispersion_ps_per_nm:.1f} ps/nm (lag {est.lag_b1})")
    lines.append(f"dispersion branch 2: {est.cd_b2.dispersion_ps_per_nm:.1f} ps/nm (lag {est.lag_b2})")
    lines.append(f"dc offsets: b1={est.dc_b1:.6f} b2={est.dc_b2:.6f}")
    lines.append(
        "iq: rho=%.4f tau=%.4e s phi=%.4f rad" % (est.iq.rho, est.iq.tau_s, est.iq.phi_rad)
    )
    lines.append(
        "nl: c2_i=%.4f c3_i=%.4f c2_q=%.4f c3_q=%.4f"
        % (est.nl.c2_i, est.nl.c3_i, est.nl.c2_q, est.nl.c3_q)
    )
    for snap in est.diagnostics.get("loops", []):
        lines.append(f"-- refinement loop {snap['loop']} --")
        maes = snap.get("tx_response_maes", [])
        if maes:
            lines.append(
                "   tx-estimator MAE: start=%.4e best=%.4e iters=%d"
                % (maes[0], min(maes), len(maes))
            )
        for b, diag in snap.get("ffe", {}).items():
            lines.append(
                "   branch %s FFE intensity MAE: %.4e -> %.4e"
                % (b, diag["pre_mae"], diag["post_mae"])
            )
        for b, snr in snap.get("intensity_snr_db", {}).items():
            lines.append("   branch %s emulated intensity SNR: %.2f dB" % (b, snr))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    return (rows[0], rows[1:]) if rows else ([], [])


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    directory: str | Path, config_hash: str, seeds: list[int],
    files: list[str], extra: dict | None = None,
) -> None:
    directory = Path(directory)
    manifest = {
        "config_hash": config_hash,
        "seeds": list(seeds),
        "format_version": VERSION,
        "files": {name: file_sha256(directory / name) for name in sorted(files)},
    }
    if extra:
        manifest.update(extra)
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(directory: str | Path) -> dict:
    with open(Path(directory) / "manifest.json") as fh:
        return json.load(fh)


def check_manifest_hash(directory: str | Path, config_hash: str) -> None:
    manifest = read_manifest(directory)
    if manifest["config_hash"] != config_hash:
        raise ValueError(
            f"config hash mismatch: directory was produced with "
            f"{manifest['config_hash']}, current config is {config_hash}"
        )
