"""Declarative experiment configuration: YAML round-trip, strict validation
with field-path diagnostics, and content hashing for provenance checks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .channelsim import ChannelModel, IqImpairment, NonlinearCoeffs
from .fieldcore import DispersionSpec, FirResponse
from .trainer import GridSpec, TrainingConfig
from .reconstructor import PrConfig
from .txchain import FrameSpec


@dataclass
class FrameConfig:
    training_len: int = 8192
    guard_len: int = 64
    payload_block_len: int = 8192
    payload_repeats: int = 1
    pilot_ratio: float = 0.5
    premix_ps_per_nm: float = -3000.0
    symbol_rate_baud: float = 50e9
    rolloff: float = 0.01
    sps: int = 2
    center_wavelength_nm: float = 1541.02

    def to_frame_spec(self) -> FrameSpec:
        return FrameSpec(
            training_len=self.training_len,
            guard_len=self.guard_len,
            payload_block_len=self.payload_block_len,
            payload_repeats=self.payload_repeats,
            pilot_ratio=self.pilot_ratio,
            premix_dispersion=DispersionSpec(
                self.premix_ps_per_nm, self.center_wavelength_nm
            ),
            symbol_rate_baud=self.symbol_rate_baud,
            rolloff=self.rolloff,
            sps=self.sps,
        )


@dataclass
class FirConfig:
    taps_real: list[float] = field(default_factory=lambda: [1.0])
    taps_imag: list[float] = field(default_factory=lambda: [0.0])

    def to_fir(self, reference: str) -> FirResponse:
        re = np.asarray(self.taps_real, dtype=float)
        im = np.asarray(self.taps_imag, dtype=float)
        if im.size == 1 and re.size > 1:
            im = np.zeros_like(re)
        if re.size != im.size:
            raise ValueError("taps_real and taps_imag lengths differ")
        return FirResponse(re + 1j * im, reference)


@dataclass
class IqConfig:
    rho: float = 0.0
    tau_samples: float = 0.0
    phi_rad: float = 0.0


@dataclass
class NlConfig:
    c2_i: float = 0.0
    c3_i: float = 0.0
    c2_q: float = 0.0
    c3_q: float = 0.0
    amplitude_range: float = 2.5


@dataclass
class ChannelConfig:
    fiber_ps_per_nm: float = 0.0
    element_ps_per_nm: float = -1275.0
    element_loss_db: float = 3.0
    splitter_ratio: float = 0.7
    osnr_db: float | None = None
    enob: float | None = None
    thermal_noise_a_per_sqrt_hz: float = 0.0
    responsivity_a_per_w: float = 1.0
    rx_power_w: float = 5e-3
    dc_offset_b1: float = 0.0
    dc_offset_b2: float = 0.0
    tx_fir: FirConfig = field(default_factory=FirConfig)
    rx_fir_b1: FirConfig = field(default_factory=FirConfig)
    rx_fir_b2: FirConfig = field(default_factory=FirConfig)
    iq: IqConfig = field(default_factory=IqConfig)
    nl: NlConfig = field(default_factory=NlConfig)

    def to_channel_model(self, frame: FrameConfig) -> ChannelModel:
        fs = frame.symbol_rate_baud * frame.sps
        tx = self.tx_fir.to_fir("tx_I")
        return ChannelModel(
            tx_response_i=tx,
            tx_response_q=self.tx_fir.to_fir("tx_Q"),
            nl=NonlinearCoeffs(
                c2_i=self.nl.c2_i, c3_i=self.nl.c3_i,
                c2_q=self.nl.c2_q, c3_q=self.nl.c3_q,
                amplitude_range=self.nl.amplitude_range,
            ),
            iq=IqImpairment(
                rho=self.iq.rho,
                tau_s=self.iq.tau_samples / fs,
                phi_rad=self.iq.phi_rad,
            ),
            fiber=DispersionSpec(self.fiber_ps_per_nm, frame.center_wavelength_nm),
            splitter_ratio=self.splitter_ratio,
            element=DispersionSpec(self.element_ps_per_nm, frame.center_wavelength_nm),
            element_loss_db=self.element_loss_db,
            rx_response_b1=self.rx_fir_b1.to_fir("rx_branch1"),
            rx_response_b2=self.rx_fir_b2.to_fir("rx_branch2"),
            dc_offset_b1=self.dc_offset_b1,
            dc_offset_b2=self.dc_offset_b2,
            osnr_db=self.osnr_db,
            thermal_noise_a_per_sqrt_hz=self.thermal_noise_a_per_sqrt_hz,
            responsivity_a_per_w=self.responsivity_a_per_w,
            enob=self.enob,
            rx_power_w=self.rx_power_w,
        )


@dataclass
class TrainingSection:
    ffe_taps: int = 101
    tx_est_taps: int = 511
    tx_est_max_iters: int = 20
    refinement_loops: int = 0
    cd_search_span_ps_per_nm: float = 1000.0
    cd_search_step_ps_per_nm: float = 10.0
    grid_rounds: int = 3
    compensation: str = "full"

    def to_training_config(self) -> TrainingConfig:
        return TrainingConfig(
            ffe_taps=self.ffe_taps,
            tx_est_taps=self.tx_est_taps,
            tx_est_max_iters=self.tx_est_max_iters,
            refinement_loops=self.refinement_loops,
            cd_search_span_ps_per_nm=self.cd_search_span_ps_per_nm,
            cd_search_step_ps_per_nm=self.cd_search_step_ps_per_nm,
            grid_rounds=self.grid_rounds,
            compensation=self.compensation,
        )


@dataclass
class PrSection:
    max_iters: int = 60
    convergence_rel_change: float = 1e-3
    convergence_hold_iters: int = 10
    phase_reset_enabled: bool = False
    phase_reset_threshold: float = 0.5
    phase_reset_start_iteration: int = 20
    phase_reset_period: int = 10
    trace_schedule: str = "sequential"
    amplitude_step: float = 2.0
    mixing_weight: float = 0.5
    track_ber: bool = False

    def to_pr_config(self) -> PrConfig:
        return PrConfig(
            max_iters=self.max_iters,
            convergence_rel_change=self.convergence_rel_change,
            convergence_hold_iters=self.convergence_hold_iters,
            phase_reset_enabled=self.phase_reset_enabled,
            phase_reset_threshold=self.phase_reset_threshold,
            phase_reset_start_iteration=self.phase_reset_start_iteration,
            phase_reset_period=self.phase_reset_period,
            trace_schedule=self.trace_schedule,
            amplitude_step=self.amplitude_step,
            mixing_weight=self.mixing_weight,
            track_ber=self.track_ber,
        )


@dataclass
class SweepConfig:
    axis: str = "osnr"
    points: list[float] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    order: int = 16
    clip_ratio: float = 0.005
    frame: FrameConfig = field(default_factory=FrameConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    training: TrainingSection = field(default_factory=TrainingSection)
    pr: PrSection = field(default_factory=PrSection)
    sweep: SweepConfig | None = None
    seeds: list[int] = field(default_factory=lambda: [1])
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"{path}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        sub = _NESTED_TYPES.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{path}.{name}") if value is not None else None
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: {exc}") from exc


_NESTED_TYPES = {
    (ExperimentConfig, "frame"): FrameConfig,
    (ExperimentConfig, "channel"): ChannelConfig,
    (ExperimentConfig, "training"): TrainingSection,
    (ExperimentConfig, "pr"): PrSection,
    (ExperimentConfig, "sweep"): SweepConfig,
    (ChannelConfig, "tx_fir"): FirConfig,
    (ChannelConfig, "rx_fir_b1"): FirConfig,
    (ChannelConfig, "rx_fir_b2"): FirConfig,
    (ChannelConfig, "iq"): IqConfig,
    (ChannelConfig, "nl"): NlConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "config")
    if cfg.order not in (4, 16, 32):
        raise ValueError("config.order: must be 4, 16 or 32")
    try:
        cfg.frame.to_frame_spec()  # validate frame invariants eagerly
    except ValueError as exc:
        raise ValueError(f"config.frame: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data or {})


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
