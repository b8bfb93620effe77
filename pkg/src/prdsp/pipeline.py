"""End-to-end experiment execution: transmit, channel, training, recovery."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .channelsim import run_channel
from .config import ExperimentConfig
from .evalkit import compute_ber, compute_gmi, net_rate_from_ber
from .fieldcore import ComplexWaveform, IntensityTrace
from .reconstructor import ReconstructionResult, reconstruct
from .trainer import ChannelEstimate, run_training
from .txchain import (
    FrameLayout,
    QamConstellation,
    build_frame,
    clip,
    dac_model,
    derive_rng,
    premix,
    shape_frame,
)


@dataclass
class ExperimentOutcome:
    config: ExperimentConfig
    config_hash: str
    seed: int
    layout: FrameLayout
    estimate: ChannelEstimate
    result: ReconstructionResult
    ber: float
    gmi: float
    net_rate_bps: float
    code_rate: float


def build_layout(config: ExperimentConfig, seed: int) -> FrameLayout:
    spec = config.frame.to_frame_spec()
    return build_frame(spec, QamConstellation(config.order), seed)


def transmit(config: ExperimentConfig, layout: FrameLayout, seed: int) -> ComplexWaveform:
    """Tx DSP: pulse shaping, dispersion premix, clipping, DAC."""
    w = shape_frame(layout)
    w = premix(w, layout.spec)
    w = clip(w, config.clip_ratio)
    return dac_model(w, config.channel.enob, derive_rng(seed, "enob_dac"))


def simulate(
    config: ExperimentConfig, seed: int
) -> tuple[FrameLayout, ComplexWaveform, tuple[IntensityTrace, IntensityTrace]]:
    layout = build_layout(config, seed)
    tx = transmit(config, layout, seed)
    model = config.channel.to_channel_model(config.frame)
    traces = run_channel(tx, model, seed)
    return layout, tx, traces


def train(
    config: ExperimentConfig,
    traces: tuple[IntensityTrace, IntensityTrace],
    layout: FrameLayout,
) -> ChannelEstimate:
    return run_training(traces, layout, config.training.to_training_config())


def recover(
    config: ExperimentConfig,
    traces: tuple[IntensityTrace, IntensityTrace],
    layout: FrameLayout,
    estimate: ChannelEstimate,
) -> tuple[ReconstructionResult, float, float]:
    constellation = QamConstellation(config.order)
    result = reconstruct(
        traces, estimate, layout, config.pr.to_pr_config(),
        constellation=constellation, truth_bits=layout.payload_bits,
    )
    ber = compute_ber(result.recovered_symbols, layout.payload_bits, constellation)
    gmi = compute_gmi(result.recovered_symbols, layout.payload_bits, constellation)
    return result, ber, gmi


def run_experiment(config: ExperimentConfig, seed: int) -> ExperimentOutcome:
    """Simulate, train and reconstruct one frame with one master seed."""
    layout, _, traces = simulate(config, seed)
    estimate = train(config, traces, layout)
    result, ber, gmi = recover(config, traces, layout, estimate)
    net, rate = net_rate_from_ber(
        ber, config.frame.pilot_ratio, config.frame.symbol_rate_baud, config.order
    )
    return ExperimentOutcome(
        config=config,
        config_hash=config.config_hash(),
        seed=seed,
        layout=layout,
        estimate=estimate,
        result=result,
        ber=ber,
        gmi=gmi,
        net_rate_bps=net,
        code_rate=rate,
    )


def apply_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Return a copy of the config with one sweep axis applied."""
    cfg = copy.deepcopy(config)
    if axis == "osnr":
        cfg.channel.osnr_db = float(value)
    elif axis == "pilot_ratio":
        cfg.frame.pilot_ratio = float(value)
    elif axis == "iterations":
        cfg.pr.max_iters = int(value)
        cfg.pr.track_ber = True
        # capture the whole curve instead of stopping at full convergence
        cfg.pr.convergence_rel_change = 1e-30
    elif axis == "phase_reset_threshold":
        cfg.pr.phase_reset_enabled = True
        cfg.pr.phase_reset_threshold = float(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    return cfg
