"""Carrierless intensity-only optical link simulation with a distortion-aware
phase-retrieval receiver."""

__version__ = "0.1.0"

from .fieldcore import (
    ComplexWaveform,
    DispersionSpec,
    FirResponse,
    IntensityTrace,
    bandwidth_filter,
    propagate_cd,
    rrc_shape,
    square_law,
    toeplitz_propagate,
)
from .txchain import FrameSpec, QamConstellation, build_frame, qam_demap, qam_map
from .channelsim import ChannelModel, IqImpairment, NonlinearCoeffs, run_channel
from .trainer import ChannelEstimate, TrainingConfig, run_training
from .reconstructor import PrConfig, ReconstructionResult, reconstruct
from .evalkit import compute_ber, compute_gmi, estimate_net_rate, noise_floor_montecarlo
from .config import ExperimentConfig, load_config

__all__ = [
    "ComplexWaveform", "DispersionSpec", "FirResponse", "IntensityTrace",
    "bandwidth_filter", "propagate_cd", "rrc_shape", "square_law",
    "toeplitz_propagate", "FrameSpec", "QamConstellation", "build_frame",
    "qam_demap", "qam_map", "ChannelModel", "IqImpairment", "NonlinearCoeffs",
    "run_channel", "ChannelEstimate", "TrainingConfig", "run_training",
    "PrConfig", "ReconstructionResult", "reconstruct", "compute_ber",
    "compute_gmi", "estimate_net_rate", "noise_floor_montecarlo",
    "ExperimentConfig", "load_config",
]
