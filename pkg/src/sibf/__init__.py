"""Similarity-and-independence-aware beamformer (SIBF) toolkit.

Multichannel target sound extraction guided by a magnitude-spectrogram
reference, in batch and per-frame (windowed / FIFO / RLS) forms, with
minimal-distortion and single-channel-Wiener output scaling, baseline
extractors, synthetic scenario generation, and evaluation utilities.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .core import (BatchExtractResult, BatchFilterResult, PerFrameResult,
                   SibfConfig, apply_filter, estimate_filter_batch,
                   evaluate_objective, extract_batch, normalize_reference,
                   run_per_frame)
from .models import SourceModel
from .stft import StftConfig, band_limit, combine_magnitude_phase, istft, stft, stft_multi
from .synth import OracleBundle, ScenarioSpec, generate_scenario, make_reference

__version__ = "0.1.0"

__all__ = [
    "BatchExtractResult", "BatchFilterResult", "KERNEL_BACKEND",
    "OracleBundle", "PerFrameResult", "ScenarioSpec", "SibfConfig",
    "SourceModel", "StftConfig", "apply_filter", "band_limit",
    "combine_magnitude_phase", "estimate_filter_batch", "evaluate_objective",
    "extract_batch", "generate_scenario", "istft", "make_reference",
    "normalize_reference", "run_per_frame", "stft", "stft_multi",
]
