"""Filtered subtractive dithered quantization toolkit."""

__version__ = "0.1.0"

from .quantizer import QuantizerSpec, quantize, quantize_array, subtractive_error
from .dither import (FirFilter, G1, G2, BernoulliSource, DitherStream, make_dither,
                     dither_lsb, dither_range, analytic_dither_psd)
from .conditions import ConditionReport, mod_L, theorem1_check, theorem2_check
from .cf import joint_cf_mag, marginal_cf_mag, whiteness_gate
from .oracle import exact_dither_pmf, exact_dither_joint_pmf, exact_error_pmf
from .sim import PipelineConfig, SignalSpec, compare, run, preset_config

__all__ = [
    "BernoulliSource", "ConditionReport", "DitherStream", "FirFilter", "G1", "G2",
    "PipelineConfig", "QuantizerSpec", "SignalSpec", "analytic_dither_psd", "compare",
    "dither_lsb", "dither_range", "exact_dither_joint_pmf", "exact_dither_pmf",
    "exact_error_pmf", "joint_cf_mag", "make_dither", "marginal_cf_mag", "mod_L", "quantize",
    "quantize_array", "run", "preset_config", "subtractive_error", "theorem1_check",
    "theorem2_check", "whiteness_gate",
]
