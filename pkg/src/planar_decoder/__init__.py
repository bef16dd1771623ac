"""Exact maximum-likelihood decoding of repetition codes under circuit noise.

The decoder maps each logical coset's probability to the partition function of
a planar zero-field Ising model and evaluates it with the Kac-Ward determinant.
"""

__version__ = "0.1.0"

from .analysis import ExperimentReport, ReportRow, estimate_threshold, fit_lambda, per_round_rate
from .calibration import correct_boundaries, estimate_pij
from .circuit import NoiseSpec, attach_noise, build_repetition_circuit, extract_dem, repetition_dem, sample_syndromes
from .decoder import DecodeContext, build_context, coset_log_prob, decode, decode_batch
from .dem import DetectorErrorModel, ErrorMechanism, SyndromeBatch, parse_dem, write_dem
from .ising import PlanarEmbeddedGraph, SpinGlassInstance, log_partition
from .matching import MwpmDecoder, decode_mwpm

__all__ = [
    "DecodeContext", "DetectorErrorModel", "ErrorMechanism", "ExperimentReport", "MwpmDecoder",
    "NoiseSpec", "PlanarEmbeddedGraph", "ReportRow", "SpinGlassInstance", "SyndromeBatch",
    "attach_noise", "build_context", "build_repetition_circuit", "correct_boundaries", "coset_log_prob",
    "decode", "decode_batch", "decode_mwpm", "estimate_pij", "estimate_threshold", "extract_dem",
    "fit_lambda", "log_partition", "parse_dem", "per_round_rate", "repetition_dem", "sample_syndromes",
    "write_dem",
]
