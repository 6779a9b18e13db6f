"""Quantized compressed sensing with partial random circulant measurements.

Measurement matrices are rows of a random circulant matrix, sampled without
replacement.  Measurements are quantized with stable Sigma-Delta schemes (or
plain memoryless scalar quantization) and reconstructed with l1-type convex
programs or the Sobolev-dual decoder.
"""

from circsd.errors import InputError
from circsd.operators import (
    DifferenceSystem,
    MeasurementEnsemble,
    SparseSignal,
    apply_circulant,
    build_difference_system,
    fourier_sup_norm,
    measure,
    project_top,
    sample_omega,
    subsample,
)
from circsd.quantize import Alphabet, SigmaDeltaRun, msq, scalar_quantize, sigma_delta, verify_sd_identity
from circsd.decode import (
    DecodeProblem,
    DecodeResult,
    decode_l1,
    decode_sd,
    sobolev_dual_decode,
    two_stage_decode,
)

__all__ = [
    "Alphabet",
    "DecodeProblem",
    "DecodeResult",
    "DifferenceSystem",
    "InputError",
    "MeasurementEnsemble",
    "SigmaDeltaRun",
    "SparseSignal",
    "apply_circulant",
    "build_difference_system",
    "decode_l1",
    "decode_sd",
    "fourier_sup_norm",
    "measure",
    "msq",
    "project_top",
    "sample_omega",
    "scalar_quantize",
    "sigma_delta",
    "sobolev_dual_decode",
    "subsample",
    "two_stage_decode",
    "verify_sd_identity",
]
