"""PRNU sensor fingerprints, identification and targeted spoofing."""
from .denoise import DenoiseParams, NoiseResidual, WaveletPyramid, denoise, dwt2, idwt2, residual
from .errors import (
    DegenerateScoreError, DimensionMismatchError, EmptyInputError, ImageFormatError, PrnuError,
)
from .fingerprint import (
    NCCScore, ReferencePattern, SensorGallery, classify, correlate, estimate_reference, ncc,
    postprocess, zero_mean,
)
from .image import Image, load_image, resize_bilinear, save_pgm
from .spoof import (
    PatchSpec, PerturbParams, SpoofResult, baseline1_inject, baseline2_substitute,
    baseline_denoised_inject, perturb, select_candidate,
)
from .synth import SyntheticSensor, capture, capture_bank, make_scene_bank

__version__ = "0.1.0"

__all__ = [
    "DenoiseParams", "NoiseResidual", "WaveletPyramid", "denoise", "dwt2", "idwt2", "residual",
    "DegenerateScoreError", "DimensionMismatchError", "EmptyInputError", "ImageFormatError",
    "PrnuError", "NCCScore", "ReferencePattern", "SensorGallery", "classify", "correlate",
    "estimate_reference", "ncc", "postprocess", "zero_mean", "Image", "load_image",
    "resize_bilinear", "save_pgm", "PatchSpec", "PerturbParams", "SpoofResult",
    "baseline1_inject", "baseline2_substitute", "baseline_denoised_inject", "perturb",
    "select_candidate", "SyntheticSensor", "capture", "capture_bank", "make_scene_bank",
]
