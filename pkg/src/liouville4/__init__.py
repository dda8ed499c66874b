"""Biharmonic Gaussian fields and Liouville quantum gravity measures on T^4."""
from .spectral_core import (
    KernelTable,
    SpectralField,
    TorusPoint,
    biharmonic_kernel,
    fractional_green_kernel,
    green_kernel,
    grounded_heat_kernel,
)
from .haar import GridField, HaarIndex, haar_coefficients, haar_synthesis
from .rng import SeededStream

__all__ = [
    "GridField",
    "HaarIndex",
    "KernelTable",
    "SeededStream",
    "SpectralField",
    "TorusPoint",
    "biharmonic_kernel",
    "fractional_green_kernel",
    "green_kernel",
    "grounded_heat_kernel",
    "haar_coefficients",
    "haar_synthesis",
]

__version__ = "0.1.0"
