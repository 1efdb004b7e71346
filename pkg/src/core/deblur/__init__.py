"""Plate image restoration."""
from src.core.deblur.filters import BlurKernel, motion_kernel, sharpness, wiener_deconvolve, wiener_fit
from src.core.deblur.fista import FistaConfig, fista_deblur
from src.core.deblur.haar import haar_deblur

__all__ = [
    "BlurKernel",
    "FistaConfig",
    "fista_deblur",
    "haar_deblur",
    "motion_kernel",
    "sharpness",
    "wiener_deconvolve",
    "wiener_fit",
]
