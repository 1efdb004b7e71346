"""Grayscale image type and Netpbm/PNG codecs."""
from src.core.imaging.image import GrayImage, psnr, read_image, resize, write_pgm

__all__ = ["GrayImage", "psnr", "read_image", "resize", "write_pgm"]
