"""BLPnet - cascaded vehicle, plate and character recognition."""

__version__ = "0.1.0"
__description__ = "Licence plate recognition cascade with conditional deblurring and level-set segmentation"
