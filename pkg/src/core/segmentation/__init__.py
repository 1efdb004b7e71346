"""Character segmentation package."""
