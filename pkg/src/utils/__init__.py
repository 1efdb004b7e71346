"""Utilities package for the BLPnet recognition cascade."""
