"""Core recognition cascade package."""
