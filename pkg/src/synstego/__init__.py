"""Synesthetic color-code steganography and complexity-proxy steganalysis."""

__version__ = "0.1.0"

from .payload import BitString, Color, ColorSequence, bits_to_colors, colors_to_bits  # noqa: E402

__all__ = ["BitString", "Color", "ColorSequence", "bits_to_colors", "colors_to_bits", "__version__"]
