"""OILU square fiducial markers: encoding, rendering, decoding and robustness sweeps."""

from .codec import (
    FacetGroup,
    OiluNumber,
    Side,
    digit_to_pattern,
    facet_values,
    pattern_to_digit,
    rotate_digit,
    rotate_pattern_ccw,
)
from .decoder import DecodeConfig, DecodeResult, decode, decode_file
from .render import MarkerGeometry, MarkerStyle, Polarity, layout_rings, render_marker

__all__ = [
    "DecodeConfig",
    "DecodeResult",
    "FacetGroup",
    "MarkerGeometry",
    "MarkerStyle",
    "OiluNumber",
    "Polarity",
    "Side",
    "decode",
    "decode_file",
    "digit_to_pattern",
    "facet_values",
    "layout_rings",
    "pattern_to_digit",
    "render_marker",
    "rotate_digit",
    "rotate_pattern_ccw",
]

__version__ = "0.1.0"
