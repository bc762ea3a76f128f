"""Rasterize OILU numbers as nested square-ring markers.

Pixel centers sit on integer coordinates. A ring of half-width ``h`` covers
the pixels whose Chebyshev distance to the canvas center ``c = (N - 1) / 2``
lies in ``(h - stroke, h]``, so on a 512 canvas the border's outer edge is
the line x = 31.5 and its first stroke pixel is column 32.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .codec import MAX_RINGS, OiluNumber, Side, digit_to_pattern, pattern_str
from .errors import InvalidRing, LayoutOverflow


class Polarity(str, Enum):
    DARK_ON_LIGHT = "dark_on_light"
    LIGHT_ON_DARK = "light_on_dark"
    AUTO = "auto"


DEFAULT_CANVAS_PX = 512


@dataclass(frozen=True)
class MarkerStyle:
    """Drawing parameters.

    ``canvas_px=None`` sizes the canvas to the code: 512 px for up to four
    rings, growing by one pitch per side for every further ring.
    """

    canvas_px: int | None = None
    quiet_zone_px: int = 32
    stroke_px: int = 12
    pitch_px: int = 48
    polarity: Polarity = Polarity.DARK_ON_LIGHT

    def __post_init__(self) -> None:
        if not self.pitch_px > self.stroke_px >= 1:
            raise ValueError("need pitch_px > stroke_px >= 1")
        if self.quiet_zone_px < self.stroke_px:
            raise ValueError("quiet_zone_px must be >= stroke_px")
        if self.canvas_px is not None and self.canvas_px < 2 * (self.quiet_zone_px + self.stroke_px):
            raise ValueError("canvas_px too small for the quiet zone")
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        if self.polarity is Polarity.AUTO:
            raise ValueError("a rendered marker needs a concrete polarity")

    def canvas_for(self, ring_count: int) -> int:
        if self.canvas_px is not None:
            return self.canvas_px
        needed = 2 * (self.quiet_zone_px + ring_count * self.pitch_px + 2 * self.stroke_px)
        return max(DEFAULT_CANVAS_PX, needed)


@dataclass(frozen=True)
class MarkerGeometry:
    """Ring layout of one marker. Ring 0 is the border, rings 1..n carry digits."""

    canvas_px: int
    stroke_px: int
    pitch_px: int
    border_half_width_px: int
    ring_half_widths_px: tuple[int, ...]
    patterns: tuple[frozenset[Side], ...]
    digits: tuple[int, ...] = field(default=())

    @property
    def center_px(self) -> tuple[float, float]:
        c = (self.canvas_px - 1) / 2
        return (c, c)

    @property
    def ring_count(self) -> int:
        return len(self.ring_half_widths_px)

    def half_width(self, ring: int) -> int:
        self._check_ring(ring)
        return self.border_half_width_px if ring == 0 else self.ring_half_widths_px[ring - 1]

    def pattern(self, ring: int) -> frozenset[Side]:
        self._check_ring(ring)
        return frozenset(Side) if ring == 0 else self.patterns[ring - 1]

    def pixel_span(self, ring: int) -> tuple[int, int]:
        """First and last pixel index (inclusive) covered by the ring's outer square."""
        h = self.half_width(ring)
        c = (self.canvas_px - 1) / 2
        return math.ceil(c - h), math.floor(c + h)

    def outer_corners(self, ring: int = 0) -> np.ndarray:
        """Outer stroke corners (x, y), clockwise from top-left, on pixel edges."""
        lo, hi = self.pixel_span(ring)
        a, b = lo - 0.5, hi + 0.5
        return np.array([[a, a], [b, a], [b, b], [a, b]], dtype=float)

    def stroke_depth_range(self, ring: int) -> tuple[int, int]:
        """Depth (pixels from the border's outer edge) of the ring's first and last stroke pixel."""
        lo0, _ = self.pixel_span(0)
        lo, _ = self.pixel_span(ring)
        return lo - lo0, lo - lo0 + self.stroke_px - 1

    def _check_ring(self, ring: int) -> None:
        if not 0 <= ring <= self.ring_count:
            raise InvalidRing(f"ring {ring} outside 0..{self.ring_count}")

    def to_json(self) -> dict[str, Any]:
        return {
            "canvas_px": self.canvas_px,
            "stroke_px": self.stroke_px,
            "pitch_px": self.pitch_px,
            "center_px": list(self.center_px),
            "border_half_width_px": self.border_half_width_px,
            "ring_half_widths_px": list(self.ring_half_widths_px),
            "digits": "".join(map(str, self.digits)),
            "patterns": [pattern_str(p) for p in self.patterns],
            "border_corners": self.outer_corners(0).tolist(),
        }


def layout_rings(n: OiluNumber | str | int, style: MarkerStyle | None = None) -> MarkerGeometry:
    n = OiluNumber.parse(n)
    style = style or MarkerStyle()
    if len(n) > MAX_RINGS:
        raise LayoutOverflow(f"{len(n)} rings exceed the maximum of {MAX_RINGS}")
    canvas = style.canvas_for(len(n))
    border = canvas // 2 - style.quiet_zone_px
    halves = tuple(border - (i + 1) * style.pitch_px for i in range(len(n)))
    if halves[-1] <= style.stroke_px:
        raise LayoutOverflow(
            f"{len(n)} rings at pitch {style.pitch_px} do not fit a {canvas}px canvas "
            f"(innermost half-width {halves[-1]} <= stroke {style.stroke_px})"
        )
    return MarkerGeometry(
        canvas_px=canvas,
        stroke_px=style.stroke_px,
        pitch_px=style.pitch_px,
        border_half_width_px=border,
        ring_half_widths_px=halves,
        patterns=tuple(digit_to_pattern(d) for d in n.digits),
        digits=n.digits,
    )


def _side_slices(geom: MarkerGeometry, ring: int, side: Side) -> tuple[slice, slice]:
    lo, hi = geom.pixel_span(ring)
    s = geom.stroke_px
    full = slice(lo, hi + 1)
    if side is Side.TOP:
        return slice(lo, lo + s), full
    if side is Side.BOTTOM:
        return slice(hi - s + 1, hi + 1), full
    if side is Side.LEFT:
        return full, slice(lo, lo + s)
    return full, slice(hi - s + 1, hi + 1)


def draw_mask(geom: MarkerGeometry) -> np.ndarray:
    """Boolean stroke mask for the whole marker."""
    mask = np.zeros((geom.canvas_px, geom.canvas_px), dtype=bool)
    for ring in range(geom.ring_count + 1):
        for side in geom.pattern(ring):
            mask[_side_slices(geom, ring, side)] = True
    return mask


def render_geometry(geom: MarkerGeometry, polarity: Polarity = Polarity.DARK_ON_LIGHT) -> np.ndarray:
    mask = draw_mask(geom)
    polarity = Polarity(polarity)
    if polarity is Polarity.DARK_ON_LIGHT:
        return np.where(mask, 0, 255).astype(np.uint8)
    if polarity is Polarity.LIGHT_ON_DARK:
        return np.where(mask, 255, 0).astype(np.uint8)
    raise ValueError("a rendered marker needs a concrete polarity")


def render_marker(n: OiluNumber | str | int, style: MarkerStyle | None = None) -> np.ndarray:
    style = style or MarkerStyle()
    return render_geometry(layout_rings(n, style), style.polarity)


def expected_side_pixel_count(geom: MarkerGeometry, ring: int, side: Side) -> int:
    """Pixels owned by one side's stroke.

    Every present side draws both of its corner squares. For counting, each
    corner belongs to the side that starts there when walking clockwise
    (TOP owns top-left, RIGHT owns top-right, ...), or to the other side if
    that one is absent.
    """
    pattern = geom.pattern(ring)
    side = Side(side)
    if side not in pattern:
        return 0
    lo, hi = geom.pixel_span(ring)
    s = geom.stroke_px
    count = s * (hi - lo + 1)
    if Side((side + 1) % 4) in pattern:
        count -= s * s
    return count


def write_geometry_sidecar(geom: MarkerGeometry, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(geom.to_json(), indent=2) + "\n", encoding="utf-8")
    return path
