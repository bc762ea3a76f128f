"""End-to-end marker identification."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import imageio, levelset, vision
from .codec import FacetGroup, OiluNumber, facet_values, pattern_str, pattern_to_digit
from .errors import DecodeError, DegenerateHistogram, DegenerateQuad, NoMarkerFound, UnsupportedFormat
from .render import Polarity

MIN_INPUT_PX = 64

_LABEL_PALETTE = [(230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48),
                  (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60)]


@dataclass(frozen=True)
class DecodeConfig:
    rectify: bool = False
    out_size: int = 512
    ring_count_hint: int | None = None
    beta: float = 0.5
    floor_factor: float = 0.1
    binarization: str = "otsu"  # or "adaptive"
    polarity: Polarity = Polarity.AUTO
    min_area_factor: float = 1e-4

    def __post_init__(self) -> None:
        if not 0.2 <= self.beta <= 0.8:
            raise ValueError("beta must lie in [0.2, 0.8]")
        if not 0.0 <= self.floor_factor <= 1.0:
            raise ValueError("floor_factor must lie in [0, 1]")
        if not 0.0 <= self.min_area_factor <= 0.01:
            raise ValueError("min_area_factor must lie in [0, 0.01]")
        if not 64 <= self.out_size <= 4096:
            raise ValueError("out_size must lie in [64, 4096]")
        if self.binarization not in ("otsu", "adaptive"):
            raise ValueError("binarization must be 'otsu' or 'adaptive'")
        if self.ring_count_hint is not None and not 1 <= self.ring_count_hint <= 16:
            raise ValueError("ring_count_hint must lie in [1, 16]")
        object.__setattr__(self, "polarity", Polarity(self.polarity))


@dataclass(frozen=True)
class RingReading:
    pattern: frozenset
    digit: int
    margin: float

    def to_json(self) -> dict[str, Any]:
        return {"pattern": pattern_str(self.pattern), "digit": self.digit, "margin": round(self.margin, 4)}


@dataclass
class DecodeResult:
    value: OiluNumber
    facets: FacetGroup
    per_ring: list[RingReading]
    quad: vision.Quad
    timing_ms: float
    threshold: int = -1
    polarity: Polarity = Polarity.DARK_ON_LIGHT
    debug: dict[str, Any] = field(default_factory=dict, repr=False)

    def to_json(self) -> dict[str, Any]:
        return {
            "value": str(self.value),
            "facets": self.facets.strings(),
            "per_ring": [r.to_json() for r in self.per_ring],
            "corners": self.quad.to_list(),
            "timing_ms": round(self.timing_ms, 3),
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def _binarize(gray: np.ndarray, t: int, polarity: Polarity, cfg: DecodeConfig) -> np.ndarray:
    if cfg.binarization == "adaptive":
        return vision.binarize_adaptive(gray, polarity)
    return vision.binarize(gray, t, polarity)


def _write_debug(debug_dir: Path, name: str, img: np.ndarray) -> None:
    imageio.write_image(debug_dir / f"{name}.png", img)


def _decode(img: np.ndarray, cfg: DecodeConfig, debug_dir: Path | None) -> DecodeResult:
    gray = vision.to_grayscale(img)
    h, w = gray.shape
    if h < MIN_INPUT_PX or w < MIN_INPUT_PX:
        raise UnsupportedFormat(f"image {w}x{h} is smaller than {MIN_INPUT_PX}x{MIN_INPUT_PX}")
    try:
        t = vision.otsu_threshold(gray)
    except DegenerateHistogram:
        t = 128
    polarity = cfg.polarity
    if polarity is Polarity.AUTO:
        polarity = vision.resolve_polarity(gray, t)
    binary = _binarize(gray, t, polarity, cfg)
    min_area = int(round(cfg.min_area_factor * h * w))
    clean = vision.remove_small_components(binary, min_area)
    if debug_dir is not None:
        _write_debug(debug_dir, "01_gray", gray)
        _write_debug(debug_dir, "02_binary", binary * 255)
        _write_debug(debug_dir, "03_clean", clean * 255)
    quad = vision.detect_quad(clean)
    if debug_dir is not None:
        _write_debug(debug_dir, "04_quad", vision.draw_quad_overlay(gray, quad))

    work_quad, strokes = quad, clean
    if cfg.rectify:
        try:
            warped = vision.rectify(gray, quad, cfg.out_size)
        except DegenerateQuad as exc:
            raise NoMarkerFound(str(exc), stage="rectify") from exc
        strokes = _binarize(warped, t, polarity, cfg)
        n = cfg.out_size
        strokes = vision.remove_small_components(strokes, int(round(cfg.min_area_factor * n * n)))
        work_quad = vision.Quad(vision.square_corners(n))
        if debug_dir is not None:
            _write_debug(debug_dir, "04b_rectified", warped)

    dm = levelset.distance_map(work_quad, strokes.shape)
    bands = levelset.estimate_ring_bands(dm, strokes, cfg.ring_count_hint)
    labels = levelset.assign_ring_labels(dm, bands, strokes)
    if debug_dir is not None:
        depth = np.nan_to_num(dm.full_depth(), nan=0.0)
        imageio.write_image(debug_dir / "05_depth.png", np.clip(depth * 64, 0, 65535).astype(np.uint16))
        imageio.write_indexed(debug_dir / "06_labels.png", labels, _LABEL_PALETTE)
    table = levelset.occupancy(labels, work_quad, bands.ring_count)
    expected = levelset.expected_side_counts(work_quad, bands, levelset.border_pixel_count(dm, bands, strokes))
    bits = levelset.bits_from_counts(table, expected, beta=cfg.beta, floor_factor=cfg.floor_factor)
    readings = [RingReading(b.pattern, pattern_to_digit(b.pattern), b.margin) for b in bits]
    value = OiluNumber(tuple(r.digit for r in readings))
    return DecodeResult(
        value=value,
        facets=facet_values(value),
        per_ring=readings,
        quad=quad,
        timing_ms=0.0,
        threshold=t,
        polarity=polarity,
        debug={"bands": bands, "counts": table.counts},
    )


def decode(img: np.ndarray, cfg: DecodeConfig | None = None, *, debug_dir: str | Path | None = None) -> DecodeResult:
    """Identify the marker in ``img``.

    Raises a :class:`DecodeError` subclass naming the failing stage; its
    ``timing_ms`` is set just like a successful result's.
    """
    cfg = cfg or DecodeConfig()
    if debug_dir is not None:
        debug_dir = Path(debug_dir)
        debug_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        result = _decode(np.asarray(img), cfg, debug_dir)
    except DecodeError as exc:
        exc.timing_ms = (time.perf_counter() - start) * 1e3
        raise
    result.timing_ms = (time.perf_counter() - start) * 1e3
    return result


def decode_file(path: str | Path, cfg: DecodeConfig | None = None, *, debug_dir: str | Path | None = None) -> DecodeResult:
    """Load then decode. I/O problems raise ``FileNotFoundError`` / ``FormatError``."""
    return decode(imageio.read_image(path), cfg, debug_dir=debug_dir)
