"""PNG / PGM reading and writing.

Rasters are plain numpy arrays: ``uint8`` of shape (H, W) or (H, W, 3).
16-bit inputs are reduced to 8 bits with ``(v * 255 + 32767) // 65535``,
i.e. ``round(v / 257)`` with halves rounded up.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, UnsupportedFormat


def to_uint8(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype == np.uint16 or (arr.dtype.kind in "iu" and arr.max(initial=0) > 255):
        v = arr.astype(np.int64)
        return ((v * 255 + 32767) // 65535).clip(0, 255).astype(np.uint8)
    if arr.dtype.kind in "iu":
        return arr.astype(np.uint8)
    if arr.dtype == bool:
        return arr.astype(np.uint8) * 255
    raise UnsupportedFormat(f"unsupported pixel type {arr.dtype}")


def read_image(path: str | Path) -> np.ndarray:
    """Load an image as uint8, grayscale or RGB.

    Raises :class:`FileNotFoundError` for missing files and
    :class:`FormatError` for anything unreadable or truncated.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im)
                if arr.dtype != np.uint16 and arr.max(initial=0) > 65535:
                    raise UnsupportedFormat(f"{im.mode} image with values beyond 16 bits")
                return to_uint8(arr.astype(np.uint16))
            if im.mode == "L":
                return np.asarray(im, dtype=np.uint8).copy()
            if im.mode in ("1", "LA"):
                return np.asarray(im.convert("L"), dtype=np.uint8).copy()
            if im.mode in ("P", "RGBA", "CMYK", "YCbCr", "RGB"):
                return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
            raise UnsupportedFormat(f"unsupported image mode {im.mode}")
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, (FileNotFoundError, UnsupportedFormat)):
            raise
        raise FormatError(f"cannot read {path}: {exc}") from exc


def write_image(path: str | Path, img: np.ndarray) -> Path:
    """Write PNG or binary PGM depending on the suffix.

    ``uint16`` arrays are written as 16-bit grayscale.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".pgm"):
        raise UnsupportedFormat(f"unsupported output format {suffix!r}")
    arr = np.asarray(img)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    if arr.dtype == np.uint16:
        im = Image.fromarray(arr)
    elif arr.ndim == 3 and suffix == ".pgm":
        raise UnsupportedFormat("PGM holds grayscale only")
    else:
        im = Image.fromarray(np.ascontiguousarray(arr.astype(np.uint8)))
    im.save(path, format="PNG" if suffix == ".png" else "PPM")
    return path


def write_indexed(path: str | Path, labels: np.ndarray, palette: list[tuple[int, int, int]]) -> Path:
    """Write a label image as a palette PNG (label i uses palette[i % len])."""
    flat: list[int] = []
    for i in range(256):
        flat.extend(palette[i % len(palette)] if i else (0, 0, 0))
    arr = np.ascontiguousarray((labels % 256).astype(np.uint8))
    im = Image.frombytes("P", (arr.shape[1], arr.shape[0]), arr.tobytes())
    im.putpalette(flat)
    im.save(path, format="PNG")
    return Path(path)
