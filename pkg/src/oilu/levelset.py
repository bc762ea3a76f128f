"""Depth map inside the border quad, ring bands, triangle sides and bit extraction.

Depth is the exact Euclidean distance from a pixel center to the nearest
rasterized boundary pixel of the quad (0 on the boundary, masked outside).
Nested rings then show up as peaks of stroke occupancy over depth, and the
two quad diagonals split every ring into its four sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.signal import find_peaks

from .codec import Side, is_valid_pattern, pattern_str
from .errors import AmbiguousBands, DegenerateQuad, NoRingsFound, OutOfDomain, UndecodableRing
from .vision import Quad

INF = np.int64(1) << 40


# --------------------------------------------------------------------------
# exact Euclidean distance transform (lower envelope of parabolas)
# --------------------------------------------------------------------------

@njit(cache=True)
def _column_pass(seeds):
    rows, cols = seeds.shape
    g = np.empty((rows, cols), dtype=np.int64)
    big = np.int64(1) << 40
    for x in range(cols):
        last = -1
        for y in range(rows):
            if seeds[y, x]:
                last = y
            g[y, x] = y - last if last >= 0 else big
        last = -1
        for y in range(rows - 1, -1, -1):
            if seeds[y, x]:
                last = y
            if last >= 0 and last - y < g[y, x]:
                g[y, x] = last - y
    return g


@njit(cache=True)
def _envelope_1d(f, out, v, zn, zd):
    # f: squared distances (>= INF means no seed). Breakpoints z[k] = zn/zd kept
    # as exact integer fractions with zd > 0.
    n = f.shape[0]
    big = np.int64(1) << 40
    k = -1
    for q in range(n):
        fq = f[q]
        if fq >= big:
            continue
        if k < 0:
            k = 0
            v[0] = q
            continue
        while True:
            p = v[k]
            num = (fq + q * q) - (f[p] + p * p)
            den = 2 * (q - p)
            if k == 0 or num * zd[k] > zn[k] * den:
                break
            k -= 1
        k += 1
        v[k] = q
        zn[k] = num
        zd[k] = den
    if k < 0:
        for x in range(n):
            out[x] = big
        return
    j = 0
    for x in range(n):
        while j < k and zn[j + 1] < x * zd[j + 1]:
            j += 1
        dx = x - v[j]
        out[x] = dx * dx + f[v[j]]


@njit(cache=True)
def _edt_squared(seeds):
    g = _column_pass(seeds)
    rows, cols = seeds.shape
    big = np.int64(1) << 40
    f = np.empty(cols, dtype=np.int64)
    out = np.empty((rows, cols), dtype=np.int64)
    row = np.empty(cols, dtype=np.int64)
    v = np.empty(cols, dtype=np.int64)
    zn = np.empty(cols + 1, dtype=np.int64)
    zd = np.empty(cols + 1, dtype=np.int64)
    for y in range(rows):
        for x in range(cols):
            gy = g[y, x]
            f[x] = gy * gy if gy < big else big
        _envelope_1d(f, row, v, zn, zd)
        for x in range(cols):
            out[y, x] = row[x]
    return out


def edt_squared(seeds: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance from every pixel to the nearest seed.

    Pixels with no reachable seed (empty seed set) get ``INF``.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.bool_)
    if seeds.ndim != 2:
        raise ValueError("seed mask must be 2-D")
    return _edt_squared(seeds)


# --------------------------------------------------------------------------
# distance map
# --------------------------------------------------------------------------

@dataclass
class DistanceMap:
    """Depth inside the quad over a cropped window of the image.

    ``depth`` and ``inside`` cover ``image[y0:y0+h, x0:x0+w]``; outside the
    quad ``depth`` is NaN.
    """

    depth: np.ndarray
    inside: np.ndarray
    boundary: np.ndarray
    origin: tuple[int, int]  # (y0, x0)
    shape: tuple[int, int]
    max_depth: float

    @property
    def window(self) -> tuple[slice, slice]:
        y0, x0 = self.origin
        h, w = self.depth.shape
        return slice(y0, y0 + h), slice(x0, x0 + w)

    def full_depth(self) -> np.ndarray:
        out = np.full(self.shape, np.nan)
        out[self.window] = self.depth
        return out


def quad_inside_mask(quad: Quad, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Pixel centers (xs, ys) on or inside the quad (clockwise corners)."""
    c = quad.corners
    inside = np.ones(np.broadcast(ys, xs).shape, dtype=bool)
    for i in range(4):
        ax, ay = c[i]
        bx, by = c[(i + 1) % 4]
        inside &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= 0
    return inside


def distance_map(quad: Quad, shape: tuple[int, int]) -> DistanceMap:
    quad.validate()
    h, w = shape[:2]
    c = quad.corners
    x0 = max(int(np.floor(c[:, 0].min())) - 1, 0)
    y0 = max(int(np.floor(c[:, 1].min())) - 1, 0)
    x1 = min(int(np.ceil(c[:, 0].max())) + 2, w)
    y1 = min(int(np.ceil(c[:, 1].max())) + 2, h)
    if x1 - x0 < 3 or y1 - y0 < 3:
        raise DegenerateQuad("quad does not overlap the image")
    ys = np.arange(y0, y1, dtype=float)[:, None]
    xs = np.arange(x0, x1, dtype=float)[None, :]
    inside = quad_inside_mask(quad, ys, xs)
    if not inside.any():
        raise DegenerateQuad("quad contains no pixel centers")
    padded = np.pad(inside, 1, constant_values=False)
    core = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    boundary = inside & ~core
    d2 = edt_squared(boundary)
    depth = np.sqrt(d2.astype(np.float64))
    depth[~inside] = np.nan
    return DistanceMap(depth=depth, inside=inside, boundary=boundary, origin=(y0, x0),
                       shape=(h, w), max_depth=float(np.nanmax(depth)))


# --------------------------------------------------------------------------
# ring bands
# --------------------------------------------------------------------------

PROMINENCE = 0.2
MIN_PEAK_SEPARATION = 3
SPACING_TOLERANCE = 0.3
BAND_HALF_WIDTH = 0.4


@dataclass
class RingBands:
    pitch_estimate_px: float
    centers: list[float]  # code rings, outermost first
    half_width: float
    border_center: float
    profile: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def ring_count(self) -> int:
        return len(self.centers)


def occupancy_profile(dm: DistanceMap, strokes: np.ndarray) -> np.ndarray:
    """Fraction of each 1-px depth level covered by strokes.

    Levels holding fewer pixels than 5% of the largest level are scaled down
    so a stray blob near the center cannot pose as a full ring.
    """
    s = np.asarray(strokes)[dm.window].astype(bool) & dm.inside
    bins = np.rint(dm.depth[dm.inside]).astype(np.int64)
    nbins = int(bins.max()) + 1
    level = np.bincount(bins, minlength=nbins).astype(float)
    hit = np.bincount(np.rint(dm.depth[s]).astype(np.int64), minlength=nbins).astype(float)
    floor = 0.05 * level.max()
    return hit / np.maximum(level, max(floor, 1.0))


def _refine_center(raw: np.ndarray, smooth: np.ndarray, peak: int) -> float:
    half = 0.5 * smooth[peak]
    lo = peak
    while lo > 0 and smooth[lo - 1] >= half:
        lo -= 1
    hi = peak
    while hi < len(smooth) - 1 and smooth[hi + 1] >= half:
        hi += 1
    w = raw[lo:hi + 1]
    if w.sum() <= 0:
        return float(peak)
    return float(np.dot(np.arange(lo, hi + 1), w) / w.sum())


def _merge_plateau_peaks(peaks: list[int], smooth: np.ndarray) -> list[int]:
    """Collapse maxima that sit on one band.

    A saturated stroke band is a flat run of 1.0; a single flipped pixel can
    split it into several equal maxima, each of which ``find_peaks`` reports
    with full prominence. Two peaks belong to the same band when the profile
    between them never falls below half the lower one.
    """
    merged: list[int] = []
    for p in peaks:
        if merged:
            q = merged[-1]
            if smooth[q:p + 1].min() >= 0.5 * min(smooth[q], smooth[p]):
                if smooth[p] > smooth[q]:
                    merged[-1] = p
                continue
        merged.append(p)
    return merged


def estimate_ring_bands(dm: DistanceMap, strokes: np.ndarray, ring_count_hint: int | None = None,
                        *, prominence: float = PROMINENCE) -> RingBands:
    raw = occupancy_profile(dm, strokes)
    smooth = np.convolve(np.r_[raw[:1], raw, raw[-1:]], np.ones(3) / 3, mode="valid")
    if smooth.max() <= 0:
        raise NoRingsFound("no stroke pixels inside the quad", stage="estimate_ring_bands")
    # leading zero lets a border plateau starting at depth 0 count as a peak
    padded = np.r_[0.0, smooth, 0.0]
    peaks, _ = find_peaks(padded, prominence=prominence * smooth.max(), distance=MIN_PEAK_SEPARATION)
    peaks = _merge_plateau_peaks([int(p) - 1 for p in peaks], smooth)
    diag = {"peaks": peaks, "max_depth": round(dm.max_depth, 2)}
    if len(peaks) < 2:
        raise NoRingsFound("no code ring peak inside the border", stage="estimate_ring_bands",
                           diagnostics=diag)
    centers = [_refine_center(raw, smooth, p) for p in peaks]
    border, codes = centers[0], centers[1:]
    if ring_count_hint is not None:
        if len(codes) < ring_count_hint:
            raise AmbiguousBands(f"found {len(codes)} ring peaks, expected {ring_count_hint}",
                                 stage="estimate_ring_bands", diagnostics=diag)
        strength = [smooth[p] for p in peaks[1:]]
        keep = sorted(np.argsort(strength, kind="stable")[::-1][:ring_count_hint])
        codes = [codes[i] for i in keep]
    all_centers = [border] + codes
    gaps = np.diff(all_centers)
    pitch = float(np.median(gaps))
    diag.update(centers=[round(c, 2) for c in all_centers], pitch=round(pitch, 2))
    if pitch <= 0 or np.any(np.abs(gaps - pitch) > SPACING_TOLERANCE * pitch):
        raise AmbiguousBands("ring spacing is irregular", stage="estimate_ring_bands", diagnostics=diag)
    return RingBands(pitch_estimate_px=pitch, centers=codes, half_width=BAND_HALF_WIDTH * pitch,
                     border_center=border, profile=raw)


def assign_ring_labels(dm: DistanceMap, bands: RingBands, strokes: np.ndarray) -> np.ndarray:
    """Full-size int32 image: ring index 1..n for stroke pixels in a band, else 0."""
    labels = np.zeros(dm.shape, dtype=np.int32)
    s = np.asarray(strokes)[dm.window].astype(bool) & dm.inside
    ys, xs = np.nonzero(s)
    depth = dm.depth[ys, xs]
    centers = np.asarray(bands.centers)
    nearest = np.abs(depth[:, None] - centers[None, :]).argmin(axis=1)
    ok = np.abs(depth - centers[nearest]) < bands.half_width
    y0, x0 = dm.origin
    labels[ys[ok] + y0, xs[ok] + x0] = nearest[ok] + 1
    return labels


def border_pixel_count(dm: DistanceMap, bands: RingBands, strokes: np.ndarray) -> int:
    s = np.asarray(strokes)[dm.window].astype(bool) & dm.inside
    return int(np.count_nonzero(s & (np.abs(dm.depth - bands.border_center) < bands.half_width)))


# --------------------------------------------------------------------------
# triangles and occupancy
# --------------------------------------------------------------------------

def side_indices(xs: np.ndarray, ys: np.ndarray, quad: Quad) -> np.ndarray:
    """Vectorized triangle lookup; returns Side values as int8.

    Ties: a point on a diagonal goes to the triangle counter-clockwise of
    the half-diagonal it sits on; the diagonal crossing itself is TOP.
    """
    tl, tr, br, bl = quad.corners
    s1 = (br[0] - tl[0]) * (ys - tl[1]) - (br[1] - tl[1]) * (xs - tl[0])
    s2 = (bl[0] - tr[0]) * (ys - tr[1]) - (bl[1] - tr[1]) * (xs - tr[0])
    out = np.empty(np.broadcast(xs, ys).shape, dtype=np.int8)
    out[(s1 < 0) & (s2 > 0)] = Side.TOP
    out[(s1 < 0) & (s2 < 0)] = Side.RIGHT
    out[(s1 > 0) & (s2 < 0)] = Side.BOTTOM
    out[(s1 > 0) & (s2 > 0)] = Side.LEFT
    out[(s1 == 0) & (s2 > 0)] = Side.LEFT
    out[(s1 == 0) & (s2 < 0)] = Side.RIGHT
    out[(s2 == 0) & (s1 < 0)] = Side.TOP
    out[(s2 == 0) & (s1 > 0)] = Side.BOTTOM
    out[(s1 == 0) & (s2 == 0)] = Side.TOP
    return out


def side_of(point, quad: Quad) -> Side:
    x, y = float(point[0]), float(point[1])
    if not quad_inside_mask(quad, np.array(y), np.array(x)):
        raise OutOfDomain(f"point ({x}, {y}) lies outside the quad")
    return Side(int(side_indices(np.array(x), np.array(y), quad)))


@dataclass
class OccupancyTable:
    counts: np.ndarray  # (rings, 4), columns in Side order

    @property
    def ring_count(self) -> int:
        return self.counts.shape[0]

    def max_count(self, ring: int) -> int:
        return int(self.counts[ring].max())


def occupancy(labels: np.ndarray, quad: Quad, ring_count: int | None = None) -> OccupancyTable:
    ys, xs = np.nonzero(labels)
    ring = labels[ys, xs].astype(np.int64) - 1
    n = int(ring_count if ring_count is not None else (labels.max() if labels.size else 0))
    if ring.size == 0:
        return OccupancyTable(np.zeros((n, 4), dtype=np.int64))
    sides = side_indices(xs.astype(float), ys.astype(float), quad).astype(np.int64)
    counts = np.bincount(ring * 4 + sides, minlength=n * 4)[: n * 4].reshape(n, 4)
    return OccupancyTable(counts.astype(np.int64))


@dataclass
class RingBits:
    pattern: frozenset
    threshold: float
    margin: float
    valid: bool


def bits_from_counts(table: OccupancyTable, expected_side_counts=None, *, beta: float = 0.5,
                     floor_factor: float = 0.1, strict: bool = True) -> list[RingBits]:
    """Present sides per ring: count >= max(beta * ring max, floor_factor * expected).

    ``expected_side_counts`` gives, per ring, the pixel count of one full
    side stroke at that ring's scale (``None`` disables the floor). With
    ``strict`` an invalid pattern raises :class:`UndecodableRing`.
    """
    out: list[RingBits] = []
    for r in range(table.ring_count):
        counts = table.counts[r]
        floor_abs = 0.0 if expected_side_counts is None else floor_factor * float(expected_side_counts[r])
        thr = max(beta * float(counts.max()), floor_abs)
        present = frozenset(Side(i) for i in range(4) if counts[i] >= thr and counts[i] > 0)
        valid = is_valid_pattern(present)
        if valid:
            margin = float(np.clip((min(counts[s] for s in present) - thr) / thr, 0.0, 1.0)) if thr > 0 else 0.0
        else:
            margin = 0.0
        bits = RingBits(pattern=present, threshold=thr, margin=margin, valid=valid)
        if strict and not valid:
            raise UndecodableRing(f"ring {r + 1} reads as invalid side set {pattern_str(present)!r}",
                                  index=r + 1,
                                  diagnostics={"counts": counts.tolist(), "threshold": round(thr, 2)})
        out.append(bits)
    return out


def expected_side_counts(quad: Quad, bands: RingBands, border_pixels: int) -> list[float]:
    """Per-ring estimate of one full side's stroke pixels, scaled from the border ring."""
    side_len = float(quad.edge_lengths().mean())
    per_side = border_pixels / 4.0
    out = []
    for c in bands.centers:
        scale = max(side_len - 2.0 * (c - bands.border_center), 0.0) / side_len
        out.append(per_side * scale)
    return out
