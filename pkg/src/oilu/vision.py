"""Image front-end: grayscale, binarization, cleanup, border quad, rectification."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DegenerateHistogram, DegenerateQuad, NoMarkerFound, UnsupportedFormat
from .render import Polarity

MIN_QUAD_ANGLE_DEG = 10.0
APPROX_TOLERANCE = 0.02


# --------------------------------------------------------------------------
# grayscale / threshold
# --------------------------------------------------------------------------

def to_grayscale(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise UnsupportedFormat(f"expected 8-bit channels, got {img.dtype}")
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim == 3 and img.shape[2] == 3:
        rgb = img.astype(np.float64)
        y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        return np.rint(y).clip(0, 255).astype(np.uint8)
    raise UnsupportedFormat(f"unsupported raster shape {img.shape}")


def otsu_from_histogram(hist) -> int:
    """Otsu threshold of a 256-bin histogram; class 0 is ``v <= t``.

    The between-class variance is compared as an exact rational, so ties
    resolve to the smallest threshold regardless of float rounding.
    """
    h = [int(v) for v in hist]
    if len(h) != 256:
        raise ValueError("histogram must have 256 bins")
    total = sum(h)
    total_sum = sum(i * v for i, v in enumerate(h))
    best_t = -1
    best_num, best_den = 0, 1
    n0 = s0 = 0
    for t in range(256):
        n0 += h[t]
        s0 += t * h[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        # sigma_b^2 * N^2 = (N s0 - n0 S)^2 / (n0 n1)
        num = (total * s0 - n0 * total_sum) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t < 0:
        raise DegenerateHistogram("image has a single intensity level")
    return best_t


def otsu_threshold(img: np.ndarray) -> int:
    img = np.asarray(img)
    if img.size == 0:
        raise ValueError("empty image")
    return otsu_from_histogram(np.bincount(img.ravel(), minlength=256))


def resolve_polarity(gray: np.ndarray, t: int, region: np.ndarray | None = None) -> Polarity:
    """Minority class is the stroke class; an exact tie picks dark strokes."""
    values = gray if region is None else gray[region]
    n_dark = int(np.count_nonzero(values <= t))
    return Polarity.DARK_ON_LIGHT if n_dark <= values.size - n_dark else Polarity.LIGHT_ON_DARK


def binarize(img: np.ndarray, t: int, polarity_hint: Polarity | str = Polarity.AUTO) -> np.ndarray:
    """Stroke mask (uint8, strokes = 1) from a global threshold."""
    polarity = Polarity(polarity_hint)
    if polarity is Polarity.AUTO:
        polarity = resolve_polarity(img, t)
    if polarity is Polarity.DARK_ON_LIGHT:
        return (img <= t).view(np.uint8)
    return (img > t).view(np.uint8)


def binarize_adaptive(img: np.ndarray, polarity: Polarity | str, window: int | None = None,
                      offset: float = 4.0) -> np.ndarray:
    """Local-mean binarization for uneven or very low contrast images.

    A pixel is a stroke when it is darker (or lighter, for light strokes)
    than its ``window`` box mean by more than ``offset``.
    """
    polarity = Polarity(polarity)
    if polarity is Polarity.AUTO:
        polarity = resolve_polarity(img, _safe_otsu(img))
    if window is None:
        window = max(15, (min(img.shape[:2]) // 8) | 1)
    mean = cv2.boxFilter(img.astype(np.float32), -1, (window, window), borderType=cv2.BORDER_REPLICATE)
    if polarity is Polarity.DARK_ON_LIGHT:
        return (img < mean - offset).view(np.uint8)
    return (img > mean + offset).view(np.uint8)


def _safe_otsu(img: np.ndarray) -> int:
    try:
        return otsu_threshold(img)
    except DegenerateHistogram:
        return 128


# --------------------------------------------------------------------------
# connected components
# --------------------------------------------------------------------------

@dataclass
class ComponentLabeling:
    labels: np.ndarray
    count: int
    sizes: np.ndarray  # sizes[i] = pixel count of label i + 1


def label_components(binary: np.ndarray) -> ComponentLabeling:
    """8-connected labeling of the foreground."""
    n, labels, stats, _ = cv2.connectedComponentsWithStats(
        np.ascontiguousarray(binary, dtype=np.uint8), connectivity=8
    )
    return ComponentLabeling(labels=labels, count=n - 1, sizes=stats[1:, cv2.CC_STAT_AREA].copy())


def remove_small_components(binary: np.ndarray, min_area: int) -> np.ndarray:
    binary = np.asarray(binary, dtype=np.uint8)
    if min_area <= 1:
        return binary.copy()
    comp = label_components(binary)
    keep = np.zeros(comp.count + 1, dtype=np.uint8)
    keep[1:] = comp.sizes >= min_area
    return keep[comp.labels]


# --------------------------------------------------------------------------
# quadrilateral
# --------------------------------------------------------------------------

def order_corners(pts: np.ndarray) -> np.ndarray:
    """Clockwise on screen (y down), starting at the corner nearest (0, 0)."""
    pts = np.asarray(pts, dtype=float).reshape(4, 2)
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    pts = pts[np.argsort(ang, kind="stable")]
    d = np.hypot(pts[:, 0], pts[:, 1])
    start = int(np.flatnonzero(d <= d.min() + 1e-9)[0])
    return np.roll(pts, -start, axis=0)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class Quad:
    corners: np.ndarray  # (4, 2): top-left, top-right, bottom-right, bottom-left

    @classmethod
    def from_points(cls, pts) -> "Quad":
        return cls(order_corners(np.asarray(pts, dtype=float)))

    @property
    def area(self) -> float:
        x, y = self.corners[:, 0], self.corners[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def interior_angles(self) -> np.ndarray:
        c = self.corners
        prev = np.roll(c, 1, axis=0) - c
        nxt = np.roll(c, -1, axis=0) - c
        cosv = (prev * nxt).sum(1) / (np.linalg.norm(prev, axis=1) * np.linalg.norm(nxt, axis=1))
        return np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))

    def is_convex(self) -> bool:
        c = self.corners
        z = _cross(np.roll(c, -1, axis=0) - c, np.roll(c, -2, axis=0) - np.roll(c, -1, axis=0))
        return bool(np.all(z > 0) or np.all(z < 0))

    def validate(self, min_area: float = 1.0) -> "Quad":
        c = self.corners
        if c.shape != (4, 2) or not np.all(np.isfinite(c)):
            raise DegenerateQuad("quad needs four finite corners")
        if not self.is_convex() or abs(self.area) < min_area:
            raise DegenerateQuad("quad is not convex or has no area")
        if self.interior_angles().min() <= MIN_QUAD_ANGLE_DEG:
            raise DegenerateQuad("quad has a corner sharper than 10 degrees")
        return self

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.corners, -1, axis=0) - self.corners, axis=1)

    def to_list(self) -> list[list[float]]:
        return [[round(float(x), 3), round(float(y), 3)] for x, y in self.corners]


def _fit_edge_line(points: np.ndarray, a: np.ndarray, b: np.ndarray, centroid: np.ndarray):
    """Total-least-squares line through contour points along edge a->b.

    Returns (point, direction) with the line pushed 0.5 px outward, since
    contour points are boundary pixel centers and the stroke edge lies half
    a pixel further out.
    """
    d = b - a
    length = float(np.hypot(*d))
    if length < 4:
        return None
    u = d / length
    rel = points - a
    t = rel @ u
    dist = np.abs(_cross(u, rel))
    sel = (t > 0.12 * length) & (t < 0.88 * length) & (dist < max(3.0, 0.04 * length))
    if np.count_nonzero(sel) < 4:
        return None
    p = points[sel]
    mean = p.mean(axis=0)
    _, _, vt = np.linalg.svd(p - mean, full_matrices=False)
    direction = vt[0]
    normal = np.array([-direction[1], direction[0]])
    if np.dot(normal, mean - centroid) < 0:
        normal = -normal
    return mean + 0.5 * normal, direction


def _intersect(l1, l2) -> np.ndarray | None:
    (p1, d1), (p2, d2) = l1, l2
    den = _cross(d1, d2)
    if abs(den) < 1e-9:
        return None
    s = _cross(p2 - p1, d2) / den
    return p1 + s * d1


def refine_corners(contour: np.ndarray, approx: np.ndarray) -> np.ndarray:
    corners = order_corners(approx)
    pts = contour.reshape(-1, 2).astype(float)
    centroid = corners.mean(axis=0)
    lines = [_fit_edge_line(pts, corners[i], corners[(i + 1) % 4], centroid) for i in range(4)]
    out = corners.copy()
    span = float(np.min(np.linalg.norm(np.roll(corners, -1, axis=0) - corners, axis=1)))
    for i in range(4):
        prev_line, next_line = lines[(i - 1) % 4], lines[i]
        if prev_line is None or next_line is None:
            continue
        p = _intersect(prev_line, next_line)
        if p is not None and np.hypot(*(p - corners[i])) < 0.15 * span + 3:
            out[i] = p
    return out


def detect_quad(binary: np.ndarray, min_area: float | None = None) -> Quad:
    """Outer quadrilateral of the largest convex 4-gon among component outlines."""
    binary = np.ascontiguousarray(binary, dtype=np.uint8)
    h, w = binary.shape
    if min_area is None:
        min_area = max(100.0, 0.002 * h * w)
    contours, _ = cv2.findContours(binary, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    best = None
    best_area = 0.0
    for cnt in contours:
        if len(cnt) < 8:
            continue
        area = cv2.contourArea(cnt)
        if area < min_area or area <= best_area:
            continue
        approx = cv2.approxPolyDP(cnt, APPROX_TOLERANCE * cv2.arcLength(cnt, True), True)
        if len(approx) != 4 or not cv2.isContourConvex(approx):
            continue
        quad = Quad(order_corners(approx.reshape(4, 2)))
        if quad.interior_angles().min() <= MIN_QUAD_ANGLE_DEG:
            continue
        best, best_area = (cnt, approx), area
    if best is None:
        raise NoMarkerFound("no convex quadrilateral outline found", stage="detect_quad",
                            diagnostics={"contours": len(contours)})
    cnt, approx = best
    quad = Quad(refine_corners(cnt, approx.reshape(4, 2)))
    try:
        return quad.validate()
    except DegenerateQuad:
        return Quad(order_corners(approx.reshape(4, 2).astype(float))).validate()


# --------------------------------------------------------------------------
# rectification
# --------------------------------------------------------------------------

def homography_from_points(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform on four (or more) correspondences, h33 = 1."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    rows = []
    rhs = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rhs.append(u)
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.append(v)
    a = np.array(rows)
    b = np.array(rhs)
    if np.linalg.matrix_rank(a) < 8:
        raise DegenerateQuad("correspondences do not determine a homography")
    h, *_ = np.linalg.lstsq(a, b, rcond=None)
    return np.append(h, 1.0).reshape(3, 3)


def apply_homography(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    hom = np.c_[pts, np.ones(len(pts))] @ H.T
    return hom[:, :2] / hom[:, 2:3]


def square_corners(out_size: int) -> np.ndarray:
    a, b = -0.5, out_size - 0.5
    return np.array([[a, a], [b, a], [b, b], [a, b]])


def rectify(img: np.ndarray, q: Quad, out_size: int, *, return_homography: bool = False):
    """Resample the quad onto an ``out_size`` square (bilinear).

    The quad's outer corners land on the outer pixel edges of the output.
    """
    q.validate()
    H = homography_from_points(q.corners, square_corners(out_size))
    out = cv2.warpPerspective(img, H, (out_size, out_size), flags=cv2.INTER_LINEAR,
                              borderMode=cv2.BORDER_REPLICATE)
    return (out, H) if return_homography else out


def draw_quad_overlay(gray: np.ndarray, q: Quad) -> np.ndarray:
    rgb = cv2.cvtColor(gray, cv2.COLOR_GRAY2RGB)
    pts = np.rint(q.corners).astype(np.int32).reshape(-1, 1, 2)
    cv2.polylines(rgb, [pts], True, (255, 0, 0), 2)
    for i, (x, y) in enumerate(q.corners):
        cv2.circle(rgb, (int(round(x)), int(round(y))), 4, (0, 160, 0), -1)
    return rgb
