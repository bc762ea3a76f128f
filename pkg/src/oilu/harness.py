"""Synthetic degradations and robustness sweeps.

Every distortion maps level 0 to the identity. Integer images come back as
uint8 (rounded, clamped); float images stay float so kernels can be
inspected directly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import cv2
import numpy as np

from .codec import OiluNumber
from .decoder import DecodeConfig, decode
from .errors import AmbiguousBands, DecodeError, NoData, NoMarkerFound, NoRingsFound, UndecodableRing
from .render import MarkerStyle, Polarity, render_marker

CSV_HEADER = [
    "kind", "level", "trials", "successes", "success_rate", "mean_ms", "p95_ms",
    "fail_no_marker", "fail_no_rings", "fail_undecodable", "fail_ambiguous",
]
WORKERS_ENV = "OILU_MAX_WORKERS"
DEFAULT_PAD_PX = 64
TILT_FOCAL_FACTOR = 1.2


class Kind(str, Enum):
    NOISE = "noise"
    BLUR = "blur"
    RADIAL = "radial"
    TILT = "tilt"
    CONTRAST = "contrast"


@dataclass(frozen=True)
class DistortionSpec:
    kind: Kind
    level: float
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.level < 0:
            raise ValueError("distortion level must be >= 0")


def _finish(src: np.ndarray, out: np.ndarray) -> np.ndarray:
    if src.dtype == np.uint8:
        return np.rint(out).clip(0, 255).astype(np.uint8)
    return out


def background_value(img: np.ndarray) -> float:
    """Median of the one-pixel frame, used to fill pixels mapped from outside."""
    frame = np.concatenate([img[0], img[-1], img[1:-1, 0], img[1:-1, -1]])
    return float(np.median(frame))


def apply_noise(img: np.ndarray, sigma: float, seed: int = 0) -> np.ndarray:
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    out = img.astype(np.float64) + rng.normal(0.0, sigma, size=img.shape)
    if img.dtype == np.uint8:
        return np.rint(out).clip(0, 255).astype(np.uint8)
    return np.clip(out, 0.0, 255.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def apply_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = cv2.sepFilter2D(img.astype(np.float64), cv2.CV_64F, k, k, borderType=cv2.BORDER_REPLICATE)
    return _finish(img, out)


def _remap(img: np.ndarray, map_x: np.ndarray, map_y: np.ndarray) -> np.ndarray:
    src = img.astype(np.float32)
    out = cv2.remap(src, map_x.astype(np.float32), map_y.astype(np.float32), cv2.INTER_LINEAR,
                    borderMode=cv2.BORDER_CONSTANT, borderValue=background_value(img))
    return _finish(img, out.astype(np.float64))


def radial_source_coords(shape: tuple[int, int], k1: float) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    r_max = math.hypot(cx, cy)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    scale = 1.0 + k1 * (dx * dx + dy * dy) / (r_max * r_max)
    return cx + dx * scale, cy + dy * scale


def apply_radial(img: np.ndarray, k1: float) -> np.ndarray:
    """Single-coefficient radial model: output pixel p samples c + (p - c)(1 + k1 r^2)."""
    if abs(k1) > 0.5:
        raise ValueError("|k1| must be <= 0.5")
    if k1 == 0:
        return img.copy()
    map_x, map_y = radial_source_coords(img.shape, k1)
    return _remap(img, map_x, map_y)


def tilt_homography(shape: tuple[int, int], theta_deg: float) -> np.ndarray:
    """Plane turned about the horizontal axis through the image center, seen by a
    pinhole with focal length 1.2 x width placed so that theta = 0 is the identity."""
    h, w = shape[:2]
    f = TILT_FOCAL_FACTOR * w
    cx, cy = (w - 1) / 2, (h - 1) / 2
    th = math.radians(theta_deg)
    m = np.array([[f, 0.0, 0.0], [0.0, f * math.cos(th), 0.0], [0.0, math.sin(th), f]])
    to_center = np.array([[1.0, 0, -cx], [0, 1.0, -cy], [0, 0, 1.0]])
    back = np.array([[1.0, 0, cx], [0, 1.0, cy], [0, 0, 1.0]])
    H = back @ m @ to_center
    return H / H[2, 2]


def apply_tilt(img: np.ndarray, theta_deg: float) -> np.ndarray:
    if not 0 <= theta_deg < 80:
        raise ValueError("tilt must lie in [0, 80) degrees")
    if theta_deg == 0:
        return img.copy()
    H = tilt_homography(img.shape, theta_deg)
    h, w = img.shape[:2]
    out = cv2.warpPerspective(img.astype(np.float32), H, (w, h), flags=cv2.INTER_LINEAR,
                              borderMode=cv2.BORDER_CONSTANT, borderValue=background_value(img))
    return _finish(img, out.astype(np.float64))


def apply_contrast(img: np.ndarray, c: float) -> np.ndarray:
    """out = 128 + c (in - 128), rounded."""
    if not 0 <= c <= 1:
        raise ValueError("contrast factor must lie in [0, 1]")
    out = 128.0 + c * (img.astype(np.float64) - 128.0)
    return _finish(img, out)


def apply_distortion(img: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    """Contrast levels are reductions: level x means factor 1 - x."""
    if spec.kind is Kind.NOISE:
        return apply_noise(img, spec.level, spec.rng_seed)
    if spec.kind is Kind.BLUR:
        return apply_blur(img, spec.level)
    if spec.kind is Kind.RADIAL:
        return apply_radial(img, spec.level)
    if spec.kind is Kind.TILT:
        return apply_tilt(img, spec.level)
    return apply_contrast(img, 1.0 - spec.level)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

FAILURE_KEYS = ("no_marker", "no_rings", "undecodable", "ambiguous", "misread")


def _failure_key(exc: DecodeError) -> str:
    if isinstance(exc, NoMarkerFound):
        return "no_marker"
    if isinstance(exc, NoRingsFound):
        return "no_rings"
    if isinstance(exc, UndecodableRing):
        return "undecodable"
    if isinstance(exc, AmbiguousBands):
        return "ambiguous"
    return "no_marker"


@dataclass
class EvalRecord:
    kind: str
    level: float
    trials: int
    successes: int
    mean_ms: float
    p95_ms: float
    failure_histogram: dict[str, int] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def csv_row(self, timing: bool = True) -> list[str]:
        f = self.failure_histogram
        return [
            self.kind, f"{self.level:g}", str(self.trials), str(self.successes),
            f"{self.success_rate:.4f}",
            f"{self.mean_ms:.3f}" if timing else "",
            f"{self.p95_ms:.3f}" if timing else "",
            str(f.get("no_marker", 0)), str(f.get("no_rings", 0)),
            str(f.get("undecodable", 0)), str(f.get("ambiguous", 0)),
        ]


def trial_code(seed: int, trial: int, length: int) -> OiluNumber:
    rng = np.random.default_rng([seed, trial])
    return OiluNumber(tuple(int(d) for d in rng.integers(0, 10, size=length)))


def trial_image(seed: int, trial: int, length: int, style: MarkerStyle, spec: DistortionSpec,
                pad_px: int = DEFAULT_PAD_PX) -> tuple[OiluNumber, np.ndarray]:
    code = trial_code(seed, trial, length)
    img = render_marker(code, style)
    bg = 255 if style.polarity is Polarity.DARK_ON_LIGHT else 0
    img = np.pad(img, pad_px, constant_values=bg)
    noise_seed = int(np.random.SeedSequence([seed, trial, 1]).generate_state(1)[0])
    return code, apply_distortion(img, DistortionSpec(spec.kind, spec.level, noise_seed))


def _run_trial(args) -> tuple[str, float]:
    seed, trial, length, style, spec, cfg, any_facet = args
    code, img = trial_image(seed, trial, length, style, spec)
    try:
        result = decode(img, cfg)
    except DecodeError as exc:
        return _failure_key(exc), float(exc.timing_ms or 0.0)
    ok = result.value == code or (any_facet and str(code) in result.facets.as_set())
    return ("ok" if ok else "misread"), result.timing_ms


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def evaluate_cell(spec: DistortionSpec, trials: int, *, style: MarkerStyle | None = None,
                  code_length: int = 4, cfg: DecodeConfig | None = None, seed: int = 0,
                  workers: int | None = None) -> EvalRecord:
    style = style or MarkerStyle()
    cfg = cfg or DecodeConfig()
    any_facet = spec.kind is Kind.TILT
    jobs = [(seed, t, code_length, style, spec, cfg, any_facet) for t in range(trials)]
    n_workers = _worker_count(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            outcomes = list(pool.map(_run_trial, jobs, chunksize=max(1, trials // (4 * n_workers))))
    else:
        outcomes = [_run_trial(j) for j in jobs]
    hist = {k: 0 for k in FAILURE_KEYS}
    successes = 0
    times = []
    for key, ms in outcomes:
        times.append(ms)
        if key == "ok":
            successes += 1
        else:
            hist[key] += 1
    return EvalRecord(kind=spec.kind.value, level=float(spec.level), trials=trials, successes=successes,
                      mean_ms=float(np.mean(times)), p95_ms=float(np.percentile(times, 95)),
                      failure_histogram=hist)


def run_eval(sweeps: Mapping[str, Sequence[float]], trials: int = 100, *, style: MarkerStyle | None = None,
             code_length: int = 4, cfg: DecodeConfig | None = None, seed: int = 0,
             rectify_kinds: Iterable[str] = ("tilt",), csv_path: str | Path | None = None,
             timing: bool = True, workers: int | None = None) -> list[EvalRecord]:
    """Decode ``trials`` seeded random codes per (kind, level) and tabulate outcomes.

    Trial ``i`` uses the same code in every cell, so sweeps are paired.
    Kinds listed in ``rectify_kinds`` decode with rectification on. A tilt
    trial succeeds when any facet of the decoded marker equals the code.
    With ``timing=False`` the timing columns of the CSV are left blank so the
    file is byte-reproducible.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = cfg or DecodeConfig()
    rectify_kinds = {Kind(k) for k in rectify_kinds}
    records = []
    for kind_name, levels in sweeps.items():
        kind = Kind(kind_name)
        kind_cfg = DecodeConfig(**{**cfg.__dict__, "rectify": True}) if kind in rectify_kinds else cfg
        for level in levels:
            records.append(evaluate_cell(DistortionSpec(kind, float(level)), trials, style=style,
                                         code_length=code_length, cfg=kind_cfg, seed=seed, workers=workers))
    if csv_path is not None:
        Path(csv_path).write_text(records_to_csv(records, timing=timing), encoding="utf-8")
    return records


def records_to_csv(records: Sequence[EvalRecord], timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row(timing))
    return buf.getvalue()


def read_csv(path: str | Path) -> list[EvalRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(EvalRecord(
                kind=row["kind"], level=float(row["level"]), trials=int(row["trials"]),
                successes=int(row["successes"]),
                mean_ms=float(row["mean_ms"] or "nan"), p95_ms=float(row["p95_ms"] or "nan"),
                failure_histogram={
                    "no_marker": int(row["fail_no_marker"]), "no_rings": int(row["fail_no_rings"]),
                    "undecodable": int(row["fail_undecodable"]), "ambiguous": int(row["fail_ambiguous"]),
                },
            ))
    return out


# --------------------------------------------------------------------------
# config and plots
# --------------------------------------------------------------------------

def load_sweep_config(path: str | Path | None = None) -> dict[str, Any]:
    """Read a sweep config; ``None`` loads the bundled default grid."""
    if path is None:
        text = resources.files("oilu").joinpath("data/default_sweep.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    cfg = json.loads(text)
    if not isinstance(cfg, dict) or not isinstance(cfg.get("sweeps"), dict) or not cfg["sweeps"]:
        raise ValueError("sweep config needs a non-empty 'sweeps' object")
    for kind, levels in cfg["sweeps"].items():
        Kind(kind)
        if not isinstance(levels, list) or not levels or any(
                not isinstance(v, (int, float)) or v < 0 for v in levels):
            raise ValueError(f"levels for {kind!r} must be a non-empty list of numbers >= 0")
    for key in ("trials", "code_length", "seed"):
        if key in cfg and (not isinstance(cfg[key], int) or cfg[key] < (0 if key == "seed" else 1)):
            raise ValueError(f"{key!r} must be a positive integer")
    return cfg


def render_curves(records: Sequence[EvalRecord], out_dir: str | Path) -> list[Path]:
    """One success-rate-versus-level PNG per distortion kind."""
    if not records:
        raise NoData("no records to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_kind: dict[str, list[EvalRecord]] = {}
    for r in records:
        by_kind.setdefault(r.kind, []).append(r)
    paths = []
    for kind, recs in by_kind.items():
        recs = sorted(recs, key=lambda r: r.level)
        fig, ax = plt.subplots(figsize=(4.8, 3.2), dpi=100)
        ax.plot([r.level for r in recs], [100 * r.success_rate for r in recs], marker="o")
        ax.set_ylim(-5, 105)
        ax.set_xlabel(f"{kind} level")
        ax.set_ylabel("success rate (%)")
        ax.set_title(kind)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"{kind}.png"
        fig.savefig(path, format="png", metadata={"Software": None})
        plt.close(fig)
        paths.append(path)
    return paths
