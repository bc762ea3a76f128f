"""Embedded oracle checks run by ``oilu selftest``."""

from __future__ import annotations

import itertools
import time
from fractions import Fraction
from typing import Callable

import numpy as np

from . import codec
from .decoder import decode
from .levelset import edt_squared
from .render import MarkerStyle, Polarity, render_marker
from .vision import otsu_from_histogram

FACETS_4670 = {"4670", "2450", "8230", "6890"}


class SelfTestFailure(AssertionError):
    pass


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise SelfTestFailure(msg)


def check_codec() -> None:
    for d in range(10):
        _check(codec.pattern_to_digit(codec.digit_to_pattern(d)) == d, f"round trip broken for {d}")
        _check(codec.rotate_digit(d, 0) == d, f"rotation by 0 moves {d}")
        for a, b in itertools.product(range(4), repeat=2):
            _check(codec.rotate_digit(codec.rotate_digit(d, a), b) == codec.rotate_digit(d, a + b),
                   f"group law fails for {d}, {a}, {b}")
        for k in range(4):
            via_pattern = codec.pattern_to_digit(codec.rotate_pattern_ccw(codec.digit_to_pattern(d), k))
            _check(via_pattern == codec.rotate_digit(d, k), f"digit {d} does not commute with rotation")
    valid = [m for m in range(16) if codec.is_valid_pattern(codec.mask_to_pattern(m))]
    _check(len(valid) == 13, f"{len(valid)} valid side sets instead of 13")
    _check(codec.facet_values("4670").as_set() == FACETS_4670, "facet group of 4670 is wrong")


def brute_force_sq_distance(seeds: np.ndarray) -> np.ndarray:
    pts = np.argwhere(seeds)
    ys, xs = np.indices(seeds.shape)
    d = (ys[..., None] - pts[:, 0]) ** 2 + (xs[..., None] - pts[:, 1]) ** 2
    return d.min(axis=-1)


def check_edt(masks: int = 20, size: int = 24, seed: int = 1) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(masks):
        m = rng.random((size, size)) < rng.uniform(0.005, 0.2)
        m[rng.integers(size), rng.integers(size)] = True
        _check(np.array_equal(edt_squared(m), brute_force_sq_distance(m)), "EDT differs from brute force")


def exhaustive_otsu(hist) -> int:
    total = sum(hist)
    best_t, best = None, None
    for t in range(256):
        w0 = sum(hist[: t + 1])
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        m0 = Fraction(sum(i * hist[i] for i in range(t + 1)), w0)
        m1 = Fraction(sum(i * hist[i] for i in range(t + 1, 256)), w1)
        var = Fraction(w0 * w1, total * total) * (m0 - m1) ** 2
        if best is None or var > best:
            best_t, best = t, var
    return best_t


def check_otsu(histograms: int = 10, seed: int = 2) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(histograms):
        hist = [int(v) for v in rng.integers(0, 50, 256) * (rng.random(256) < 0.3)]
        hist[int(rng.integers(256))] += 1
        hist[int(rng.integers(256))] += 1
        if sum(1 for v in hist if v) < 2:
            continue
        _check(otsu_from_histogram(hist) == exhaustive_otsu(hist), "Otsu differs from exhaustive search")


def check_roundtrip(count: int = 12, seed: int = 3) -> None:
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = codec.OiluNumber(tuple(int(d) for d in rng.integers(0, 10, int(rng.integers(1, 5)))))
        pol = Polarity.DARK_ON_LIGHT if i % 2 == 0 else Polarity.LIGHT_ON_DARK
        got = decode(render_marker(n, MarkerStyle(polarity=pol))).value
        _check(got == n, f"decoded {got} from a render of {n}")


SUITES: dict[str, Callable[[], None]] = {
    "codec": check_codec,
    "edt": check_edt,
    "otsu": check_otsu,
    "roundtrip": check_roundtrip,
}


def run_selftest() -> list[tuple[str, bool, float, str]]:
    """Run every suite; returns (name, passed, seconds, message) tuples."""
    results = []
    for name, fn in SUITES.items():
        start = time.perf_counter()
        try:
            fn()
            ok, msg = True, ""
        except Exception as exc:  # a failing suite is reported, not raised
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, time.perf_counter() - start, msg))
    return results
