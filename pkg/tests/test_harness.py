import json
import math

import numpy as np
import pytest

from oilu import harness, vision
from oilu.errors import NoData
from oilu.harness import DistortionSpec, EvalRecord, Kind
from oilu.render import layout_rings, render_marker


def _frame(code="4670", pad=64):
    return np.pad(render_marker(code), pad, constant_values=255)


# -- noise ------------------------------------------------------------------

def test_noise_statistics_and_determinism():
    img = np.full((400, 400), 128, np.uint8)
    out = harness.apply_noise(img, 20, seed=3)
    sd = (out.astype(float) - 128).std()
    assert abs(sd - 20) <= 0.05 * 20
    assert np.array_equal(out, harness.apply_noise(img, 20, seed=3))
    assert not np.array_equal(out, harness.apply_noise(img, 20, seed=4))
    assert np.array_equal(harness.apply_noise(img, 0, seed=3), img)
    assert out.dtype == np.uint8


# -- blur -------------------------------------------------------------------

def test_blur_identity_and_constant():
    img = _frame()
    assert np.array_equal(harness.apply_blur(img, 0), img)
    flat = np.full((50, 60), 77, np.uint8)
    assert np.array_equal(harness.apply_blur(flat, 3), flat)


@pytest.mark.parametrize("sigma", [0.8, 2.0, 3.5])
def test_blur_impulse_is_gaussian(sigma):
    n = 61
    img = np.zeros((n, n))
    img[n // 2, n // 2] = 1.0
    out = harness.apply_blur(img, sigma)
    r = math.ceil(3 * sigma)
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    g = np.exp(-(x**2 + y**2) / (2 * sigma**2))
    g /= g.sum()
    c = n // 2
    assert np.abs(out[c - r : c + r + 1, c - r : c + r + 1] - g).max() <= 1e-3
    assert out.sum() == pytest.approx(1.0)


# -- radial -----------------------------------------------------------------

def test_radial_identity_and_center():
    img = _frame()
    assert np.array_equal(harness.apply_radial(img, 0), img)
    xs, ys = harness.radial_source_coords((101, 101), 0.3)
    assert xs[50, 50] == 50 and ys[50, 50] == 50
    with pytest.raises(ValueError):
        harness.apply_radial(img, 0.6)


def test_radial_matches_analytic_position():
    k1, n = 0.2, 301
    c = (n - 1) / 2
    r_max = math.hypot(c, c)
    a = 100.0  # input column offset of a vertical line
    img = np.full((n, n), 255, np.uint8)
    img[:, int(c + a)] = 0
    out = harness.apply_radial(img, k1).astype(float)
    # output radius rho solves rho (1 + k1 rho^2 / r_max^2) = a on the center row
    roots = np.roots([k1 / r_max**2, 0, 1, -a])
    rho = float(min(r.real for r in roots if abs(r.imag) < 1e-9 and r.real > 0))
    row = 255 - out[int(c)]
    found = (row * np.arange(n)).sum() / row.sum() - c
    assert abs(found - rho) <= 1.0


# -- tilt -------------------------------------------------------------------

def test_tilt_identity_and_range():
    img = _frame()
    assert np.array_equal(harness.apply_tilt(img, 0), img)
    assert np.allclose(harness.tilt_homography(img.shape, 0), np.eye(3))
    with pytest.raises(ValueError):
        harness.apply_tilt(img, 80)


@pytest.mark.parametrize("theta", [20, 45])
def test_tilt_projects_corners(theta):
    img = _frame()
    H = harness.tilt_homography(img.shape, theta)
    truth = vision.apply_homography(H, layout_rings("4670").outer_corners(0) + 64)
    warped = harness.apply_tilt(img, theta)
    binary = vision.binarize(warped, vision.otsu_threshold(warped))
    q = vision.detect_quad(vision.remove_small_components(binary, 40))
    assert np.abs(q.corners - truth).max() <= 1.5
    # the lower half leans away from the camera, so the bottom edge shrinks
    top = np.linalg.norm(q.corners[1] - q.corners[0])
    bottom = np.linalg.norm(q.corners[2] - q.corners[3])
    assert bottom < top


# -- contrast ---------------------------------------------------------------

def test_contrast_examples():
    img = np.array([[0, 255]], np.uint8)
    assert harness.apply_contrast(img, 0.5).tolist() == [[64, 192]]
    assert np.array_equal(harness.apply_contrast(img, 1.0), img)
    assert harness.apply_contrast(img, 0.0).tolist() == [[128, 128]]
    spec = DistortionSpec(Kind.CONTRAST, 0.5)
    assert harness.apply_distortion(img, spec).tolist() == [[64, 192]]


@pytest.mark.parametrize("kind", list(Kind))
def test_level_zero_is_identity(kind):
    img = _frame()
    assert np.array_equal(harness.apply_distortion(img, DistortionSpec(kind, 0, rng_seed=9)), img)


def test_spec_validation():
    with pytest.raises(ValueError):
        DistortionSpec("noise", -1)
    with pytest.raises(ValueError):
        DistortionSpec("fog", 1)


# -- evaluation -------------------------------------------------------------

SMALL_SWEEP = {"noise": [0, 240], "blur": [0, 2], "tilt": [0, 30], "contrast": [0, 0.9], "radial": [0, 0.1]}


@pytest.fixture(scope="module")
def small_run():
    return harness.run_eval(SMALL_SWEEP, 8, seed=5, timing=False)


def test_level_zero_always_decodes(small_run):
    for r in small_run:
        if r.level == 0:
            assert r.successes == r.trials, r


def test_failure_conservation(small_run):
    for r in small_run:
        assert r.successes + sum(r.failure_histogram.values()) == r.trials
        assert set(r.failure_histogram) == set(harness.FAILURE_KEYS)


def test_heavy_noise_produces_failures(small_run):
    worst = next(r for r in small_run if r.kind == "noise" and r.level == 240)
    assert worst.successes < worst.trials


def test_csv_is_byte_stable(tmp_path):
    a = harness.run_eval({"noise": [0, 40]}, 4, seed=1, timing=False, csv_path=tmp_path / "a.csv")
    harness.run_eval({"noise": [0, 40]}, 4, seed=1, timing=False, csv_path=tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0].split(",") == harness.CSV_HEADER
    back = harness.read_csv(tmp_path / "a.csv")
    assert [(r.kind, r.level, r.successes) for r in back] == [(r.kind, r.level, r.successes) for r in a]


def test_timing_columns_filled():
    rec = harness.evaluate_cell(DistortionSpec("blur", 1), 3)
    row = rec.csv_row(timing=True)
    assert float(row[5]) > 0 and float(row[6]) >= float(row[5]) * 0.5


def test_workers_give_same_outcomes(monkeypatch):
    a = harness.evaluate_cell(DistortionSpec("noise", 80), 6, seed=2, workers=1)
    monkeypatch.setenv(harness.WORKERS_ENV, "2")
    b = harness.evaluate_cell(DistortionSpec("noise", 80), 6, seed=2)
    assert a.successes == b.successes and a.failure_histogram == b.failure_histogram


def test_trial_codes_are_paired_and_seeded():
    assert harness.trial_code(0, 3, 4) == harness.trial_code(0, 3, 4)
    codes = {str(harness.trial_code(0, t, 4)) for t in range(50)}
    assert len(codes) > 40


# -- config and plots -------------------------------------------------------

def test_bundled_config():
    cfg = harness.load_sweep_config()
    assert set(cfg["sweeps"]) == {k.value for k in Kind}
    assert all(levels[0] == 0 for levels in cfg["sweeps"].values())


@pytest.mark.parametrize("bad", [
    {}, {"sweeps": {}}, {"sweeps": {"fog": [0]}}, {"sweeps": {"noise": [-1]}},
    {"sweeps": {"noise": [0]}, "trials": 0},
])
def test_config_validation(tmp_path, bad):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(ValueError):
        harness.load_sweep_config(p)


def test_render_curves(tmp_path, small_run):
    paths = harness.render_curves(small_run, tmp_path)
    assert sorted(p.name for p in paths) == sorted(f"{k}.png" for k in SMALL_SWEEP)
    assert all(p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in paths)
    with pytest.raises(NoData):
        harness.render_curves([], tmp_path)


def test_record_rate():
    r = EvalRecord("noise", 10, 200, 150, 1.0, 2.0, {})
    assert r.success_rate == 0.75
    assert r.csv_row(timing=False)[4:7] == ["0.7500", "", ""]
