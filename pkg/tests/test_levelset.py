import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oilu import levelset, vision
from oilu.codec import Side, pattern_to_digit
from oilu.decoder import decode
from oilu.errors import NoRingsFound, OutOfDomain, UndecodableRing
from oilu.levelset import OccupancyTable, RingBands
from oilu.render import expected_side_pixel_count, layout_rings, render_marker
from oilu.vision import Quad
from oracles import brute_force_edt

T, R, B, L = Side.TOP, Side.RIGHT, Side.BOTTOM, Side.LEFT


def _strokes(img):
    t = vision.otsu_threshold(img)
    return vision.binarize(img, t)


def _pipeline(code):
    img = render_marker(code)
    g = layout_rings(code)
    strokes = _strokes(img)
    quad = Quad(g.outer_corners(0))
    dm = levelset.distance_map(quad, strokes.shape)
    return img, g, strokes, quad, dm


# -- EDT ------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
def test_edt_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((32, 32)) < rng.uniform(0.01, 0.3)
    mask[rng.integers(32), rng.integers(32)] = True
    assert np.array_equal(levelset.edt_squared(mask), brute_force_edt(mask))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_edt_property_non_square(h, w, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((h, w)) < 0.05
    mask[rng.integers(h), rng.integers(w)] = True
    d2 = levelset.edt_squared(mask)
    assert np.array_equal(d2, brute_force_edt(mask))
    assert (d2[mask] == 0).all()


def test_edt_empty_seeds():
    d2 = levelset.edt_squared(np.zeros((5, 7), bool))
    assert (d2 == levelset.INF).all()


def test_square_depth_is_analytic():
    S = 41
    quad = Quad(np.array([[-0.5, -0.5], [S - 0.5, -0.5], [S - 0.5, S - 0.5], [-0.5, S - 0.5]]))
    dm = levelset.distance_map(quad, (S, S))
    gy, gx = np.mgrid[:S, :S]
    cheb = np.minimum(np.minimum(gy, gx), np.minimum(S - 1 - gy, S - 1 - gx))
    assert np.array_equal(dm.full_depth(), cheb.astype(float))
    assert dm.max_depth == pytest.approx((S - 1) / 2)


def test_depth_is_lipschitz():
    quad = Quad(np.array([[10.2, 5.1], [90.7, 14.9], [80.3, 95.2], [4.8, 70.6]]))
    d = levelset.distance_map(quad, (100, 100)).full_depth()
    for axis in (0, 1):
        diff = np.abs(np.diff(d, axis=axis))
        assert np.nanmax(diff) <= 1.0 + 1e-9
    dd = np.abs(d[1:, 1:] - d[:-1, :-1])
    assert np.nanmax(dd) <= np.sqrt(2) + 1e-9


def test_depth_nan_outside():
    quad = Quad(np.array([[20.0, 20.0], [60.0, 20.0], [60.0, 60.0], [20.0, 60.0]]))
    dm = levelset.distance_map(quad, (80, 80))
    full = dm.full_depth()
    assert np.isnan(full[0, 0]) and np.isnan(full[10, 40])
    assert full[40, 40] == pytest.approx(20.0)  # corner on a pixel center: that pixel is boundary


# -- bands ----------------------------------------------------------------

@pytest.mark.parametrize("code", ["4670", "1", "0", "2", "1111"])
def test_band_centers_on_stroke_midlines(code):
    _, g, strokes, _, dm = _pipeline(code)
    bands = levelset.estimate_ring_bands(dm, strokes)
    assert bands.ring_count == len(code)
    for i, c in enumerate(bands.centers, start=1):
        lo, hi = g.stroke_depth_range(i)
        assert abs(c - (lo + hi) / 2) <= 2.0
    assert bands.pitch_estimate_px == pytest.approx(48, abs=2)
    assert all(np.diff([bands.border_center] + bands.centers) > 0)


def test_blank_interior_has_no_rings():
    img = np.full((200, 200), 255, np.uint8)
    img[20:180, 20:32] = 0
    img[20:180, 168:180] = 0
    img[20:32, 20:180] = 0
    img[168:180, 20:180] = 0
    strokes = _strokes(img)
    quad = Quad(np.array([[19.5, 19.5], [179.5, 19.5], [179.5, 179.5], [19.5, 179.5]]))
    with pytest.raises(NoRingsFound):
        levelset.estimate_ring_bands(levelset.distance_map(quad, img.shape), strokes)


def test_saturated_band_with_one_flipped_pixel_is_one_ring():
    _, g, strokes, _, dm = _pipeline("0358")
    strokes = strokes.copy()
    # knock out one stroke pixel in the middle of ring 1's top side
    c = (g.canvas_px - 1) / 2
    y = int(round(c - g.half_width(1) + g.stroke_px / 2))
    strokes[y, int(c)] = 0
    bands = levelset.estimate_ring_bands(dm, strokes)
    assert bands.ring_count == 4


def test_plateau_peaks_merge_but_separate_bands_do_not():
    smooth = np.array([0, 1, 1, 0.999, 1, 1, 0, 0, 0.8, 0.8, 0])
    assert levelset._merge_plateau_peaks([1, 4, 8], smooth) == [1, 8]
    assert levelset._merge_plateau_peaks([2, 5], np.array([0, 0.6, 0.7, 0.2, 0.2, 0.9])) == [2, 5]


def test_hint_keeps_strongest_peaks():
    _, _, strokes, _, dm = _pipeline("4670")
    assert levelset.estimate_ring_bands(dm, strokes, ring_count_hint=4).ring_count == 4


# -- labels -----------------------------------------------------------------

def _truth_labels(g):
    c = (g.canvas_px - 1) / 2
    gy, gx = np.mgrid[: g.canvas_px, : g.canvas_px]
    cheb = np.maximum(np.abs(gy - c), np.abs(gx - c))
    truth = np.full(cheb.shape, -1)
    for ring in range(g.ring_count + 1):
        h = g.half_width(ring)
        truth[(cheb > h - g.stroke_px) & (cheb <= h)] = ring
    return truth


@pytest.mark.parametrize("code", ["4670", "0000", "13"])
def test_label_accuracy(code):
    _, g, strokes, _, dm = _pipeline(code)
    bands = levelset.estimate_ring_bands(dm, strokes)
    labels = levelset.assign_ring_labels(dm, bands, strokes)
    truth = _truth_labels(g)
    code_px = (strokes == 1) & (truth >= 1)
    assert (labels[code_px] == truth[code_px]).mean() >= 0.99
    assert (labels[truth == 0] == 0).all()  # border stays unlabeled


def test_label_band_membership():
    dm = levelset.DistanceMap(depth=np.array([[95.2, 76.8, 100.0]]), inside=np.ones((1, 3), bool),
                              boundary=np.zeros((1, 3), bool), origin=(0, 0), shape=(1, 3), max_depth=100)
    bands = RingBands(pitch_estimate_px=48, centers=[48.0, 96.0], half_width=19.2, border_center=0.0)
    labels = levelset.assign_ring_labels(dm, bands, np.ones((1, 3), np.uint8))
    # 76.8 is exactly 19.2 below 96: outside the open band
    assert labels.tolist() == [[2, 0, 2]]


# -- triangles ----------------------------------------------------------------

UNIT = Quad(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def test_side_of_examples():
    assert levelset.side_of((0.5, 0.1), UNIT) is T
    assert levelset.side_of((0.9, 0.5), UNIT) is R
    assert levelset.side_of((0.5, 0.9), UNIT) is B
    assert levelset.side_of((0.1, 0.5), UNIT) is L
    assert levelset.side_of((0.5, 0.5), UNIT) is levelset.side_of((0.5, 0.5), UNIT)
    with pytest.raises(OutOfDomain):
        levelset.side_of((1.5, 0.5), UNIT)


def test_diagonal_ties_go_counter_clockwise():
    # on the upper-left half-diagonal between TOP and LEFT; CCW of TOP is LEFT
    # (binary fractions so the points sit exactly on the diagonals)
    assert levelset.side_of((0.25, 0.25), UNIT) is L
    assert levelset.side_of((0.75, 0.25), UNIT) is T
    assert levelset.side_of((0.75, 0.75), UNIT) is R
    assert levelset.side_of((0.25, 0.75), UNIT) is B


def test_triangle_partition_covers_every_point():
    rng = np.random.default_rng(0)
    xs, ys = rng.random(5000), rng.random(5000)
    sides = levelset.side_indices(xs, ys, UNIT)
    assert set(np.unique(sides)) == {0, 1, 2, 3}
    # 4-fold symmetry: rotating the point set CCW about the center moves each side to the previous one
    rot = levelset.side_indices(ys, 1 - xs, UNIT)
    off_diag = np.abs(np.abs(xs - 0.5) - np.abs(ys - 0.5)) > 1e-9
    assert np.array_equal(rot[off_diag], (sides[off_diag] - 1) % 4)


# -- occupancy and bits -------------------------------------------------------

def _table(code):
    _, g, strokes, quad, dm = _pipeline(code)
    bands = levelset.estimate_ring_bands(dm, strokes)
    labels = levelset.assign_ring_labels(dm, bands, strokes)
    return g, levelset.occupancy(labels, quad, bands.ring_count), labels


def test_occupancy_full_ring_near_expected():
    g, table, _ = _table("0000")
    for r in range(4):
        for s in Side:
            exp = expected_side_pixel_count(g, r + 1, s)
            assert abs(table.counts[r, s] - exp) <= 0.15 * exp


def test_occupancy_single_side():
    _, table, _ = _table("1")
    counts = table.counts[0]
    assert counts.argmax() == B
    assert all(counts[s] <= 0.05 * counts[B] for s in (T, R, L))


def test_occupancy_conservation_and_empty():
    _, table, labels = _table("4670")
    assert table.counts.sum() == np.count_nonzero(labels)
    empty = levelset.occupancy(np.zeros((10, 10), np.int32), UNIT, 3)
    assert empty.counts.shape == (3, 4) and empty.counts.sum() == 0


def test_bits_examples():
    bits = levelset.bits_from_counts(OccupancyTable(np.array([[1000, 20, 950, 980]])))
    assert bits[0].pattern == {T, B, L} and pattern_to_digit(bits[0].pattern) == 9
    assert bits[0].threshold == 500
    bits = levelset.bits_from_counts(OccupancyTable(np.array([[500, 490, 510, 505]])))
    assert pattern_to_digit(bits[0].pattern) == 0
    assert 0 <= bits[0].margin <= 1
    with pytest.raises(UndecodableRing) as info:
        levelset.bits_from_counts(OccupancyTable(np.array([[12, 9, 11, 10]])), [1000.0], floor_factor=0.1)
    assert info.value.index == 1
    lax = levelset.bits_from_counts(OccupancyTable(np.array([[12, 9, 11, 10]])), [1000.0], strict=False)
    assert not lax[0].valid and lax[0].threshold == 100


def test_bits_reject_opposite_pair():
    with pytest.raises(UndecodableRing):
        levelset.bits_from_counts(OccupancyTable(np.array([[800, 0, 790, 10]])))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_counts_rotate_with_the_image(k):
    img = render_marker("4670")
    a = decode(img).debug["counts"]
    b = decode(np.ascontiguousarray(np.rot90(img, k))).debug["counts"]
    # a CCW quarter turn moves side s to s-1, so new[:, j] = old[:, j+k]
    expected = a[:, (np.arange(4) + k) % 4]
    assert np.abs(b - expected).max() <= 0.01 * a.max()
