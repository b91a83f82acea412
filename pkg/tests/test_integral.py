import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_integral, brute_rect_sum
from rangeface.integral import Rect, box_sum_map, integral_image, rect_sum


def test_table_matches_double_sum():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(13, 17)).astype(float)
    np.testing.assert_array_equal(integral_image(img).table, brute_integral(img))


def test_zero_border_and_readonly():
    ii = integral_image(np.ones((4, 5)))
    assert ii.shape == (4, 5)
    assert np.all(ii.table[0] == 0) and np.all(ii.table[:, 0] == 0)
    assert ii.table[4, 5] == 20
    with pytest.raises(ValueError):
        ii.table[1, 1] = 3


def test_single_pixel_image():
    ii = integral_image([[7.0]])
    assert rect_sum(ii, Rect(0, 0, 0, 0)) == 7.0


def test_rejects_bad_shapes():
    for bad in (np.zeros(5), np.zeros((0, 3)), np.zeros((2, 2, 2))):
        with pytest.raises(ValueError):
            integral_image(bad)


def test_uint8_accumulates_in_float64():
    img = np.full((300, 300), 255, dtype=np.uint8)
    ii = integral_image(img)
    assert ii.table.dtype == np.float64
    assert ii.table[-1, -1] == 255 * 300 * 300


def test_rect_clipping():
    img = np.arange(20.0).reshape(4, 5)
    ii = integral_image(img)
    assert rect_sum(ii, Rect(-3, -3, 10, 10)) == img.sum()
    assert rect_sum(ii, Rect(6, 0, 9, 3)) == 0.0
    assert rect_sum(ii, Rect(2, 1, 1, 3)) == 0.0
    assert rect_sum(ii, Rect(1, 1, 1, 1)) == img[1, 1]


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1),
    st.integers(-3, 14), st.integers(-3, 14), st.integers(-3, 14), st.integers(-3, 14),
)
def test_rect_sum_oracle(h, w, seed, a, b, c, d):
    img = np.random.default_rng(seed).integers(-50, 50, size=(h, w)).astype(float)
    r = Rect(min(a, c), min(b, d), max(a, c), max(b, d))
    assert rect_sum(integral_image(img), r) == brute_rect_sum(img, *r)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 9), st.integers(0, 9), st.integers(0, 9), st.integers(0, 9))
def test_additivity_over_partition(seed, left, top, cut_x, cut_y):
    img = np.random.default_rng(seed).normal(size=(10, 10))
    ii = integral_image(img)
    right, bottom = 9, 9
    cx = min(max(cut_x, left), right)
    cy = min(max(cut_y, top), bottom)
    whole = rect_sum(ii, Rect(left, top, right, bottom))
    parts = (
        rect_sum(ii, Rect(left, top, cx, cy))
        + rect_sum(ii, Rect(cx + 1, top, right, cy))
        + rect_sum(ii, Rect(left, cy + 1, cx, bottom))
        + rect_sum(ii, Rect(cx + 1, cy + 1, right, bottom))
    )
    assert parts == pytest.approx(whole, rel=1e-9, abs=1e-9)


def test_real_valued_rect_sums_relative_tolerance():
    rng = np.random.default_rng(5)
    img = rng.uniform(-1e3, 1e3, size=(40, 40))
    ii = integral_image(img)
    for _ in range(200):
        x0, x1 = sorted(rng.integers(0, 40, 2))
        y0, y1 = sorted(rng.integers(0, 40, 2))
        expect = brute_rect_sum(img, x0, y0, x1, y1)
        assert rect_sum(ii, Rect(x0, y0, x1, y1)) == pytest.approx(expect, rel=1e-6, abs=1e-6)


def test_box_sum_map_matches_rect_sum():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 10, size=(9, 11)).astype(float)
    ii = integral_image(img)
    m = box_sum_map(ii, -2, 1, -1, 3)
    for y in range(9):
        for x in range(11):
            inside = y - 2 >= 0 and y + 1 < 9 and x - 1 >= 0 and x + 3 < 11
            expect = rect_sum(ii, Rect(x - 1, y - 2, x + 3, y + 1)) if inside else 0.0
            assert m[y, x] == expect


def test_box_sum_map_rejects_empty_box():
    with pytest.raises(ValueError):
        box_sum_map(integral_image(np.ones((4, 4))), 1, 0, 0, 0)
