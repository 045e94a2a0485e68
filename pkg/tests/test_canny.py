import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from doorsom.canny import (
    CannyConfig,
    canny,
    canny_with_config,
    hysteresis,
    non_max_suppression,
    quantize_direction,
    sobel_gradients,
    thinness_violations,
)
from doorsom.imgcore import gaussian_blur

from conftest import step_image

SX = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], float)
SY = SX.T


def hand_sobel(a):
    """Loop-based 3x3 Sobel with replicated borders, as an oracle."""
    p = np.pad(a.astype(float), 1, mode="edge")
    h, w = a.shape
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            win = p[y : y + 3, x : x + 3]
            gx[y, x] = (win * SX).sum()
            gy[y, x] = (win * SY).sum()
    return gx, gy


def violating_pixels(edge, g):
    """Edge pixels with edge neighbors on both sides along their gradient bin."""
    q = quantize_direction(g.direction)
    p = np.pad(edge, 1)
    offs = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    out = np.zeros_like(edge)
    for y, x in zip(*np.nonzero(edge)):
        dy, dx = offs[int(q[y, x])]
        out[y, x] = p[1 + y + dy, 1 + x + dx] and p[1 + y - dy, 1 + x - dx]
    return out


def bfs_hysteresis(nms, lo, hi):
    """Flood fill from every seed through 8-neighbors >= lo."""
    h, w = nms.shape
    out = np.zeros((h, w), bool)
    stack = [(y, x) for y in range(h) for x in range(w) if nms[y, x] >= hi]
    for y, x in stack:
        out[y, x] = True
    while stack:
        y, x = stack.pop()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                v, u = y + dy, x + dx
                if 0 <= v < h and 0 <= u < w and not out[v, u] and nms[v, u] >= lo and nms[v, u] > 0:
                    out[v, u] = True
                    stack.append((v, u))
    return out


class TestSobel:
    def test_matches_hand_convolution(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 256, (9, 11))
        g = sobel_gradients(a)
        gx, gy = hand_sobel(a)
        np.testing.assert_array_equal(g.gx, gx)
        np.testing.assert_array_equal(g.gy, gy)
        np.testing.assert_allclose(g.magnitude, np.hypot(gx, gy), rtol=0, atol=1e-12)

    def test_vertical_step_direction(self):
        g = sobel_gradients(step_image(boundary=20))
        row = g.magnitude[10]
        assert set(np.flatnonzero(row == row.max())) == {19, 20}
        assert g.direction[10, 19] == pytest.approx(0.0)
        assert g.magnitude[10, 19] == 4 * 255

    def test_constant(self):
        g = sobel_gradients(np.full((5, 5), 77.0))
        assert not g.magnitude.any()

    def test_transpose(self):
        a = np.random.default_rng(2).integers(0, 256, (8, 13)).astype(float)
        g, t = sobel_gradients(a), sobel_gradients(a.T)
        np.testing.assert_array_equal(t.gx, g.gy.T)
        np.testing.assert_array_equal(t.gy, g.gx.T)
        np.testing.assert_array_equal(t.magnitude, g.magnitude.T)

    def test_direction_range(self):
        a = np.random.default_rng(3).integers(0, 256, (20, 20))
        d = sobel_gradients(a).direction
        assert (d > -np.pi).all() and (d <= np.pi).all()

    @pytest.mark.parametrize("shape", [(2, 5), (5, 2), (1, 1)])
    def test_too_small(self, shape):
        with pytest.raises(ValueError):
            sobel_gradients(np.zeros(shape))

    def test_dimensions_match(self):
        g = sobel_gradients(np.zeros((7, 4)))
        assert (g.width, g.height) == (4, 7)


class TestQuantize:
    @pytest.mark.parametrize("deg,bin_", [(0, 0), (44, 1), (46, 1), (90, 2), (-90, 2), (135, 3),
                                          (180, 0), (-45, 3), (170, 0), (-170, 0)])
    def test_bins(self, deg, bin_):
        assert quantize_direction(np.array([np.radians(deg)]))[0] == bin_


class TestNonMaxSuppression:
    def test_ramp_gives_single_ridge(self):
        a = np.zeros((12, 20))
        a[:, 9], a[:, 10], a[:, 11] = 64, 128, 192
        a[:, 12:] = 255
        nms = non_max_suppression(sobel_gradients(a))
        for row in nms[1:-1]:
            assert np.count_nonzero(row) == 1

    def test_blurred_step_single_ridge(self):
        a = gaussian_blur(step_image(boundary=15), 1.4)
        nms = non_max_suppression(sobel_gradients(a))
        assert all(np.count_nonzero(r) == 1 for r in nms)

    def test_constant_field(self):
        assert not non_max_suppression(sobel_gradients(np.full((6, 6), 9.0))).any()

    def test_isolated_pixel_kept(self):
        from doorsom.canny import GradientField
        mag = np.zeros((5, 5))
        mag[2, 2] = 3.0
        g = GradientField(mag, np.zeros_like(mag), mag, np.zeros_like(mag))
        out = non_max_suppression(g)
        assert out[2, 2] == 3.0
        assert np.count_nonzero(out) == 1

    def test_survivors_are_local_maxima(self):
        a = gaussian_blur(np.random.default_rng(4).integers(0, 256, (30, 30)).astype(float), 1.0)
        g = sobel_gradients(a)
        nms = non_max_suppression(g)
        q = quantize_direction(g.direction)
        offs = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
        p = np.pad(g.magnitude, 1)
        for y, x in zip(*np.nonzero(nms)):
            dy, dx = offs[int(q[y, x])]
            m = g.magnitude[y, x]
            assert m >= p[1 + y + dy, 1 + x + dx] - 1e-6
            assert m >= p[1 + y - dy, 1 + x - dx] - 1e-6


class TestHysteresis:
    def test_all_strong(self):
        assert hysteresis(np.full((3, 4), 5.0), 1.0, 2.0).edge.all()

    def test_chain_stops_below_lo(self):
        lo, hi = 1.0, 2.0
        e = hysteresis(np.array([[hi + 1, lo + 0.5, lo + 0.5, lo - 0.5]]), lo, hi)
        assert e.edge.tolist() == [[True, True, True, False]]

    def test_weak_without_seed(self):
        assert not hysteresis(np.array([[1.5, 1.5]]), 1.0, 2.0).edge.any()

    def test_diagonal_link(self):
        nms = np.array([[3.0, 0.0], [0.0, 1.5]])
        assert hysteresis(nms, 1.0, 2.0).edge[1, 1]

    @pytest.mark.parametrize("lo,hi", [(2.0, 2.0), (3.0, 1.0), (-1.0, 1.0)])
    def test_bad_thresholds(self, lo, hi):
        with pytest.raises(ValueError):
            hysteresis(np.zeros((2, 2)), lo, hi)

    @given(arrays(np.float64, (12, 12), elements=st.floats(0, 10)), st.floats(0, 5), st.floats(0.1, 5))
    @settings(max_examples=60, deadline=None)
    def test_matches_flood_fill(self, nms, lo, span):
        hi = lo + span
        np.testing.assert_array_equal(hysteresis(nms, lo, hi).edge, bfs_hysteresis(nms, lo, hi))

    @given(arrays(np.float64, (12, 12), elements=st.floats(0, 10)),
           st.floats(0, 4), st.floats(0.1, 3), st.floats(0, 3))
    @settings(max_examples=60, deadline=None)
    def test_monotonicity(self, nms, lo, span, bump):
        hi = lo + span
        base = hysteresis(nms, lo, hi).edge
        higher = hysteresis(nms, lo, hi + bump).edge
        assert not (higher & ~base).any()
        lower = hysteresis(nms, lo * 0.5, hi).edge
        assert not (base & ~lower).any()


class TestCanny:
    def test_vertical_step(self):
        e = canny(step_image(width=60, height=40, boundary=30)).edge
        for row in e[2:-2]:
            cols = np.flatnonzero(row[2:-2]) + 2
            assert len(cols) == 1
            assert abs(cols[0] - 29.5) <= 1

    def test_constant_image(self):
        assert canny(np.full((20, 20), 100.0)).count() == 0

    def test_config_wrapper(self):
        img = step_image()
        cfg = CannyConfig(sigma=1.0, lo=0.2, hi=0.4)
        np.testing.assert_array_equal(canny_with_config(img, cfg).edge, canny(img, 1.0, 0.2, 0.4).edge)

    def test_absolute_thresholds(self):
        img = step_image(lo=100, hi=110)
        assert canny(img, relative=False, lo=1000.0, hi=2000.0).count() == 0
        assert canny(img, relative=False, lo=1.0, hi=5.0).count() > 0

    def test_door_render_shows_posts_and_bottom(self, door_render):
        img, truth = door_render
        e = canny(img).edge
        d = truth.door
        mid = slice(d.y_top + 10, d.y_bottom - 10)
        for x in (d.x_left, d.x_right):
            cols = e[mid, x - 2 : x + 2].any(axis=1)
            assert cols.mean() > 0.95
        # the door meets the gap strip a few rows above the bottom boundary
        band = e[d.y_bottom - 3 - 2 : d.y_bottom + 2, d.x_left + 5 : d.x_right - 5]
        assert band.any(axis=0).mean() > 0.95

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_thinness(self, seed):
        rng = np.random.default_rng(seed)
        a = np.full((40, 40), float(rng.integers(0, 256)))
        for _ in range(4):
            x0, y0 = rng.integers(0, 30, 2)
            a[y0 : y0 + rng.integers(5, 20), x0 : x0 + rng.integers(5, 20)] = rng.integers(0, 256)
        a += rng.uniform(-5, 5, a.shape)
        img = np.clip(a, 0, 255)
        e = canny(img)
        g = sobel_gradients(gaussian_blur(img, 1.4))
        assert thinness_violations(e, g) == 0
        assert not violating_pixels(e.edge, g).any()

    def test_step_has_no_violations(self):
        img = step_image(60, 40, 30, noise=10, seed=1)
        assert thinness_violations(canny(img), sobel_gradients(gaussian_blur(img, 1.4))) == 0

    def test_localization_with_noise(self):
        hits = rows = 0
        for seed in range(10):
            e = canny(step_image(80, 60, 40, 60, 190, noise=10, seed=seed)).edge
            for row in e[2:-2]:
                rows += 1
                cols = np.flatnonzero(row[2:-2]) + 2
                hits += len(cols) > 0 and np.all(np.abs(cols - 39.5) <= 1.5)
        assert hits / rows >= 0.99
