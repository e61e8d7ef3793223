import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelmine.corpus import BoundingBox, Figure
from gelmine.features import (FEATURE_NAMES, N_FEATURES, DegenerateRegionError, cooccurrence,
                              extract_features, feature_matrix, features_csv, grayscale_histogram,
                              haralick_features, haralick_gray, quantize, read_features_csv)

import oracles
from conftest import figure, graphic, text, white


def gray_figure(g):
    return figure(np.repeat(np.asarray(g, dtype=np.uint8)[:, :, None], 3, axis=2))


def col(name):
    return FEATURE_NAMES.index(name)


class TestHistogram:
    def test_black(self):
        h = grayscale_histogram(figure(np.zeros((8, 8, 3), np.uint8)), BoundingBox(0, 0, 8, 8))
        np.testing.assert_array_equal(h, np.eye(16)[0])

    def test_gray_128(self):
        h = grayscale_histogram(gray_figure(np.full((5, 5), 128)), BoundingBox(0, 0, 5, 5))
        np.testing.assert_array_equal(h, np.eye(16)[8])

    def test_half_and_half(self):
        g = np.zeros((4, 8))
        g[:, 4:] = 255
        h = grayscale_histogram(gray_figure(g), BoundingBox(0, 0, 8, 4))
        assert h[0] == 0.5 and h[15] == 0.5 and h.sum() == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_sums_to_one(self, seed):
        rng = np.random.default_rng(seed)
        g = rng.integers(0, 256, (13, 11))
        h = grayscale_histogram(gray_figure(g), BoundingBox(2, 1, 9, 12))
        assert abs(h.sum() - 1.0) < 1e-9
        np.testing.assert_allclose(h * 77, np.bincount(g[1:12, 2:9].ravel() // 16, minlength=16))


class TestGlcm:
    def test_quantize(self):
        np.testing.assert_array_equal(quantize(np.array([0, 7, 8, 255], np.uint8)), [0, 0, 1, 31])

    def test_matches_oracle_matrix(self, rng):
        q = rng.integers(0, 4, (5, 6))
        for dx, dy in ((1, 0), (1, 1), (0, 1), (-1, 1)):
            np.testing.assert_allclose(cooccurrence(q, dx, dy, 4), oracles.glcm(q.tolist(), dx, dy, 4))

    def test_no_pairs(self):
        assert cooccurrence(np.zeros((1, 5), np.int64), 0, 1, 32) is None


class TestHaralick:
    def test_constant_region(self):
        f = haralick_features(gray_figure(np.full((10, 10), 90)), BoundingBox(0, 0, 10, 10))
        assert f[0] == 1.0 and f[8] == 0.0 and f[1] == 0.0
        assert np.all(np.isfinite(f))
        assert f[2] == 1.0

    def test_vertical_stripes(self):
        g = np.tile([0, 255], (8, 4))
        f = haralick_gray(g.astype(np.uint8))
        # offsets (1,0), (1,1) and (-1,1) cross a stripe edge: contrast 31^2; (0,1) gives 0
        assert f[1] == pytest.approx(3 * 31**2 / 4, abs=1e-9)
        np.testing.assert_allclose(f, oracles.haralick_region(g.tolist()), atol=1e-9)

    @pytest.mark.parametrize("size", [8, 16])
    def test_random_regions_match_oracle(self, size):
        rng = np.random.default_rng(size)
        for _ in range(10):
            g = rng.integers(0, 256, (size, size))
            np.testing.assert_allclose(haralick_gray(g.astype(np.uint8)), oracles.haralick_region(g.tolist()),
                                       rtol=0, atol=1e-9)

    def test_thin_strip_uses_available_offsets(self):
        g = np.array([[0, 40, 200, 255, 10]], dtype=np.uint8)
        np.testing.assert_allclose(haralick_gray(g), oracles.haralick_region(g.tolist()), atol=1e-9)

    def test_degenerate(self):
        with pytest.raises(DegenerateRegionError):
            haralick_features(gray_figure(np.zeros((5, 5))), BoundingBox(0, 0, 3, 1))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(2, 12))
    def test_transpose_invariant(self, seed, h, w):
        g = np.random.default_rng(seed).integers(0, 256, (h, w)).astype(np.uint8)
        np.testing.assert_allclose(haralick_gray(g), haralick_gray(g.T.copy()), rtol=1e-9, atol=1e-9)


class TestExtract:
    def test_centered_segment(self):
        fig = figure(white(100, 100), [graphic(0, 45, 45, 55, 55)])
        v = extract_features(fig, fig.segments[0])
        assert v.shape == (39,) and N_FEATURES == 39
        assert (v[col("rel_cx")], v[col("rel_cy")], v[col("rel_w")], v[col("rel_h")]) == (0.5, 0.5, 0.1, 0.1)
        assert (v[col("abs_w")], v[col("abs_h")]) == (10, 10)
        assert v[col("char_count")] == 0

    def test_char_count_overlap(self):
        fig = figure(white(50, 50), [graphic(0, 0, 0, 30, 30), text(1, 20, 20, 40, 28, "LOX"),
                                     text(2, 31, 31, 45, 40, "far away")])
        assert extract_features(fig, fig.segments[0])[col("char_count")] == 3
        assert extract_features(fig, fig.segments[1])[col("char_count")] == 3
        assert extract_features(fig, fig.segments[2])[col("char_count")] == 8

    def test_channel_means(self):
        px = white(10, 10)
        px[:, :, 0] = 51
        fig = figure(px, [graphic(0, 0, 0, 10, 10)])
        v = extract_features(fig, fig.segments[0])
        np.testing.assert_allclose(v[[col("mean_r"), col("mean_g"), col("mean_b")]], [0.2, 1.0, 1.0])

    def test_translation_changes_only_position(self, rng):
        patch = rng.integers(0, 256, (12, 9, 3), dtype=np.uint8)
        a, b = white(60, 60), white(60, 60)
        a[5:17, 3:12] = patch
        b[30:42, 40:49] = patch
        va = extract_features(figure(a), graphic(0, 3, 5, 12, 17))
        vb = extract_features(figure(b), graphic(0, 40, 30, 49, 42))
        moved = [col("rel_cx"), col("rel_cy")]
        assert np.all(va[moved] != vb[moved])
        np.testing.assert_array_equal(np.delete(va, moved), np.delete(vb, moved))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_ranges_and_finiteness(self, seed):
        rng = np.random.default_rng(seed)
        px = rng.integers(0, 256, (30, 40, 3), dtype=np.uint8)
        x0, y0 = rng.integers(0, 30), rng.integers(0, 20)
        x1, y1 = rng.integers(x0 + 2, 41), rng.integers(y0 + 2, 31)
        v = extract_features(figure(px), graphic(0, x0, y0, x1, y1))
        assert np.all(np.isfinite(v))
        bounded = [i for i, n in enumerate(FEATURE_NAMES) if n.startswith(("hist", "rel", "mean"))]
        assert np.all((v[bounded] >= 0) & (v[bounded] <= 1))
        assert v[col("abs_w")] == x1 - x0 and v[col("abs_h")] == y1 - y0


class TestCsv:
    def test_round_trip_bit_exact(self, rng):
        fig = figure(rng.integers(0, 256, (20, 20, 3), dtype=np.uint8),
                     [graphic(0, 0, 0, 10, 10), text(1, 5, 5, 20, 12, "ab")])
        X = feature_matrix(fig)
        csv = features_csv([("f", s.id, X[k], k == 0) for k, s in enumerate(fig.segments)])
        ids, Y, labels = read_features_csv(csv)
        assert ids == [("f", 0), ("f", 1)]
        assert labels == [True, False]
        np.testing.assert_array_equal(X, Y)
        assert csv.splitlines()[0].split(",")[2:41] == list(FEATURE_NAMES)
