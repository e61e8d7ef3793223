import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelmine.corpus import BoundingBox
from gelmine.segmentation import (SegmentationParams, detect_components,
                                  detect_low_contrast_rectangles, merge_segment_sets,
                                  segment_figure)

from conftest import figure, graphic, white


def boxes_of(segs):
    return [s.bbox.as_list() for s in segs]


class TestParams:
    def test_defaults(self):
        p = SegmentationParams()
        assert (p.binarize_threshold, p.min_area, p.rect_uniformity_sigma, p.rect_min_side, p.merge_iou) \
            == (200, 100, 12.0, 20, 0.5)

    @pytest.mark.parametrize("kw", [{"min_area": 0}, {"merge_iou": 0.0}, {"merge_iou": 1.5},
                                    {"rect_min_side": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SegmentationParams(**kw)


class TestComponents:
    def test_all_white(self):
        assert detect_components(figure(white(50, 50))) == []

    def test_single_square(self):
        px = white(80, 80)
        px[10:40, 20:50] = 0
        assert boxes_of(detect_components(figure(px))) == [[20, 10, 50, 40]]

    def test_two_squares_and_diagonal_bridge(self):
        px = white(40, 60)
        px[5:20, 5:20] = 0
        px[5:20, 25:40] = 0
        assert len(detect_components(figure(px))) == 2
        # a diagonal chain of single pixels joins them only under 8-connectivity
        for k in range(5):
            px[20 + k, 19 + k] = 0
            px[24 - k, 24 + k] = 0
        px[24, 24] = 0
        segs = detect_components(figure(px))
        assert boxes_of(segs) == [[5, 5, 40, 25]]

    def test_min_area_counts_pixels(self):
        px = white(40, 40)
        px[2:11, 2:11] = 0     # 81 pixels, dropped
        px[20:30, 20:30] = 0   # 100 pixels, kept
        assert boxes_of(detect_components(figure(px))) == [[20, 20, 30, 30]]

    def test_raster_order_ids(self):
        px = white(60, 60)
        px[40:55, 2:17] = 0
        px[2:17, 40:55] = 0
        px[2:17, 2:17] = 0
        segs = detect_components(figure(px))
        assert [s.id for s in segs] == [0, 1, 2]
        assert boxes_of(segs) == [[2, 2, 17, 17], [40, 2, 55, 17], [2, 40, 17, 55]]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(0, 10**6))
    def test_invariant_under_white_border(self, top, left, bottom, right, seed):
        rng = np.random.default_rng(seed)
        px = np.where(rng.random((30, 30, 1)) < 0.4, 0, 255).astype(np.uint8).repeat(3, axis=2)
        base = detect_components(figure(px), SegmentationParams(min_area=3))
        padded = np.pad(px, ((top, bottom), (left, right), (0, 0)), constant_values=255)
        shifted = detect_components(figure(padded), SegmentationParams(min_area=3))
        assert boxes_of(shifted) == [s.bbox.shifted(left, top).as_list() for s in base]


class TestRectangles:
    def test_gray_rectangle(self):
        px = white(160, 200)
        px[40:100, 50:150] = 200
        segs = detect_low_contrast_rectangles(figure(px))
        assert len(segs) == 1
        np.testing.assert_allclose(segs[0].bbox.as_list(), [50, 40, 150, 100], atol=2)

    def test_noise(self):
        rng = np.random.default_rng(0)
        px = rng.integers(0, 256, (120, 120, 1), dtype=np.uint8).repeat(3, axis=2)
        assert detect_low_contrast_rectangles(figure(px)) == []

    def test_all_white(self):
        assert detect_low_contrast_rectangles(figure(white(100, 100))) == []

    def test_rectangle_with_dark_bands(self):
        # a gel strip: light gray with a few darker blobs still reads as one rectangle
        px = white(120, 200)
        px[30:70, 40:160] = 215
        px[45:50, 60:75] = 195
        segs = detect_low_contrast_rectangles(figure(px), SegmentationParams(rect_uniformity_sigma=12))
        assert len(segs) == 1
        np.testing.assert_allclose(segs[0].bbox.as_list(), [40, 30, 160, 70], atol=2)

    def test_within_bounds(self):
        px = white(64, 64)
        px[:, :40] = 180
        for s in detect_low_contrast_rectangles(figure(px)):
            assert s.bbox.within(64, 64)


class TestMerge:
    def test_empty_left(self):
        s = graphic(3, 0, 0, 10, 10)
        out = merge_segment_sets([], [s])
        assert boxes_of(out) == [[0, 0, 10, 10]]

    def test_identical(self):
        assert len(merge_segment_sets([graphic(0, 0, 0, 10, 10)], [graphic(0, 0, 0, 10, 10)])) == 1

    def test_below_threshold_keeps_both(self):
        a = graphic(0, 0, 0, 10, 10)
        b = graphic(0, 5, 0, 18, 10)   # IoU 50/180
        assert a.bbox.iou(b.bbox) < 0.5
        assert len(merge_segment_sets([a], [b], 0.5)) == 2

    def test_larger_survives(self):
        a = graphic(0, 0, 0, 10, 10)
        b = graphic(0, 0, 0, 10, 11)
        assert boxes_of(merge_segment_sets([a], [b], 0.5)) == [[0, 0, 10, 11]]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 20), st.integers(1, 20)),
                    max_size=8),
           st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 20), st.integers(1, 20)),
                    max_size=8),
           st.floats(0.05, 1.0))
    def test_no_surviving_pair_above_threshold(self, la, lb, t):
        a = [graphic(i, x, y, x + w, y + h) for i, (x, y, w, h) in enumerate(la)]
        b = [graphic(i, x, y, x + w, y + h) for i, (x, y, w, h) in enumerate(lb)]
        out = merge_segment_sets(a, b, t)
        assert [s.id for s in out] == list(range(len(out)))
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                assert out[i].bbox.iou(out[j].bbox) < t


class TestSegmentFigure:
    def test_deterministic_and_merged(self):
        px = white(160, 220)
        px[20:60, 20:120] = 190   # low contrast, not foreground at threshold 200
        px[100:140, 150:200] = 0
        a = segment_figure(figure(px))
        b = segment_figure(figure(px.copy()))
        assert boxes_of(a) == boxes_of(b)
        assert len(a) == 2
        assert a[1].bbox == BoundingBox(150, 100, 200, 140)
