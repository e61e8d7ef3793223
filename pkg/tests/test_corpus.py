import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelmine.corpus import (BoundingBox, CorpusError, GroundTruth, ImageDecodeError,
                            SegmentKind, SidecarValidationError, box_gap, decode_image,
                            enclosing_box, encode_png, load_corpus, load_figure, parse_sidecar,
                            to_gray)

from conftest import white, write_figure


def brute_gap(a, b, steps=40):
    """Minimum distance over points sampled on both boxes' boundaries, plus overlap test."""
    if a.x0 <= b.x1 and b.x0 <= a.x1 and a.y0 <= b.y1 and b.y0 <= a.y1:
        return 0.0

    def pts(box):
        t = np.linspace(0.0, 1.0, steps)
        xs = box.x0 + t * box.width
        ys = box.y0 + t * box.height
        return np.concatenate([np.c_[xs, np.full(steps, box.y0)], np.c_[xs, np.full(steps, box.y1)],
                               np.c_[np.full(steps, box.x0), ys], np.c_[np.full(steps, box.x1), ys]])
    pa, pb = pts(a), pts(b)
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    return d.min()


boxes = st.builds(
    lambda x, y, w, h: BoundingBox(x, y, x + w, y + h),
    st.integers(0, 60), st.integers(0, 60), st.integers(1, 30), st.integers(1, 30))


class TestBoundingBox:
    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            BoundingBox(5, 5, 5, 10)
        with pytest.raises(ValueError):
            BoundingBox(-1, 0, 3, 3)

    def test_area_and_iou(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 0, 15, 10)
        assert a.area == 100
        assert a.intersection_area(b) == 50
        assert a.iou(b) == pytest.approx(50 / 150)
        assert a.iou(a) == 1.0

    def test_touching_boxes_do_not_intersect(self):
        a = BoundingBox(0, 0, 10, 10)
        assert not a.intersects(BoundingBox(10, 0, 20, 10))
        assert box_gap(a, BoundingBox(10, 0, 20, 10)) == 0.0

    def test_enclosing_box(self):
        e = enclosing_box([BoundingBox(0, 5, 3, 9), BoundingBox(7, 1, 8, 2)])
        assert e == BoundingBox(0, 1, 8, 9)


class TestBoxGap:
    def test_overlap(self):
        assert box_gap(BoundingBox(0, 0, 10, 10), BoundingBox(5, 5, 15, 15)) == 0.0

    def test_horizontal(self):
        assert box_gap(BoundingBox(0, 0, 10, 10), BoundingBox(50, 0, 60, 10)) == 40.0

    def test_corner(self):
        a, b = BoundingBox(0, 0, 10, 10), BoundingBox(13, 14, 20, 20)
        assert box_gap(a, b) == 5.0
        assert brute_gap(a, b) == pytest.approx(5.0, abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(boxes, boxes)
    def test_matches_sampled_oracle(self, a, b):
        # integer box corners lie on the sample grid when steps-1 divides the sides;
        # otherwise the sampled minimum can only overestimate slightly
        g = box_gap(a, b)
        assert g <= brute_gap(a, b) + 1e-9
        assert brute_gap(a, b, steps=61) - g < 1.0

    @settings(max_examples=200, deadline=None)
    @given(boxes, boxes)
    def test_symmetric_and_reflexive(self, a, b):
        assert box_gap(a, b) == box_gap(b, a)
        assert box_gap(a, a) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(boxes, boxes, st.integers(0, 5), st.integers(0, 5))
    def test_enlarging_never_increases(self, a, b, dx, dy):
        bigger = BoundingBox(max(0, a.x0 - dx), max(0, a.y0 - dy), a.x1 + dx, a.y1 + dy)
        assert box_gap(bigger, b) <= box_gap(a, b)

    @settings(max_examples=200, deadline=None)
    @given(boxes, boxes)
    def test_zero_iff_touching(self, a, b):
        touching = a.x0 <= b.x1 and b.x0 <= a.x1 and a.y0 <= b.y1 and b.y0 <= a.y1
        assert (box_gap(a, b) == 0.0) == touching


class TestGray:
    def test_rec601_rounding(self):
        px = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [10, 20, 30]]], dtype=np.uint8)
        expect = [math.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5) for r, g, b in px[0].tolist()]
        np.testing.assert_array_equal(to_gray(px)[0], expect)


class TestSidecar:
    def test_text_segment(self):
        segs, truth = parse_sidecar(
            {"segments": [{"id": 0, "bbox": [2, 2, 8, 6], "kind": "text", "text": "LOX"}]}, 10, 10)
        assert segs[0].kind is SegmentKind.TEXT
        assert segs[0].char_count == 3
        assert truth is None

    def test_text_segment_without_text_has_zero_chars(self):
        segs, _ = parse_sidecar({"segments": [{"id": 1, "bbox": [0, 0, 4, 4], "kind": "text"}]}, 10, 10)
        assert segs[0].char_count == 0

    def test_out_of_bounds_names_segment(self):
        with pytest.raises(SidecarValidationError) as info:
            parse_sidecar({"segments": [{"id": 7, "bbox": [5, 5, 20, 8], "kind": "graphic"}]}, 10, 10)
        assert info.value.segment_id == 7
        assert "7" in str(info.value)

    def test_truth_must_reference_existing_ids(self):
        obj = {"segments": [{"id": 0, "bbox": [0, 0, 4, 4], "kind": "graphic"}],
               "ground_truth": {"gel_segment_ids": [0, 3]}}
        with pytest.raises(SidecarValidationError):
            parse_sidecar(obj, 10, 10)

    def test_truth_panels_disjoint(self):
        obj = {"segments": [{"id": 0, "bbox": [0, 0, 4, 4], "kind": "graphic"}],
               "ground_truth": {"panels": [{"member_segment_ids": [0]}, {"member_segment_ids": [0]}]}}
        with pytest.raises(SidecarValidationError):
            parse_sidecar(obj, 10, 10)

    def test_truth_round_trip(self):
        obj = {"gel_segment_ids": [1, 2], "panels": [{"member_segment_ids": [1, 2], "label_segment_ids": [3]}],
               "gene_tokens": [{"segment_id": 3, "token": "TP53"}]}
        assert GroundTruth.from_json(obj).to_json() == obj


class TestImages:
    def test_png_round_trip(self, rng):
        px = rng.integers(0, 256, (7, 5, 3), dtype=np.uint8)
        np.testing.assert_array_equal(decode_image(encode_png(px)), px)

    def test_ppm(self, rng):
        px = rng.integers(0, 256, (4, 6, 3), dtype=np.uint8)
        data = b"P6\n6 4\n255\n" + px.tobytes()
        np.testing.assert_array_equal(decode_image(data), px)

    def test_rejects_other_formats(self):
        with pytest.raises(ImageDecodeError):
            decode_image(b"GIF89a....")
        with pytest.raises(ImageDecodeError):
            decode_image(b"P3\n1 1\n255\n0 0 0\n")


class TestLoadCorpus:
    def test_empty(self, tmp_path):
        assert len(load_corpus(tmp_path)) == 0

    def test_missing_root(self, tmp_path):
        with pytest.raises(CorpusError):
            load_corpus(tmp_path / "nope")

    def test_sidecar_attached(self, tmp_path):
        write_figure(tmp_path, "fig1", white(10, 10), {"segments": []})
        index = load_corpus(tmp_path)
        assert len(index) == 1
        assert index.entries[0].sidecar_path.name == "fig1.sidecar.json"

    def test_corrupt_file_skipped(self, tmp_path):
        write_figure(tmp_path, "a", white(10, 10))
        write_figure(tmp_path, "b", white(10, 10))
        (tmp_path / "c.png").write_bytes(b"\x89PNG\r\n\x1a\ngarbage")
        index = load_corpus(tmp_path)
        assert [e.id for e in index.entries] == ["a", "b"]
        assert [s.id for s in index.skipped] == ["c"]
        assert index.skipped[0].reason

    def test_sorted_and_deterministic(self, tmp_path):
        for name in ["z", "a", "sub/m", "sub/b"]:
            write_figure(tmp_path, name, white(4, 4))
        a, b = load_corpus(tmp_path), load_corpus(tmp_path)
        assert [e.id for e in a] == ["a", "sub/b", "sub/m", "z"]
        assert a.to_json() == b.to_json()

    def test_load_figure_without_sidecar(self, tmp_path):
        write_figure(tmp_path, "w", white(10, 10))
        fig = load_figure(load_corpus(tmp_path).entries[0])
        assert fig.segments == ()
        assert (fig.width, fig.height) == (10, 10)
        assert fig.pixels.dtype == np.uint8 and fig.pixels.size == 10 * 10 * 3

    def test_load_figure_validates_sidecar(self, tmp_path):
        write_figure(tmp_path, "w", white(10, 10),
                     {"segments": [{"id": 4, "bbox": [5, 5, 20, 8], "kind": "graphic"}]})
        with pytest.raises(SidecarValidationError) as info:
            load_figure(load_corpus(tmp_path).entries[0])
        assert info.value.segment_id == 4

    def test_pixels_read_only(self, tmp_path):
        write_figure(tmp_path, "w", white(3, 3))
        fig = load_figure(load_corpus(tmp_path).entries[0])
        with pytest.raises(ValueError):
            fig.pixels[0, 0, 0] = 1
