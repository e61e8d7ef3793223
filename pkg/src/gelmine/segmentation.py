"""Graphic segment extraction from raw pixels.

Two detectors are combined: dark connected components on a binarized image,
and a region-growing detector for flat rectangles whose contrast against the
page is too low for binarization to separate them (light gels on a white page).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .corpus import BoundingBox, Figure, Segment, SegmentKind

DOWNSAMPLE = 4
SEED_STEP = 2  # seed grid spacing, in downsampled cells
FRAME_WIDTH = 3
MIN_FRAME_CONTRAST = 10.0


@dataclass(frozen=True)
class SegmentationParams:
    binarize_threshold: int = 200
    min_area: int = 100
    rect_uniformity_sigma: float = 12.0
    rect_min_side: int = 20
    merge_iou: float = 0.5

    def __post_init__(self):
        if not 0 < self.binarize_threshold <= 255:
            raise ValueError("binarize_threshold must be in (0, 255]")
        if self.min_area <= 0 or self.rect_uniformity_sigma <= 0 or self.rect_min_side <= 0:
            raise ValueError("segmentation parameters must be positive")
        if not 0 < self.merge_iou <= 1:
            raise ValueError("merge_iou must be in (0, 1]")


def _graphic(boxes, start_id=0):
    return [Segment(start_id + i, b, SegmentKind.GRAPHIC) for i, b in enumerate(boxes)]


def _raster_sorted(boxes):
    return sorted(boxes, key=lambda b: (b.y0, b.x0, b.y1, b.x1))


def detect_components(figure: Figure, params: SegmentationParams = SegmentationParams()) -> list[Segment]:
    """Bounding boxes of 8-connected dark components with at least ``min_area`` pixels."""
    fg = figure.gray() < params.binarize_threshold
    labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    boxes = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or sizes[lab] < params.min_area:
            continue
        ys, xs = sl
        boxes.append(BoundingBox(xs.start, ys.start, xs.stop, ys.stop))
    return _graphic(_raster_sorted(boxes))


class _Stats:
    """Summed-area tables for O(1) rectangle mean and variance."""

    def __init__(self, img):
        img = img.astype(np.float64)
        self.s1 = np.pad(img.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
        self.s2 = np.pad((img * img).cumsum(0).cumsum(1), ((1, 0), (1, 0)))

    def _sum(self, table, x0, y0, x1, y1):
        return table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]

    def mean_std(self, x0, y0, x1, y1):
        n = (x1 - x0) * (y1 - y0)
        m = self._sum(self.s1, x0, y0, x1, y1) / n
        var = self._sum(self.s2, x0, y0, x1, y1) / n - m * m
        return m, np.sqrt(max(var, 0.0))

    def mean(self, x0, y0, x1, y1):
        return self._sum(self.s1, x0, y0, x1, y1) / ((x1 - x0) * (y1 - y0))


def _grow_coarse(cells, stats, r, c, tol, sigma):
    """Greedy rectangle growth on the downsampled grid from seed cell (r, c)."""
    h, w = cells.shape
    r0, r1, c0, c1 = r, r + 1, c, c + 1
    changed = True
    while changed:
        changed = False
        m = stats.mean(c0, r0, c1, r1)
        for side in range(4):
            if side == 0 and r0 > 0:
                line, cand = cells[r0 - 1, c0:c1], (c0, r0 - 1, c1, r1)
            elif side == 1 and r1 < h:
                line, cand = cells[r1, c0:c1], (c0, r0, c1, r1 + 1)
            elif side == 2 and c0 > 0:
                line, cand = cells[r0:r1, c0 - 1], (c0 - 1, r0, c1, r1)
            elif side == 3 and c1 < w:
                line, cand = cells[r0:r1, c1], (c0, r0, c1 + 1, r1)
            else:
                continue
            if np.abs(line - m).max() > tol:
                continue
            if stats.mean_std(*cand)[1] > sigma:
                continue
            c0, r0, c1, r1 = cand
            m = stats.mean(c0, r0, c1, r1)
            changed = True
    return c0, r0, c1, r1


def _line_ok(stats, box, m, tol):
    x0, y0, x1, y1 = box
    if x1 <= x0 or y1 <= y0:
        return False
    return abs(stats.mean(x0, y0, x1, y1) - m) <= tol


def _refine(stats, box, width, height, tol, max_iter=16):
    """Move each edge of a full-resolution box to pixel precision."""
    x0, y0, x1, y1 = box
    for _ in range(max_iter):
        m = stats.mean(x0, y0, x1, y1)
        before = (x0, y0, x1, y1)
        # shrink edges whose boundary line disagrees with the interior
        while y1 - y0 > 1 and not _line_ok(stats, (x0, y0, x1, y0 + 1), m, tol):
            y0 += 1
        while y1 - y0 > 1 and not _line_ok(stats, (x0, y1 - 1, x1, y1), m, tol):
            y1 -= 1
        while x1 - x0 > 1 and not _line_ok(stats, (x0, y0, x0 + 1, y1), m, tol):
            x0 += 1
        while x1 - x0 > 1 and not _line_ok(stats, (x1 - 1, y0, x1, y1), m, tol):
            x1 -= 1
        # grow outward while the next line agrees
        while y0 > 0 and _line_ok(stats, (x0, y0 - 1, x1, y0), m, tol):
            y0 -= 1
        while y1 < height and _line_ok(stats, (x0, y1, x1, y1 + 1), m, tol):
            y1 += 1
        while x0 > 0 and _line_ok(stats, (x0 - 1, y0, x0, y1), m, tol):
            x0 -= 1
        while x1 < width and _line_ok(stats, (x1, y0, x1 + 1, y1), m, tol):
            x1 += 1
        if (x0, y0, x1, y1) == before:
            break
    return x0, y0, x1, y1


def _frame_mean(stats, box, width, height):
    x0, y0, x1, y1 = box
    fx0, fy0 = max(x0 - FRAME_WIDTH, 0), max(y0 - FRAME_WIDTH, 0)
    fx1, fy1 = min(x1 + FRAME_WIDTH, width), min(y1 + FRAME_WIDTH, height)
    outer_n = (fx1 - fx0) * (fy1 - fy0)
    inner_n = (x1 - x0) * (y1 - y0)
    if outer_n == inner_n:
        return None
    outer = stats.mean(fx0, fy0, fx1, fy1) * outer_n
    inner = stats.mean(x0, y0, x1, y1) * inner_n
    return (outer - inner) / (outer_n - inner_n)


def detect_low_contrast_rectangles(figure: Figure,
                                   params: SegmentationParams = SegmentationParams()) -> list[Segment]:
    """Flat rectangles that stand out from their 3-pixel surrounding frame.

    Seeds on a grid over the 4x downsampled image, grows rectangles there,
    refines the edges at full resolution and keeps those whose interior
    standard deviation is within ``rect_uniformity_sigma`` and whose mean
    differs from the frame mean by at least 10 gray levels. Rectangles at the
    page background gray are dropped.
    """
    gray = figure.gray().astype(np.float64)
    height, width = gray.shape
    hd, wd = height // DOWNSAMPLE, width // DOWNSAMPLE
    if hd == 0 or wd == 0:
        return []
    cells = gray[: hd * DOWNSAMPLE, : wd * DOWNSAMPLE].reshape(hd, DOWNSAMPLE, wd, DOWNSAMPLE).mean(axis=(1, 3))
    coarse = _Stats(cells)
    full = _Stats(gray)
    sigma = params.rect_uniformity_sigma
    line_tol = max(sigma / 2.0, 3.0)
    background = float(np.bincount(gray.astype(np.int64).ravel(), minlength=256).argmax())
    min_cells = max(params.rect_min_side // DOWNSAMPLE - 1, 1)

    covered = np.zeros((hd, wd), dtype=bool)
    found = []
    for r in range(0, hd, SEED_STEP):
        for c in range(0, wd, SEED_STEP):
            if covered[r, c]:
                continue
            c0, r0, c1, r1 = _grow_coarse(cells, coarse, r, c, sigma, sigma)
            covered[r0:r1, c0:c1] = True
            if c1 - c0 < min_cells or r1 - r0 < min_cells:
                continue
            box = _refine(full, (c0 * DOWNSAMPLE, r0 * DOWNSAMPLE, c1 * DOWNSAMPLE, r1 * DOWNSAMPLE),
                          width, height, line_tol)
            x0, y0, x1, y1 = box
            if min(x1 - x0, y1 - y0) < params.rect_min_side:
                continue
            m, s = full.mean_std(*box)
            if s > sigma or abs(m - background) <= 3.0:
                continue
            frame = _frame_mean(full, box, width, height)
            if frame is None or abs(m - frame) < MIN_FRAME_CONTRAST:
                continue
            found.append(BoundingBox(x0, y0, x1, y1))

    kept = []
    for b in sorted(set(found), key=lambda b: (-b.area, b.y0, b.x0)):
        if all(b.iou(k) < params.merge_iou and b.intersection_area(k) < b.area for k in kept):
            kept.append(b)
    return _graphic(_raster_sorted(kept))


def merge_segment_sets(a, b, merge_iou: float = 0.5) -> list[Segment]:
    """Union of two segment lists with near-duplicates removed.

    Of any pair with IoU >= ``merge_iou`` only the larger box survives (the
    one from ``a`` on equal area). Ids are reassigned in raster order.
    """
    ranked = sorted([(s, 0, i) for i, s in enumerate(a)] + [(s, 1, i) for i, s in enumerate(b)],
                    key=lambda t: (-t[0].bbox.area, t[1], t[2]))
    kept = []
    for seg, _, _ in ranked:
        if all(seg.bbox.iou(k.bbox) < merge_iou for k in kept):
            kept.append(seg)
    kept.sort(key=lambda s: (s.bbox.y0, s.bbox.x0, s.bbox.y1, s.bbox.x1))
    return [Segment(i, s.bbox, s.kind, s.text) for i, s in enumerate(kept)]


def segment_figure(figure: Figure, params: SegmentationParams = SegmentationParams()) -> list[Segment]:
    return merge_segment_sets(detect_components(figure, params),
                              detect_low_contrast_rectangles(figure, params), params.merge_iou)
