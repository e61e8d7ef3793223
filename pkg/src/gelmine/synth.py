"""Deterministic synthetic figures with exact ground truth.

Each figure is a grid of one to four cells. A cell holds either a gel panel
(one gel strip per row, lane bands, protein names on the left, condition
labels on top) or a distractor graphic: bar chart, line graph,
micrograph-like photo, or a spotted light-gray field that mimics gel texture
without lanes. Sidecars carry every segment with its true text, so OCR is
perfect unless ``ocr_noise`` is set.

Figure ``i`` is a pure function of ``(spec, i)``: its generator is seeded
with ``[spec.seed, i]``.
"""

from __future__ import annotations

import json
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import font
from .corpus import (BoundingBox, Figure, GeneTokenTruth, GroundTruth, PanelTruth, Segment,
                     SegmentKind, encode_png, sidecar_json, write_atomic)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

MARGIN = 10
GUTTER = 60  # > default max_gap, so content of different cells never groups
MIN_CELL_W, MIN_CELL_H = 200, 150
LETTER_SPACE = 18
TEXT_ROW = font.GLYPH_H + 3

# Row labels: (text, lexicon symbols a perfect matcher should find in it).
GENE_ROW_LABELS = (
    ("LOX", ("LOX",)), ("GAPDH", ("GAPDH",)), ("TP53", ("TP53",)), ("EGFR", ("EGFR",)),
    ("AKT1", ("AKT1",)), ("MAPK1", ("MAPK1",)), ("BCL2", ("BCL2",)), ("BAX", ("BAX",)),
    ("CASP3", ("CASP3",)), ("MYC", ("MYC",)), ("STAT3", ("STAT3",)), ("PTEN", ("PTEN",)),
    ("MTOR", ("MTOR",)), ("CDK4", ("CDK4",)), ("CCND1", ("CCND1",)), ("HIF1A", ("HIF1A",)),
    ("KRAS", ("KRAS",)), ("SRC", ("SRC",)), ("PCNA", ("PCNA",)), ("MDM2", ("MDM2",)),
    ("PARP1", ("PARP1",)), ("HSP90", ("HSP90",)), ("SOX2", ("SOX2",)), ("VIM", ("VIM",)),
    ("β-actin", ("actin",)), ("α-tubulin", ("tubulin",)), ("p-STAT3", ("STAT3",)),
    ("p-AKT1", ("AKT1",)), ("IL-1β", ("IL-1β",)), ("14-3-3σ", ("14-3-3σ",)),
)
OTHER_ROW_LABELS = (
    ("DNA", ()), ("mRNA", ()), ("kinase", ()), ("Input", ()), ("IgG", ()), ("His-tag", ()),
    ("Loading", ()), ("18S", ()),
)
CONDITION_LABELS = (
    ("MDA-MB-231", ()), ("NHEM", ()), ("C8161.9", ()), ("LOX", ("LOX",)), ("HeLa", ()),
    ("HEK293", ()), ("MCF-7", ()), ("siRNA", ()), ("shCtrl", ()), ("EGF", ()), ("TNF", ("TNF",)),
    ("Vehicle", ()), ("WT", ()), ("KO", ()), ("DMSO", ()),
)
TIME_LABELS = ("0", "5", "15", "30", "60", "120")
AXIS_TITLES = (
    ("Relative expression", ()), ("Fold change", ()), ("Time (h)", ()), ("Cell viability (%)", ()),
    ("TP53 mRNA", ("TP53",)), ("MYC level", ("MYC",)), ("Luciferase", ()), ("Tumor volume", ()),
)
BAR_NAMES = (
    ("Ctrl", ()), ("siRNA", ()), ("EGF", ()), ("KRAS", ("KRAS",)), ("PTEN", ("PTEN",)), ("WT", ()),
    ("KO", ()), ("Mock", ()), ("DMSO", ()), ("MYC", ("MYC",)),
)
LEGEND_NAMES = (("control", ()), ("treated", ()), ("EGFR", ("EGFR",)), ("vehicle", ()),
                ("BRAF", ("BRAF",)), ("mutant", ()))
PHOTO_CAPTIONS = (("DAPI", ()), ("merge", ()), ("50 μm", ()), ("GFP", ()), ("H&E", ()),
                  ("SOX2", ("SOX2",)))

_NOISE_CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-"


class SynthLayoutError(ValueError):
    """The requested content does not fit the figure."""


@dataclass(frozen=True)
class SynthSpec:
    n_figures: int = 500
    width_range: tuple = (420, 720)
    height_range: tuple = (320, 560)
    gel_figure_prob: float = 0.3
    max_panels: int = 2
    rows_range: tuple = (1, 3)
    lanes_range: tuple = (2, 8)
    lane_width_range: tuple = (16, 30)
    row_height_range: tuple = (22, 44)
    band_prob: float = 0.85
    double_band_prob: float = 0.15
    blob_darkness_range: tuple = (0.35, 0.95)
    blob_jitter: float = 2.0
    light_on_dark_prob: float = 0.15
    distractor_weights: tuple = (("bar", 0.35), ("line", 0.3), ("photo", 0.2), ("spots", 0.15))
    ocr_noise: float = 0.0
    seed: int = 42

    def __post_init__(self):
        for name in ("gel_figure_prob", "band_prob", "double_band_prob", "light_on_dark_prob", "ocr_noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        for name in ("width_range", "height_range", "rows_range", "lanes_range",
                     "lane_width_range", "row_height_range", "blob_darkness_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be an increasing nonnegative pair")
        if self.n_figures < 0 or self.max_panels < 1:
            raise ValueError("n_figures must be >= 0 and max_panels >= 1")
        if self.rows_range[0] < 1 or self.lanes_range[0] < 1:
            raise ValueError("gel panels need at least one row and one lane")
        object.__setattr__(self, "distractor_weights",
                           tuple((str(k), float(w)) for k, w in self.distractor_weights))
        for key in ("width_range", "height_range", "rows_range", "lanes_range",
                    "lane_width_range", "row_height_range", "blob_darkness_range"):
            object.__setattr__(self, key, tuple(getattr(self, key)))

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["distractor_weights"] = [list(p) for p in self.distractor_weights]
        for k, v in obj.items():
            if isinstance(v, tuple):
                obj[k] = list(v)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> SynthSpec:
        obj = dict(obj)
        if "distractor_weights" in obj:
            obj["distractor_weights"] = tuple(tuple(p) for p in obj["distractor_weights"])
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})


@dataclass
class SynthFigure:
    """Output of :func:`generate_figure`; unpacks as ``(figure, truth, sidecar)``."""

    figure: Figure
    truth: GroundTruth
    sidecar: dict
    info: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.figure, self.truth, self.sidecar))


class _Canvas:
    def __init__(self, width, height):
        self.img = np.full((height, width, 3), 255.0)
        self.width, self.height = width, height
        self.segments = []
        self.true_text = {}
        self.gene_tokens = []

    def _check(self, x0, y0, x1, y1):
        if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
            raise SynthLayoutError(f"content box {(x0, y0, x1, y1)} leaves the {self.width}x{self.height} figure")

    def add_graphic(self, x0, y0, x1, y1) -> int:
        self._check(x0, y0, x1, y1)
        sid = len(self.segments)
        self.segments.append(Segment(sid, BoundingBox(x0, y0, x1, y1), SegmentKind.GRAPHIC))
        return sid

    def text(self, text, x, y, genes=(), scale=1, color=(0, 0, 0)) -> int:
        w, h = font.text_size(text, scale)
        self._check(x, y, x + w, y + h)
        mask = font.render_text(text, scale)
        self.img[y:y + h, x:x + w][mask] = color
        sid = len(self.segments)
        self.segments.append(Segment(sid, BoundingBox(x, y, x + w, y + h), SegmentKind.TEXT, text))
        self.true_text[sid] = text
        self.gene_tokens.extend((sid, g) for g in genes)
        return sid

    def fill(self, x0, y0, x1, y1, color):
        self._check(x0, y0, x1, y1)
        self.img[y0:y1, x0:x1] = color


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _irange(rng, pair):
    lo, hi = pair
    return int(rng.integers(lo, hi + 1))


# ---------------------------------------------------------------------------
# gel panels


def _render_gel(canvas, box, lanes, lane_w, dark_on_light, spec, rng) -> int:
    x0, y0, x1, y1 = box
    h, w = y1 - y0, x1 - x0
    if dark_on_light:
        bg = rng.uniform(190, 215)
        ink = 25.0
    else:
        bg = rng.uniform(30, 70)
        ink = 235.0
    field_ = bg + rng.normal(0.0, 1.5, size=(h, w))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    n_blobs = 0
    for k in range(lanes):
        if rng.random() >= spec.band_prob:
            continue
        n_bands = 2 if (h >= 30 and rng.random() < spec.double_band_prob) else 1
        for b in range(n_bands):
            cy = h * (b + 1) / (n_bands + 1) + rng.uniform(-spec.blob_jitter, spec.blob_jitter)
            cx = (k + 0.5) * lane_w + rng.uniform(-spec.blob_jitter, spec.blob_jitter)
            ax = lane_w * rng.uniform(0.30, 0.42)
            ay = rng.uniform(2.5, max(2.6, min(6.0, h / (3.0 * (n_bands + 1)))))
            depth = rng.uniform(*spec.blob_darkness_range)
            r2 = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
            falloff = np.exp(-2.0 * r2)
            field_ += depth * (ink - bg) * falloff
            n_blobs += 1
    vals = np.clip(field_, 0, 255)
    canvas.img[y0:y1, x0:x1] = vals[..., None]
    return n_blobs


def _top_label_row(rng, lanes, lane_w):
    """One row of column labels as a list of (text, genes, x_offset_center)."""
    kind = _pick(rng, ("pm", "pm", "cond", "time"))
    if kind == "time" and lane_w >= font.text_size("120")[0] + 2:
        start = int(rng.integers(0, 2))
        return [(TIME_LABELS[min(start + k, len(TIME_LABELS) - 1)], (), (k + 0.5) * lane_w)
                for k in range(lanes)]
    if kind == "cond":
        groups = [g for g in (1, 2, 4) if lanes % g == 0 and g <= lanes]
        g = _pick(rng, groups)
        group_w = lanes // g * lane_w
        fitting = [c for c in CONDITION_LABELS if font.text_size(c[0])[0] <= group_w - 2]
        if fitting:
            out = []
            for k in range(g):
                text, genes = _pick(rng, fitting)
                out.append((text, genes, (k + 0.5) * group_w))
            return out
    return [("+" if rng.random() < 0.5 else "−", (), (k + 0.5) * lane_w) for k in range(lanes)]


def _gel_panel(canvas, rng, spec, box):
    bx0, by0, bx1, by1 = box
    rows = _irange(rng, spec.rows_range)
    lanes = _irange(rng, spec.lanes_range)
    lane_w = _irange(rng, spec.lane_width_range)
    row_h = _irange(rng, spec.row_height_range)
    row_gap = int(rng.integers(3, 15))
    label_gap = int(rng.integers(4, 11))
    top_gap = int(rng.integers(3, 7))
    n_top = int(rng.integers(1, 4))
    row_labels = [_pick(rng, GENE_ROW_LABELS) if rng.random() < 0.7 else _pick(rng, OTHER_ROW_LABELS)
                  for _ in range(rows)]

    def width():
        return max(font.text_size(t)[0] for t, _ in row_labels) + label_gap + lanes * lane_w

    def height():
        return n_top * TEXT_ROW + top_gap + rows * row_h + (rows - 1) * row_gap

    while width() > bx1 - bx0:
        if lanes > max(spec.lanes_range[0], 2):
            lanes -= 1
        elif lane_w > 14:
            lane_w -= 1
        else:
            raise SynthLayoutError(f"gel panel needs {width()} px but the cell is {bx1 - bx0} px wide")
    while height() > by1 - by0:
        if rows > spec.rows_range[0]:
            rows -= 1
            row_labels.pop()
        elif n_top > 1:
            n_top -= 1
        elif row_h > 18:
            row_h -= 1
        else:
            raise SynthLayoutError(f"gel panel needs {height()} px but the cell is {by1 - by0} px tall")

    pw, ph = width(), height()
    ox = bx0 + int(rng.integers(0, bx1 - bx0 - pw + 1))
    oy = by0 + int(rng.integers(0, by1 - by0 - ph + 1))
    gx0 = ox + pw - lanes * lane_w
    gy0 = oy + n_top * TEXT_ROW + top_gap
    dark_on_light = rng.random() >= spec.light_on_dark_prob

    members, labels, n_blobs = [], [], 0
    for r in range(rows):
        ry0 = gy0 + r * (row_h + row_gap)
        box_r = (gx0, ry0, gx0 + lanes * lane_w, ry0 + row_h)
        n_blobs += _render_gel(canvas, box_r, lanes, lane_w, dark_on_light, spec, rng)
        members.append(canvas.add_graphic(*box_r))
        text, genes = row_labels[r]
        tw, th = font.text_size(text)
        labels.append(canvas.text(text, gx0 - label_gap - tw, ry0 + (row_h - th) // 2, genes))
    for j in range(n_top):
        y1 = gy0 - top_gap - j * TEXT_ROW
        for text, genes, cx in _top_label_row(rng, lanes, lane_w):
            tw, th = font.text_size(text)
            labels.append(canvas.text(text, int(round(gx0 + cx - tw / 2)), y1 - th, genes))
    return PanelTruth(frozenset(members), frozenset(labels)), n_blobs


# ---------------------------------------------------------------------------
# distractors


def _random_color(rng):
    if rng.random() < 0.35:
        g = rng.uniform(40, 215)
        return (g, g, g)
    return tuple(rng.uniform(0, 230, size=3))


def _axis_ticks(canvas, rng, ax, ay0, ay1):
    n = int(rng.integers(3, 6))
    top = _pick(rng, (1, 5, 10, 50, 100))
    for k in range(n):
        value = top * k // (n - 1) if top >= n - 1 else round(top * k / (n - 1), 1)
        text = str(value)
        tw, th = font.text_size(text)
        y = int(ay1 - (ay1 - ay0) * k / (n - 1)) - th // 2
        y = min(max(y, 0), canvas.height - th)
        if ax - 4 - tw >= 0:
            canvas.text(text, ax - 4 - tw, y)


def _bar_chart(canvas, rng, box):
    bx0, by0, bx1, by1 = box
    w = int(rng.integers(min(140, bx1 - bx0), bx1 - bx0 + 1))
    h = int(rng.integers(min(110, by1 - by0), by1 - by0 + 1))
    ox, oy = bx0 + int(rng.integers(0, bx1 - bx0 - w + 1)), by0 + int(rng.integers(0, by1 - by0 - h + 1))
    title, genes = _pick(rng, AXIS_TITLES)
    tw, _ = font.text_size(title)
    ax, ay0, ay1, ax1 = ox + 30, oy + 14, oy + h - 14, ox + w
    if tw <= w:
        canvas.text(title, ox + (w - tw) // 2, oy, genes)
    canvas.fill(ax, ay0, ax + 2, ay1, (0, 0, 0))
    canvas.fill(ax, ay1 - 2, ax1, ay1, (0, 0, 0))
    canvas.add_graphic(ax, ay0, ax1, ay1)
    _axis_ticks(canvas, rng, ax, ay0, ay1)
    n = int(rng.integers(3, 9))
    slot = (ax1 - ax - 6) / n
    bar_w = max(4, int(slot * rng.uniform(0.5, 0.8)))
    color = _random_color(rng)
    for k in range(n):
        x0 = int(ax + 6 + k * slot)
        top = int(rng.uniform(ay0 + 4, ay1 - 10))
        c = color if rng.random() < 0.7 else _random_color(rng)
        canvas.fill(x0, top, x0 + bar_w, ay1 - 2, c)
        canvas.add_graphic(x0, top, x0 + bar_w, ay1 - 2)
        name, g = _pick(rng, BAR_NAMES)
        nw, nh = font.text_size(name)
        if nw <= slot - 1 and ay1 + 2 + nh <= oy + h:
            canvas.text(name, int(x0 + bar_w / 2 - nw / 2), ay1 + 2, g)


def _line_graph(canvas, rng, box):
    bx0, by0, bx1, by1 = box
    w = int(rng.integers(min(150, bx1 - bx0), bx1 - bx0 + 1))
    h = int(rng.integers(min(110, by1 - by0), by1 - by0 + 1))
    ox, oy = bx0 + int(rng.integers(0, bx1 - bx0 - w + 1)), by0 + int(rng.integers(0, by1 - by0 - h + 1))
    fx0, fy0, fx1, fy1 = ox + 30, oy + 4, ox + w - 70, oy + h - 14
    if fx1 - fx0 < 40:
        fx1 = ox + w
    img = canvas.img
    img[fy0:fy1, fx0] = 0
    img[fy0:fy1, fx1 - 1] = 0
    img[fy0, fx0:fx1] = 0
    img[fy1 - 1, fx0:fx1] = 0
    canvas.add_graphic(fx0, fy0, fx1, fy1)
    _axis_ticks(canvas, rng, fx0, fy0, fy1)
    title, genes = _pick(rng, AXIS_TITLES)
    tw, th = font.text_size(title)
    if tw <= fx1 - fx0 and fy1 + 2 + th <= oy + h:
        canvas.text(title, fx0 + (fx1 - fx0 - tw) // 2, fy1 + 2, genes)
    n_lines = int(rng.integers(1, 4))
    xs = np.linspace(fx0 + 3, fx1 - 4, int(rng.integers(4, 10)))
    for li in range(n_lines):
        color = _random_color(rng)
        ys = np.clip(np.cumsum(rng.normal(0, (fy1 - fy0) / 6, size=len(xs))) + (fy0 + fy1) / 2,
                     fy0 + 3, fy1 - 4)
        for (xa, ya), (xb, yb) in zip(zip(xs[:-1], ys[:-1]), zip(xs[1:], ys[1:])):
            steps = int(max(abs(xb - xa), abs(yb - ya))) + 1
            px = np.round(np.linspace(xa, xb, steps)).astype(int)
            py = np.round(np.linspace(ya, yb, steps)).astype(int)
            img[py, px] = color
        for x, y in zip(xs, ys):
            xi, yi = int(round(x)), int(round(y))
            img[yi - 1:yi + 2, xi - 1:xi + 2] = color
        if fx1 < ox + w - 60:
            ly = fy0 + 4 + li * 14
            canvas.fill(fx1 + 6, ly, fx1 + 14, ly + 8, color)
            canvas.add_graphic(fx1 + 6, ly, fx1 + 14, ly + 8)
            name, g = _pick(rng, LEGEND_NAMES)
            if fx1 + 18 + font.text_size(name)[0] <= ox + w:
                canvas.text(name, fx1 + 18, ly, g)


def _photo(canvas, rng, box):
    bx0, by0, bx1, by1 = box
    w = int(rng.integers(min(80, bx1 - bx0), bx1 - bx0 + 1))
    h = int(rng.integers(min(80, by1 - by0 - 12), by1 - by0 - 12 + 1))
    ox, oy = bx0 + int(rng.integers(0, bx1 - bx0 - w + 1)), by0 + int(rng.integers(0, by1 - by0 - h - 12 + 1))
    base = ndimage.gaussian_filter(rng.normal(size=(h, w)), rng.uniform(2.0, 6.0))
    base = (base - base.min()) / max(np.ptp(base), 1e-9)
    if rng.random() < 0.5:
        weights = rng.uniform(0, 1, size=3)
        weights[int(rng.integers(3))] = 1.0
        rgb = (base ** 1.5)[..., None] * weights * 255.0
    else:
        g = 30 + base * 210 + rng.normal(0, 6, size=(h, w))
        rgb = np.repeat(g[..., None], 3, axis=2) * rng.uniform(0.85, 1.0, size=3)
    canvas.img[oy:oy + h, ox:ox + w] = np.clip(rgb, 0, 255)
    canvas.add_graphic(ox, oy, ox + w, oy + h)
    sb_w = int(rng.integers(15, 40))
    sb_color = (255, 255, 255) if rng.random() < 0.5 else (0, 0, 0)
    if w > sb_w + 8 and h > 10:
        canvas.fill(ox + w - sb_w - 4, oy + h - 6, ox + w - 4, oy + h - 3, sb_color)
        canvas.add_graphic(ox + w - sb_w - 4, oy + h - 6, ox + w - 4, oy + h - 3)
    cap, g = _pick(rng, PHOTO_CAPTIONS)
    if font.text_size(cap)[0] <= w:
        canvas.text(cap, ox, oy + h + 3, g)


def _spots(canvas, rng, box):
    """Light-gray field with scattered dark round spots: a gel look-alike without lanes."""
    bx0, by0, bx1, by1 = box
    w = int(rng.integers(min(60, bx1 - bx0), min(bx1 - bx0, 260) + 1))
    h = int(rng.integers(min(30, by1 - by0 - 12), min(by1 - by0 - 12, 160) + 1))
    ox, oy = bx0 + int(rng.integers(0, bx1 - bx0 - w + 1)), by0 + int(rng.integers(0, by1 - by0 - h - 12 + 1))
    bg = rng.uniform(180, 225)
    field_ = bg + rng.normal(0.0, 3.0, size=(h, w))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(int(rng.integers(5, 40))):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        r = rng.uniform(2.0, 8.0)
        field_ -= rng.uniform(0.3, 0.9) * (bg - 30.0) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (r * r))
    canvas.img[oy:oy + h, ox:ox + w] = np.clip(field_, 0, 255)[..., None]
    canvas.add_graphic(ox, oy, ox + w, oy + h)
    cap, g = _pick(rng, PHOTO_CAPTIONS)
    if font.text_size(cap)[0] <= w:
        canvas.text(cap, ox, oy + h + 3, g)


DISTRACTORS = {"bar": _bar_chart, "line": _line_graph, "photo": _photo, "spots": _spots}


# ---------------------------------------------------------------------------
# figures and corpora


def _mutate(text, rate, rng):
    if rate <= 0:
        return text
    chars = list(text)
    for k in range(len(chars)):
        if rng.random() < rate:
            chars[k] = _NOISE_CHARS[int(rng.integers(len(_NOISE_CHARS)))]
    return "".join(chars)


def _layout(rng, width, height):
    options = []
    for cols in (1, 2):
        for rows in (1, 2):
            cw = (width - 2 * MARGIN - (cols - 1) * GUTTER) // cols
            ch = (height - 2 * MARGIN - (rows - 1) * GUTTER) // rows
            if cw >= MIN_CELL_W and ch >= MIN_CELL_H:
                options.append((cols, rows, cw, ch))
    if not options:
        raise SynthLayoutError(f"a {width}x{height} figure cannot hold one {MIN_CELL_W}x{MIN_CELL_H} cell")
    cols, rows, cw, ch = options[int(rng.integers(len(options)))]
    return [(MARGIN + c * (cw + GUTTER), MARGIN + r * (ch + GUTTER),
             MARGIN + c * (cw + GUTTER) + cw, MARGIN + r * (ch + GUTTER) + ch)
            for r in range(rows) for c in range(cols)]


def figure_id(index: int) -> str:
    return f"fig{index:05d}"


def generate_figure(spec: SynthSpec, index: int) -> SynthFigure:
    rng = np.random.default_rng([spec.seed, index])
    width = _irange(rng, spec.width_range)
    height = _irange(rng, spec.height_range)
    cells = _layout(rng, width, height)
    canvas = _Canvas(width, height)

    n_gel_cells = 0
    if rng.random() < spec.gel_figure_prob:
        n_gel_cells = int(rng.integers(1, min(spec.max_panels, len(cells)) + 1))
    gel_cells = set(rng.choice(len(cells), size=n_gel_cells, replace=False).tolist()) if n_gel_cells else set()
    kinds = [k for k, _ in spec.distractor_weights]
    weights = np.array([w for _, w in spec.distractor_weights], dtype=np.float64)
    weights = weights / weights.sum()

    panels, n_blobs = [], 0
    for ci, (x0, y0, x1, y1) in enumerate(cells):
        top = y0
        if len(cells) > 1:
            canvas.text("ABCD"[ci], x0, y0, scale=2)
            top = y0 + LETTER_SPACE
        content = (x0, top, x1, y1)
        if ci in gel_cells:
            truth, nb = _gel_panel(canvas, rng, spec, content)
            panels.append(truth)
            n_blobs += nb
        else:
            kind = kinds[int(rng.choice(len(kinds), p=weights))]
            DISTRACTORS[kind](canvas, rng, content)

    pixels = np.clip(np.floor(canvas.img + 0.5), 0, 255).astype(np.uint8)
    noise_rng = np.random.default_rng([spec.seed, index, 1])
    segments = [s if not s.is_text else Segment(s.id, s.bbox, s.kind, _mutate(s.text, spec.ocr_noise, noise_rng))
                for s in canvas.segments]
    gel_ids = frozenset().union(*(p.member_segment_ids for p in panels)) if panels else frozenset()
    truth = GroundTruth(gel_ids, tuple(panels),
                        tuple(GeneTokenTruth(sid, tok) for sid, tok in canvas.gene_tokens))
    fig = Figure(figure_id(index), pixels, tuple(segments), truth)
    sidecar = sidecar_json(segments, truth)
    info = {"n_blobs": n_blobs, "n_cells": len(cells)}
    return SynthFigure(fig, truth, sidecar, info)


def _summary(sf: SynthFigure) -> dict:
    fig, truth = sf.figure, sf.truth
    n_text = len(fig.text_segments)
    return {
        "id": fig.id,
        "image": f"{fig.id}.png",
        "sidecar": f"{fig.id}.sidecar.json",
        "width": fig.width,
        "height": fig.height,
        "n_segments": len(fig.segments),
        "n_text_segments": n_text,
        "n_graphic_segments": len(fig.segments) - n_text,
        "n_gel_segments": len(truth.gel_segment_ids),
        "n_panels": len(truth.panels),
        "n_labels": sum(len(p.label_segment_ids) for p in truth.panels),
        "n_gene_tokens": len(truth.gene_tokens),
        "n_blobs": sf.info["n_blobs"],
    }


def _write_one(args):
    spec, index, out_dir = args
    sf = generate_figure(spec, index)
    write_atomic(out_dir / f"{sf.figure.id}.png", encode_png(sf.figure.pixels))
    write_atomic(out_dir / f"{sf.figure.id}.sidecar.json",
                 json.dumps(sf.sidecar, ensure_ascii=False, separators=(",", ":")))
    return _summary(sf)


def generate_corpus(spec: SynthSpec, out_dir, start_index: int = 0, workers: int = 1) -> dict:
    """Write ``spec.n_figures`` image/sidecar pairs plus ``manifest.json``.

    Figures are numbered from ``start_index``; disjoint index ranges give
    independent corpora from one spec. On failure every file written by
    this call is removed.
    """
    out_dir = Path(out_dir)
    created_dir = not out_dir.exists()
    out_dir.mkdir(parents=True, exist_ok=True)
    indices = list(range(start_index, start_index + spec.n_figures))
    jobs = [(spec, i, out_dir) for i in indices]
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                summaries = list(pool.map(_write_one, jobs, chunksize=8))
        else:
            summaries = [_write_one(j) for j in jobs]
        keys = ("n_segments", "n_text_segments", "n_graphic_segments", "n_gel_segments",
                "n_panels", "n_labels", "n_gene_tokens", "n_blobs")
        totals = {k: sum(s[k] for s in summaries) for k in keys}
        totals["n_figures"] = len(summaries)
        totals["gel_segment_fraction"] = (totals["n_gel_segments"] / totals["n_segments"]
                                          if totals["n_segments"] else 0.0)
        manifest = {"version": MANIFEST_VERSION, "spec": spec.to_json(), "start_index": start_index,
                    "figures": summaries, "totals": totals}
        write_atomic(out_dir / MANIFEST_NAME, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except BaseException:
        if created_dir:
            shutil.rmtree(out_dir, ignore_errors=True)
        else:
            for i in indices:
                for suffix in (".png", ".sidecar.json"):
                    p = out_dir / f"{figure_id(i)}{suffix}"
                    if p.exists():
                        os.remove(p)
            (out_dir / MANIFEST_NAME).unlink(missing_ok=True)
        raise
    return manifest
