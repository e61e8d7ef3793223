"""Per-figure pipeline: segments, features, gel scores, panels, gene mentions.

Work is mapped over figures, optionally in worker processes; results always
come back in corpus order so outputs do not depend on the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ner
from .corpus import CorpusEntry, Figure, Segment, SegmentKind, enclosing_box, load_figure
from .evalstats import Metrics, match_panels
from .features import feature_matrix
from .forest import ForestModel
from .panels import PanelParams, detect_panels
from .segmentation import SegmentationParams, segment_figure

log = logging.getLogger(__name__)


def prepare_figure(figure: Figure, mode: str = "auto",
                   params: SegmentationParams = SegmentationParams()) -> Figure:
    """Settle the figure's segment list.

    ``sidecar`` keeps the sidecar segments as they are. ``detect`` replaces
    sidecar graphic segments by detected ones and keeps sidecar text.
    ``auto`` detects only when the sidecar has no graphic segments.
    Detected segments get ids after the largest sidecar id.
    """
    if mode == "sidecar" or (mode == "auto" and figure.graphic_segments):
        return figure
    texts = figure.text_segments
    start = max((s.id for s in texts if isinstance(s.id, int)), default=-1) + 1
    found = [Segment(start + i, s.bbox, SegmentKind.GRAPHIC) for i, s in enumerate(segment_figure(figure, params))]
    return figure.with_segments(texts + found)


def truth_labels(figure: Figure, original: Figure | None = None, iou_min: float = 0.5) -> np.ndarray:
    """Per-segment gel labels from the ground truth.

    When segments were re-detected, a segment counts as gel if it overlaps a
    ground-truth gel segment of ``original`` with IoU >= ``iou_min``.
    """
    truth = figure.ground_truth
    if truth is None:
        raise ValueError(f"figure {figure.id} has no ground truth")
    if original is None or original is figure:
        return np.array([s.id in truth.gel_segment_ids for s in figure.segments], dtype=bool)
    gel_boxes = [original.segment(i).bbox for i in truth.gel_segment_ids]
    return np.array([not s.is_text and any(s.bbox.iou(b) >= iou_min for b in gel_boxes)
                     for s in figure.segments], dtype=bool)


def truth_panel_boxes(figure: Figure) -> list:
    truth = figure.ground_truth
    if truth is None:
        return []
    return [enclosing_box(figure.segment(i).bbox for i in p.member_segment_ids) for p in truth.panels]


@dataclass
class FigureResult:
    figure_id: str
    segment_ids: list
    scores: np.ndarray
    panels: list
    panel_records: list
    mentions: list
    tokens: ner.TokenCounts
    truth: np.ndarray | None = None
    panel_metrics: Metrics | None = None
    gene_metrics: Metrics | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_panels(self) -> int:
        return len(self.panels)

    @property
    def n_labels(self) -> int:
        return sum(len(p.label_segment_ids) for p in self.panels)


@dataclass
class DetectContext:
    model: ForestModel
    lexicon: ner.Lexicon
    stoplists: ner.StopLists
    panel_params: PanelParams = field(default_factory=PanelParams)
    seg_params: SegmentationParams = field(default_factory=SegmentationParams)
    seg_mode: str = "auto"
    iou_min: float = 0.5
    evaluate: bool = False


def process_figure(original: Figure, ctx: DetectContext) -> FigureResult:
    fig = prepare_figure(original, ctx.seg_mode, ctx.seg_params)
    X = feature_matrix(fig)
    scores = ctx.model.predict_proba(X) if len(X) else np.zeros(0)
    proba = {s.id: float(p) for s, p in zip(fig.segments, scores)}
    panels = detect_panels(fig.segments, proba, ctx.panel_params)
    texts = {s.id: s for s in fig.text_segments}

    mentions = []
    label_ids = set()
    tokens_labels = matched_labels = 0
    for p in panels:
        for sid in sorted(p.label_segment_ids):
            toks = ner.tokenize(texts[sid].text)
            found = ner.match_genes(toks, ctx.lexicon, ctx.stoplists,
                                    figure_id=fig.id, panel_id=p.id, label_segment_id=sid)
            mentions.extend(found)
            tokens_labels += len(toks)
            matched_labels += ner.count_matches(toks, ctx.lexicon, ctx.stoplists)
            label_ids.add(sid)
    tokens_all = matched_all = 0
    for s in fig.text_segments:
        toks = ner.tokenize(s.text)
        tokens_all += len(toks)
        matched_all += ner.count_matches(toks, ctx.lexicon, ctx.stoplists)
    counts = ner.TokenCounts(tokens_all, matched_all, tokens_labels, matched_labels)

    result = FigureResult(fig.id, [s.id for s in fig.segments], np.asarray(scores, dtype=np.float64),
                          panels, [p.to_record(fig.id, texts) for p in panels], mentions, counts)
    if ctx.evaluate and fig.ground_truth is not None:
        result.truth = truth_labels(fig, original, ctx.iou_min)
        result.panel_metrics = match_panels(panels, truth_panel_boxes(original), ctx.iou_min)
        found_genes = {(m.label_segment_id, m.token) for m in mentions}
        truth_label_ids = set().union(*(p.label_segment_ids for p in original.ground_truth.panels)) \
            if original.ground_truth.panels else set()
        true_genes = {(g.segment_id, g.token) for g in original.ground_truth.gene_tokens
                      if g.segment_id in truth_label_ids}
        result.gene_metrics = Metrics(len(found_genes & true_genes), len(found_genes - true_genes),
                                      len(true_genes - found_genes), 0)
    return result


_WORKER = {}


def _init_worker(fn, ctx):
    _WORKER["fn"] = fn
    _WORKER["ctx"] = ctx


def _run_entry(entry: CorpusEntry):
    return _WORKER["fn"](load_figure(entry), _WORKER["ctx"])


def map_figures(fn, entries, ctx, workers: int = 1) -> list:
    """``[fn(load_figure(e), ctx) for e in entries]``, optionally in processes."""
    entries = list(entries)
    if workers <= 1 or len(entries) <= 1:
        return [fn(load_figure(e), ctx) for e in entries]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(fn, ctx)) as pool:
        return list(pool.map(_run_entry, entries, chunksize=max(1, len(entries) // (4 * workers))))


@dataclass
class SegmentRows:
    figure_id: str
    segment_ids: list
    X: np.ndarray
    y: np.ndarray | None


@dataclass
class FeatureContext:
    seg_params: SegmentationParams = field(default_factory=SegmentationParams)
    seg_mode: str = "auto"
    iou_min: float = 0.5


def figure_rows(original: Figure, ctx: FeatureContext) -> SegmentRows:
    fig = prepare_figure(original, ctx.seg_mode, ctx.seg_params)
    y = truth_labels(fig, original, ctx.iou_min) if fig.ground_truth is not None else None
    return SegmentRows(fig.id, [s.id for s in fig.segments], feature_matrix(fig), y)


def stack_rows(rows) -> tuple[np.ndarray, np.ndarray]:
    rows = [r for r in rows if len(r.X)]
    if not rows:
        return np.empty((0, 39)), np.empty(0, dtype=bool)
    if any(r.y is None for r in rows):
        raise ValueError("some figures lack ground truth; cannot build a labeled dataset")
    return np.vstack([r.X for r in rows]), np.concatenate([r.y for r in rows])
