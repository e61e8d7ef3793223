"""Detection metrics, panel matching and corpus-level statistics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

REPORT_SCHEMA_VERSION = "gelmine-report/1"


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def precision(self) -> float:
        den = self.tp + self.fp
        return self.tp / den if den else 0.0

    @property
    def recall(self) -> float:
        den = self.tp + self.fn
        return self.tp / den if den else 0.0

    @property
    def f_score(self) -> float:
        return f_score(self.precision, self.recall)

    @property
    def precision_undefined(self) -> bool:
        return self.tp + self.fp == 0

    @property
    def recall_undefined(self) -> bool:
        return self.tp + self.fn == 0

    def __add__(self, other):
        return Metrics(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_json(self) -> dict:
        return {**asdict(self), "precision": self.precision, "recall": self.recall,
                "f_score": self.f_score, "precision_undefined": self.precision_undefined,
                "recall_undefined": self.recall_undefined}


def f_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 2.0 * precision * recall / s if s > 0 else 0.0


def precision_recall_f(predicted, truth, universe=None) -> Metrics:
    """Set-based counts; ``tn`` is filled only when ``universe`` is given."""
    predicted, truth = set(predicted), set(truth)
    tp = len(predicted & truth)
    tn = len(set(universe) - predicted - truth) if universe is not None else 0
    return Metrics(tp, len(predicted - truth), len(truth - predicted), tn)


def confusion(scores, labels, threshold: float) -> Metrics:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pred = scores >= threshold
    return Metrics(int(np.sum(pred & labels)), int(np.sum(pred & ~labels)),
                   int(np.sum(~pred & labels)), int(np.sum(~pred & ~labels)))


def roc_auc(scores, labels=None) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic.

    Accepts ``(scores, labels)`` arrays or a single sequence of
    ``(score, label)`` pairs. Tied positive/negative pairs count one half.
    """
    if labels is None:
        pairs = list(scores)
        scores = [p[0] for p in pairs]
        labels = [p[1] for p in pairs]
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC AUC needs both positive and negative examples")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    # average 1-based ranks over tie groups
    starts = np.flatnonzero(np.r_[True, s_sorted[1:] != s_sorted[:-1]])
    ends = np.r_[starts[1:], len(s)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def match_regions(detected, truth, iou_min: float = 0.5):
    """Greedy one-to-one matching by descending IoU.

    Returns ``(pairs, unmatched_detected, unmatched_truth)`` as index lists.
    """
    cands = []
    for i, d in enumerate(detected):
        for j, t in enumerate(truth):
            iou = d.iou(t)
            if iou >= iou_min:
                cands.append((-iou, i, j))
    cands.sort()
    used_d, used_t, pairs = set(), set(), []
    for _, i, j in cands:
        if i not in used_d and j not in used_t:
            used_d.add(i)
            used_t.add(j)
            pairs.append((i, j))
    return (pairs, [i for i in range(len(detected)) if i not in used_d],
            [j for j in range(len(truth)) if j not in used_t])


def match_panels(detected, truth, iou_min: float = 0.5) -> Metrics:
    """Panel-level counts for one figure.

    ``detected`` holds objects with a ``region`` box (or boxes); ``truth``
    holds boxes. Unmatched detections are false positives, unmatched truth
    panels false negatives.
    """
    d = [getattr(p, "region", p) for p in detected]
    t = [getattr(p, "region", p) for p in truth]
    pairs, ud, ut = match_regions(d, t, iou_min)
    return Metrics(len(pairs), len(ud), len(ut), 0)


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


@dataclass(frozen=True)
class StatsReport:
    figures_processed: int
    panels_detected: int
    labels_detected: int
    gene_tokens_total: int
    gene_tokens_in_labels: int
    tokens_total: int
    tokens_in_labels: int

    @property
    def panels_per_figure(self):
        return _ratio(self.panels_detected, self.figures_processed)[0]

    @property
    def labels_per_panel(self):
        return _ratio(self.labels_detected, self.panels_detected)[0]

    @property
    def gene_ratio_all(self):
        return _ratio(self.gene_tokens_total, self.tokens_total)[0]

    @property
    def gene_ratio_labels(self):
        return _ratio(self.gene_tokens_in_labels, self.tokens_in_labels)[0]

    def flags(self) -> dict:
        return {
            "panels_per_figure_undefined": self.figures_processed == 0,
            "labels_per_panel_undefined": self.panels_detected == 0,
            "gene_ratio_all_undefined": self.tokens_total == 0,
            "gene_ratio_labels_undefined": self.tokens_in_labels == 0,
        }

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA_VERSION,
            **asdict(self),
            "panels_per_figure": self.panels_per_figure,
            "labels_per_panel": self.labels_per_panel,
            "gene_ratio_all": self.gene_ratio_all,
            "gene_ratio_labels": self.gene_ratio_labels,
            "flags": self.flags(),
        }

    def render_json(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def render_table(self) -> str:
        rows = [
            ("Processed figures", f"{self.figures_processed}"),
            ("Detected gel panels", f"{self.panels_detected}"),
            ("Detected gel panels per figure", f"{self.panels_per_figure:.3f}"),
            ("Detected gel labels", f"{self.labels_detected}"),
            ("Detected gel labels per panel", f"{self.labels_per_panel:.3f}"),
            ("Detected gene tokens", f"{self.gene_tokens_total}"),
            ("Detected gene tokens in gel labels", f"{self.gene_tokens_in_labels}"),
            ("Gene token ratio", f"{self.gene_ratio_all:.3f}"),
            ("Gene token ratio in gel labels", f"{self.gene_ratio_labels:.3f}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "".join(f"{name:<{width}}  {value:>10}\n" for name, value in rows)


def corpus_stats(results) -> StatsReport:
    """Fold per-figure results into a report.

    Each result needs ``n_panels``, ``n_labels`` and a ``tokens``
    :class:`~gelmine.ner.TokenCounts`. Folding order does not matter.
    """
    results = list(results)
    if not results:
        raise ValueError("corpus_stats needs at least one figure result")
    n_fig = len(results)
    panels = sum(r.n_panels for r in results)
    labels = sum(r.n_labels for r in results)
    tok_all = sum(r.tokens.tokens_all for r in results)
    gene_all = sum(r.tokens.matched_all for r in results)
    tok_lab = sum(r.tokens.tokens_labels for r in results)
    gene_lab = sum(r.tokens.matched_labels for r in results)
    return StatsReport(n_fig, panels, labels, gene_all, gene_lab, tok_all, tok_lab)
