import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelmine.corpus import BoundingBox as B
from gelmine.evalstats import (Metrics, SingleClassError, StatsReport, confusion, corpus_stats, f_score,
                               match_panels, precision_recall_f, roc_auc)
from gelmine.ner import TokenCounts

import oracles


class TestPRF:
    def test_reference_balanced_row(self):
        assert abs(f_score(0.765, 0.739) - 0.752) <= 0.0005

    def test_sets_reproducing_balanced_row(self):
        # tp/(tp+fp) = 0.765 and tp/(tp+fn) = 0.739 exactly
        tp, fp, fn = 765 * 739, 739_000 - 765 * 739, 765_000 - 765 * 739
        predicted = set(range(tp + fp))
        truth = set(range(tp)) | set(range(tp + fp, tp + fp + fn))
        m = precision_recall_f(predicted, truth)
        assert (m.precision, m.recall) == (pytest.approx(0.765), pytest.approx(0.739))
        assert abs(m.f_score - 0.752) <= 0.0005

    def test_identical(self):
        m = precision_recall_f({1, 2}, {1, 2})
        assert m.precision == m.recall == m.f_score == 1.0

    def test_disjoint(self):
        m = precision_recall_f({1}, {2})
        assert m.precision == m.recall == m.f_score == 0.0

    def test_empty_flags(self):
        m = precision_recall_f(set(), {1})
        assert m.precision == 0.0 and m.precision_undefined and not m.recall_undefined

    def test_universe_fills_tn(self):
        assert precision_recall_f({1}, {1, 2}, universe=range(5)).tn == 3

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_harmonic_mean_bounds(self, tp, fp, fn):
        m = Metrics(tp, fp, fn, 0)
        p, r = m.precision, m.recall
        if p > 0 and r > 0:
            assert min(p, r) - 1e-12 <= m.f_score <= max(p, r) + 1e-12

    def test_addition(self):
        assert Metrics(1, 2, 3, 4) + Metrics(1, 1, 1, 1) == Metrics(2, 3, 4, 5)

    def test_confusion(self):
        m = confusion([0.1, 0.3, 0.6, 0.9], [False, True, False, True], 0.3)
        assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 0, 1)


class TestAuc:
    def test_separated(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_inverted(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_all_tied(self):
        assert roc_auc([0.4] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_pairs_form(self):
        assert roc_auc([(0.9, True), (0.1, False)]) == 1.0

    def test_single_class(self):
        with pytest.raises(SingleClassError):
            roc_auc([0.1, 0.2], [1, 1])

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
    def test_matches_pairwise_oracle(self, data):
        labels = [l for _, l in data]
        if all(labels) or not any(labels):
            return
        scores = [s / 6 for s, _ in data]
        pos = [s for s, l in zip(scores, labels) if l]
        neg = [s for s, l in zip(scores, labels) if not l]
        auc = roc_auc(scores, labels)
        assert auc == pytest.approx(oracles.auc_pairs(pos, neg), abs=1e-12)
        assert roc_auc(scores, [not l for l in labels]) == pytest.approx(1 - auc, abs=1e-12)
        assert roc_auc(np.exp(3 * np.array(scores)) - 7, labels) == pytest.approx(auc, abs=1e-12)


class TestPanelMatching:
    def test_identical(self):
        m = match_panels([B(0, 0, 10, 10)], [B(0, 0, 10, 10)])
        assert (m.tp, m.fp, m.fn) == (1, 0, 0)

    def test_low_iou(self):
        d, t = B(0, 0, 10, 10), B(0, 0, 10, 25)
        assert d.iou(t) == 0.4
        m = match_panels([d], [t])
        assert (m.tp, m.fp, m.fn) == (0, 1, 1)

    def test_one_to_one(self):
        m = match_panels([B(0, 0, 10, 10), B(0, 0, 10, 11)], [B(0, 0, 10, 10)])
        assert (m.tp, m.fp, m.fn) == (1, 1, 0)

    def test_accepts_panels(self):
        assert match_panels([SimpleNamespace(region=B(0, 0, 4, 4))], [B(0, 0, 4, 4)]).tp == 1

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(1, 20), st.integers(1, 20)),
                    max_size=6),
           st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(1, 20), st.integers(1, 20)),
                    max_size=6))
    def test_count_identities(self, ds, ts):
        d = [B(x, y, x + w, y + h) for x, y, w, h in ds]
        t = [B(x, y, x + w, y + h) for x, y, w, h in ts]
        m = match_panels(d, t)
        assert m.tp + m.fp == len(d) and m.tp + m.fn == len(t)


class TestStats:
    def test_table_quotients(self):
        r = StatsReport(884152, 85942, 309340, 1854609, 75610, 1, 1)
        assert abs(r.labels_per_panel - 3.599) <= 0.0005
        assert abs(r.panels_per_figure - 0.097) <= 0.0005

    def test_zero_panels(self):
        r = StatsReport(3, 0, 0, 0, 0, 0, 0)
        assert r.labels_per_panel == 0.0 and r.flags()["labels_per_panel_undefined"]

    def test_fold_is_order_free(self):
        res = [SimpleNamespace(n_panels=i % 3, n_labels=i, tokens=TokenCounts(10 * i, i, 5 * i, i // 2))
               for i in range(7)]
        assert corpus_stats(res) == corpus_stats(res[::-1])

    def test_rendering(self):
        r = StatsReport(10, 4, 12, 5, 2, 100, 40)
        obj = json.loads(r.render_json())
        assert obj["schema"] == "gelmine-report/1"
        assert obj["labels_per_panel"] == 3.0 and obj["gene_ratio_labels"] == 0.05
        table = r.render_table()
        assert "Detected gel labels per panel" in table and "3.000" in table
        assert len(table.splitlines()) == 9
