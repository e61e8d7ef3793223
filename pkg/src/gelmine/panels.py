"""Rule-based grouping of gel segments into panels and label attribution.

Seeds are graphic segments the forest scores at or above ``seed_threshold``.
Regions grow breadth-first through segments scoring at least
``expand_threshold`` that lie within ``max_gap`` pixels of a member with no
text segment in between. Regions without a seed are dropped.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

from .corpus import BoundingBox, Segment, box_gap, enclosing_box, farthest_corner_distance

SEED = "seed"
EXPANDED = "expanded"


@dataclass(frozen=True)
class PanelParams:
    seed_threshold: float = 0.60
    expand_threshold: float = 0.15
    max_gap: float = 50.0
    label_near: float = 30.0
    label_far: float = 150.0

    def __post_init__(self):
        if min(self.seed_threshold, self.expand_threshold, self.max_gap,
               self.label_near, self.label_far) <= 0:
            raise ValueError("panel parameters must be positive")
        if self.expand_threshold > self.seed_threshold:
            raise ValueError("expand_threshold must not exceed seed_threshold")
        if self.label_near > self.label_far:
            raise ValueError("label_near must not exceed label_far")


@dataclass(frozen=True)
class GelRegion:
    id: int
    region: BoundingBox
    members: tuple  # (segment id, SEED | EXPANDED), sorted by segment id

    @property
    def member_segment_ids(self) -> frozenset:
        return frozenset(sid for sid, _ in self.members)


@dataclass(frozen=True)
class GelPanel:
    id: int
    region: BoundingBox
    members: tuple
    label_segment_ids: frozenset = frozenset()

    @property
    def member_segment_ids(self) -> frozenset:
        return frozenset(sid for sid, _ in self.members)

    @property
    def provenance(self) -> dict:
        return dict(self.members)

    def to_record(self, figure_id: str, texts_by_id: dict) -> dict:
        return {
            "figure_id": figure_id,
            "panel_id": self.id,
            "region": self.region.as_list(),
            "members": sorted(self.member_segment_ids),
            "labels": [{"segment_id": sid, "text": texts_by_id[sid].text or ""}
                       for sid in sorted(self.label_segment_ids)],
        }


def text_between(a: BoundingBox, b: BoundingBox, texts) -> bool:
    """Whether any text box intersects the gap band separating ``a`` and ``b``.

    Separated on one axis, the band spans the gap on that axis and the shared
    extent on the other; separated on both, it is the corner rectangle between
    the near edges. Overlapping or touching boxes have no band.
    """
    gx0, gx1 = min(a.x1, b.x1), max(a.x0, b.x0)
    gy0, gy1 = min(a.y1, b.y1), max(a.y0, b.y0)
    sep_x = gx1 > gx0
    sep_y = gy1 > gy0
    if not sep_x and not sep_y:
        return False
    if sep_x and sep_y:
        band = (gx0, gy0, gx1, gy1)
    elif sep_x:
        band = (gx0, max(a.y0, b.y0), gx1, min(a.y1, b.y1))
    else:
        band = (max(a.x0, b.x0), gy0, min(a.x1, b.x1), gy1)
    bx0, by0, bx1, by1 = band
    for t in texts:
        tb = t.bbox if isinstance(t, Segment) else t
        if min(bx1, tb.x1) - max(bx0, tb.x0) > 0 and min(by1, tb.y1) - max(by0, tb.y0) > 0:
            return True
    return False


def group_gel_segments(segments, proba: dict, params: PanelParams = PanelParams()) -> list[GelRegion]:
    """Connected groups of candidate gel segments that contain at least one seed."""
    segments = list(segments)
    texts = [s for s in segments if s.is_text]
    cands = sorted((s for s in segments
                    if not s.is_text and proba[s.id] >= params.expand_threshold),
                   key=lambda s: s.id)
    n = len(cands)
    adj = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            a, b = cands[i].bbox, cands[j].bbox
            if box_gap(a, b) <= params.max_gap and not text_between(a, b, texts):
                adj[i].append(j)
                adj[j].append(i)

    seen = [False] * n
    regions = []
    for start in range(n):
        if seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            i = queue.popleft()
            comp.append(i)
            for j in adj[i]:
                if not seen[j]:
                    seen[j] = True
                    queue.append(j)
        members = tuple(sorted(
            (cands[i].id, SEED if proba[cands[i].id] >= params.seed_threshold else EXPANDED)
            for i in comp))
        if any(flag == SEED for _, flag in members):
            box = enclosing_box(cands[i].bbox for i in comp)
            regions.append((box, members))

    regions.sort(key=lambda r: (r[0].y0, r[0].x0, r[0].y1, r[0].x1))
    return [GelRegion(k, box, members) for k, (box, members) in enumerate(regions)]


def label_qualifies(text: BoundingBox, region: BoundingBox, params: PanelParams) -> bool:
    return (box_gap(text, region) <= params.label_near
            and farthest_corner_distance(text, region) <= params.label_far)


def attach_labels(regions, texts, params: PanelParams = PanelParams()) -> list[GelPanel]:
    """Attribute text segments to regions; each text goes to at most one panel.

    A text qualifying for several regions goes to the one with the smallest
    gap, ties to the smaller region id.
    """
    regions = list(regions)
    owner = {}
    for t in texts:
        best = None
        for r in regions:
            if label_qualifies(t.bbox, r.region, params):
                key = (box_gap(t.bbox, r.region), r.id)
                if best is None or key < best:
                    best = key
        if best is not None:
            owner[t.id] = best[1]
    return [GelPanel(r.id, r.region, r.members,
                     frozenset(sid for sid, rid in owner.items() if rid == r.id))
            for r in regions]


def detect_panels(segments, proba: dict, params: PanelParams = PanelParams()) -> list[GelPanel]:
    segments = list(segments)
    regions = group_gel_segments(segments, proba, params)
    return attach_labels(regions, [s for s in segments if s.is_text], params)


def panels_jsonl(records) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n" for r in records)
