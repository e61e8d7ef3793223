"""Figure corpus loading, sidecar annotations and box geometry.

Boxes are half-open pixel rectangles with a top-left origin: ``(x0, y0)`` is
the first pixel inside the box, ``(x1, y1)`` the first pixel past it.
"""

from __future__ import annotations

import enum
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".sidecar.json"
IMAGE_SUFFIXES = (".png", ".ppm")


class CorpusError(Exception):
    """Base class for corpus loading failures."""


class ImageDecodeError(CorpusError):
    pass


class SidecarValidationError(CorpusError):
    """A sidecar file is malformed or references geometry outside the image."""

    def __init__(self, message, segment_id=None):
        super().__init__(message)
        self.segment_id = segment_id


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True, order=True)
class BoundingBox:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"degenerate box {self.as_list()}")
        if min(self.x0, self.y0) < 0:
            raise ValueError(f"negative coordinate in box {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    def within(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def intersection_area(self, other: BoundingBox) -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        return max(w, 0) * max(h, 0)

    def intersects(self, other: BoundingBox) -> bool:
        """True when the boxes share a region of positive area."""
        return self.intersection_area(other) > 0

    def iou(self, other: BoundingBox) -> float:
        inter = self.intersection_area(other)
        return inter / (self.area + other.area - inter)

    def union(self, other: BoundingBox) -> BoundingBox:
        return BoundingBox(min(self.x0, other.x0), min(self.y0, other.y0),
                           max(self.x1, other.x1), max(self.y1, other.y1))

    def shifted(self, dx: int, dy: int) -> BoundingBox:
        return BoundingBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    @classmethod
    def from_list(cls, values) -> BoundingBox:
        x0, y0, x1, y1 = (int(v) for v in values)
        return cls(x0, y0, x1, y1)


def enclosing_box(boxes) -> BoundingBox:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("no boxes to enclose")
    return BoundingBox(min(b.x0 for b in boxes), min(b.y0 for b in boxes),
                       max(b.x1 for b in boxes), max(b.y1 for b in boxes))


def _axis_gap(a0, a1, b0, b1) -> int:
    # Half-open intervals that touch (a1 == b0) have gap 0.
    return max(b0 - a1, a0 - b1, 0)


def box_gap(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between the closest points of two boxes.

    Zero when the boxes overlap or touch.
    """
    dx = _axis_gap(a.x0, a.x1, b.x0, b.x1)
    dy = _axis_gap(a.y0, a.y1, b.y0, b.y1)
    return math.hypot(dx, dy)


def point_box_distance(x: float, y: float, box: BoundingBox) -> float:
    dx = max(box.x0 - x, 0.0, x - box.x1)
    dy = max(box.y0 - y, 0.0, y - box.y1)
    return math.hypot(dx, dy)


def farthest_corner_distance(a: BoundingBox, region: BoundingBox) -> float:
    """Largest point-to-box distance from a corner of ``a`` to ``region``."""
    corners = ((a.x0, a.y0), (a.x1, a.y0), (a.x0, a.y1), (a.x1, a.y1))
    return max(point_box_distance(x, y, region) for x, y in corners)


# ---------------------------------------------------------------------------
# data model


class SegmentKind(str, enum.Enum):
    GRAPHIC = "graphic"
    TEXT = "text"


@dataclass(frozen=True)
class Segment:
    id: int
    bbox: BoundingBox
    kind: SegmentKind
    text: str | None = None

    def __post_init__(self):
        if self.kind is SegmentKind.GRAPHIC and self.text:
            raise ValueError(f"graphic segment {self.id} carries text")

    @property
    def char_count(self) -> int:
        return len(self.text) if self.text is not None else 0

    @property
    def is_text(self) -> bool:
        return self.kind is SegmentKind.TEXT

    def to_json(self) -> dict:
        out = {"id": self.id, "bbox": self.bbox.as_list(), "kind": self.kind.value}
        if self.text is not None:
            out["text"] = self.text
        return out


@dataclass(frozen=True)
class PanelTruth:
    member_segment_ids: frozenset
    label_segment_ids: frozenset = frozenset()


@dataclass(frozen=True)
class GeneTokenTruth:
    segment_id: int
    token: str


@dataclass(frozen=True)
class GroundTruth:
    gel_segment_ids: frozenset = frozenset()
    panels: tuple = ()
    gene_tokens: tuple = ()

    def to_json(self) -> dict:
        return {
            "gel_segment_ids": sorted(self.gel_segment_ids),
            "panels": [{"member_segment_ids": sorted(p.member_segment_ids),
                        "label_segment_ids": sorted(p.label_segment_ids)}
                       for p in self.panels],
            "gene_tokens": [{"segment_id": g.segment_id, "token": g.token}
                            for g in self.gene_tokens],
        }

    @classmethod
    def from_json(cls, obj: dict) -> GroundTruth:
        panels = tuple(PanelTruth(frozenset(p["member_segment_ids"]),
                                  frozenset(p.get("label_segment_ids", ())))
                       for p in obj.get("panels", ()))
        genes = tuple(GeneTokenTruth(g["segment_id"], g["token"])
                      for g in obj.get("gene_tokens", ()))
        return cls(frozenset(obj.get("gel_segment_ids", ())), panels, genes)


@dataclass(frozen=True, eq=False)
class Figure:
    id: str
    pixels: np.ndarray  # (height, width, 3) uint8, read-only
    segments: tuple = ()
    ground_truth: GroundTruth | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError("pixels must be an (h, w, 3) uint8 array")
        px = px.copy() if px.flags.writeable else px
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)
        ids = [s.id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise SidecarValidationError(f"figure {self.id}: duplicate segment ids")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def text_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.is_text]

    @property
    def graphic_segments(self) -> list[Segment]:
        return [s for s in self.segments if not s.is_text]

    def segment(self, segment_id) -> Segment:
        for s in self.segments:
            if s.id == segment_id:
                return s
        raise KeyError(segment_id)

    def gray(self) -> np.ndarray:
        return to_gray(self.pixels)

    def with_segments(self, segments) -> Figure:
        return Figure(self.id, self.pixels, tuple(segments), self.ground_truth)


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Rec. 601 luma rounded to the nearest integer, as uint8."""
    px = pixels.astype(np.float64)
    g = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    return np.clip(np.floor(g + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# sidecar files


def parse_sidecar(obj: dict, width: int, height: int, figure_id: str = "?"):
    """Validate a decoded sidecar object against image bounds.

    Returns ``(segments, ground_truth_or_None)``.
    """
    if not isinstance(obj, dict) or not isinstance(obj.get("segments", []), list):
        raise SidecarValidationError(f"{figure_id}: sidecar must be an object with a segments array")
    segments = []
    seen = set()
    for raw in obj.get("segments", []):
        sid = raw.get("id")
        if sid is None or sid in seen:
            raise SidecarValidationError(f"{figure_id}: missing or duplicate segment id {sid!r}", sid)
        seen.add(sid)
        try:
            bbox = BoundingBox.from_list(raw["bbox"])
            kind = SegmentKind(raw["kind"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SidecarValidationError(f"{figure_id}: segment {sid!r}: {exc}", sid) from exc
        if not bbox.within(width, height):
            raise SidecarValidationError(
                f"{figure_id}: segment {sid!r} bbox {bbox.as_list()} outside {width}x{height} image", sid)
        text = raw.get("text")
        if kind is SegmentKind.GRAPHIC and text:
            raise SidecarValidationError(f"{figure_id}: graphic segment {sid!r} has text", sid)
        if kind is SegmentKind.TEXT and text is None:
            text = ""
        segments.append(Segment(sid, bbox, kind, text))

    truth = None
    if "ground_truth" in obj:
        truth = GroundTruth.from_json(obj["ground_truth"])
        _validate_truth(truth, seen, figure_id)
    return segments, truth


def _validate_truth(truth: GroundTruth, ids: set, figure_id: str):
    referenced = set(truth.gel_segment_ids)
    members_seen = set()
    for p in truth.panels:
        if members_seen & p.member_segment_ids:
            raise SidecarValidationError(f"{figure_id}: ground-truth panels share members")
        members_seen |= p.member_segment_ids
        referenced |= p.member_segment_ids | p.label_segment_ids
    referenced |= {g.segment_id for g in truth.gene_tokens}
    missing = referenced - ids
    if missing:
        sid = sorted(missing, key=str)[0]
        raise SidecarValidationError(f"{figure_id}: ground truth references unknown segment {sid!r}", sid)


def sidecar_json(segments, ground_truth: GroundTruth | None = None) -> dict:
    out = {"segments": [s.to_json() for s in segments]}
    if ground_truth is not None:
        out["ground_truth"] = ground_truth.to_json()
    return out


# ---------------------------------------------------------------------------
# images


def decode_image(data: bytes, name: str = "<bytes>") -> np.ndarray:
    if data[:2] == b"P6":
        pass
    elif data[:2] in (b"P3", b"P1", b"P2", b"P4", b"P5"):
        raise ImageDecodeError(f"{name}: only binary RGB PPM (P6) is supported")
    elif not data.startswith(b"\x89PNG"):
        raise ImageDecodeError(f"{name}: not a PNG or PPM file")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode != "RGB":
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"{name}: {exc}") from exc


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels), "RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def write_atomic(path, data: bytes | str):
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# corpus index


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    image_path: Path
    sidecar_path: Path | None = None


@dataclass(frozen=True)
class SkippedEntry:
    id: str
    path: Path
    reason: str


@dataclass(frozen=True)
class CorpusIndex:
    root: Path
    entries: tuple = ()
    skipped: tuple = field(default=())

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_json(self) -> str:
        obj = {
            "entries": [{"id": e.id, "image": e.image_path.relative_to(self.root).as_posix(),
                         "sidecar": None if e.sidecar_path is None
                         else e.sidecar_path.relative_to(self.root).as_posix()}
                        for e in self.entries],
            "skipped": [{"id": s.id, "path": s.path.relative_to(self.root).as_posix(),
                         "reason": s.reason} for s in self.skipped],
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _probe_image(path: Path) -> str | None:
    """Return a skip reason if the file cannot be decoded, else None."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        return f"unreadable: {exc.strerror or exc}"
    try:
        decode_image(data, path.name)
    except ImageDecodeError as exc:
        return f"undecodable: {exc}"
    return None


def load_corpus(root, verify: bool = True) -> CorpusIndex:
    """Index every PNG/PPM image below ``root``.

    Figure ids are image paths relative to ``root`` without the extension.
    With ``verify`` each image is decoded once; files that fail are listed in
    ``CorpusIndex.skipped`` instead of ``entries``.
    """
    root = Path(root)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise CorpusError(f"corpus root {root} is not a readable directory")
    found = {}
    for dirpath, dirnames, filenames in os.walk(root, onerror=_raise):
        dirnames.sort()
        for name in filenames:
            path = Path(dirpath) / name
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            fid = path.relative_to(root).with_suffix("").as_posix()
            if fid in found:
                raise CorpusError(f"figure id {fid} has more than one image file")
            found[fid] = path

    entries, skipped = [], []
    for fid in sorted(found):
        path = found[fid]
        reason = _probe_image(path) if verify else None
        if reason is not None:
            log.warning("skipping %s: %s", path, reason)
            skipped.append(SkippedEntry(fid, path, reason))
            continue
        sidecar = path.with_name(path.name[: -len(path.suffix)] + SIDECAR_SUFFIX)
        entries.append(CorpusEntry(fid, path, sidecar if sidecar.is_file() else None))
    return CorpusIndex(root, tuple(entries), tuple(skipped))


def _raise(exc):
    raise CorpusError(f"cannot read corpus directory: {exc}") from exc


def load_figure(entry: CorpusEntry) -> Figure:
    try:
        data = Path(entry.image_path).read_bytes()
    except OSError as exc:
        raise ImageDecodeError(f"{entry.image_path}: {exc}") from exc
    pixels = decode_image(data, str(entry.image_path))
    h, w = pixels.shape[:2]
    segments, truth = [], None
    if entry.sidecar_path is not None:
        try:
            obj = json.loads(Path(entry.sidecar_path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise SidecarValidationError(f"{entry.sidecar_path}: {exc}") from exc
        segments, truth = parse_sidecar(obj, w, h, entry.id)
    return Figure(entry.id, pixels, tuple(segments), truth)
