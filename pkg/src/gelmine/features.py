"""The 39 per-segment descriptors fed to the gel classifier.

Column order is frozen (see ``FEATURE_NAMES``); model files record
``FEATURE_SCHEMA_VERSION`` and refuse vectors of another layout.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .corpus import BoundingBox, Figure, Segment, to_gray

FEATURE_SCHEMA_VERSION = "gelmine-features/1"

HARALICK_NAMES = (
    "angular_second_moment", "contrast", "correlation", "sum_of_squares_variance",
    "inverse_difference_moment", "sum_average", "sum_variance", "sum_entropy",
    "entropy", "difference_variance", "difference_entropy",
    "info_measure_correlation_1", "info_measure_correlation_2",
)
FEATURE_NAMES = (
    ("rel_cx", "rel_cy", "rel_w", "rel_h", "abs_w", "abs_h")
    + tuple(f"hist_{i:02d}" for i in range(16))
    + ("mean_r", "mean_g", "mean_b")
    + tuple(f"haralick_{n}" for n in HARALICK_NAMES)
    + ("char_count",)
)
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 39

# (dx, dy) pixel offsets; closed under transposition up to sign.
GLCM_OFFSETS = ((1, 0), (1, 1), (0, 1), (-1, 1))
GLCM_LEVELS = 32


class DegenerateRegionError(ValueError):
    """Raised for regions too small to texture (fewer than 4 pixels)."""


def _crop(figure: Figure, bbox: BoundingBox) -> np.ndarray:
    if not bbox.within(figure.width, figure.height):
        raise ValueError(f"box {bbox.as_list()} outside figure {figure.id}")
    return figure.pixels[bbox.y0:bbox.y1, bbox.x0:bbox.x1]


def grayscale_histogram(figure: Figure, bbox: BoundingBox) -> np.ndarray:
    """16-bin gray histogram of the box, normalized by its area."""
    gray = to_gray(_crop(figure, bbox))
    counts = np.bincount((gray >> 4).ravel(), minlength=16)
    return counts / gray.size


def quantize(gray: np.ndarray, levels: int = GLCM_LEVELS) -> np.ndarray:
    return (gray.astype(np.int64) * levels) // 256


def cooccurrence(q: np.ndarray, dx: int, dy: int, levels: int) -> np.ndarray | None:
    """Symmetric, normalized co-occurrence matrix for one offset.

    Returns None when the region has no pixel pair at this offset.
    """
    h, w = q.shape
    ys, ye = max(0, -dy), h - max(0, dy)
    xs, xe = max(0, -dx), w - max(0, dx)
    if ye <= ys or xe <= xs:
        return None
    a = q[ys:ye, xs:xe]
    b = q[ys + dy:ye + dy, xs + dx:xe + dx]
    counts = np.bincount((a * levels + b).ravel(), minlength=levels * levels).reshape(levels, levels)
    sym = (counts + counts.T).astype(np.float64)
    return sym / sym.sum()


def _plogp(p):
    nz = p[p > 0]
    return -np.sum(nz * np.log2(nz))


def haralick_from_glcm(p: np.ndarray) -> np.ndarray:
    """Haralick features f1..f13 of a normalized co-occurrence matrix.

    Gray indices are 0-based, entropies use log2, the correlation of a
    zero-variance matrix is 1 and information measure 1 is 0 when both
    marginal entropies vanish.
    """
    n = p.shape[0]
    idx = np.arange(n, dtype=np.float64)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mux, muy = idx @ px, idx @ py
    varx = ((idx - mux) ** 2) @ px
    vary = ((idx - muy) ** 2) @ py

    k = (i + j).astype(np.int64).ravel()
    d = np.abs(i - j).astype(np.int64).ravel()
    p_sum = np.bincount(k, weights=p.ravel(), minlength=2 * n - 1)
    p_diff = np.bincount(d, weights=p.ravel(), minlength=n)
    ks = np.arange(2 * n - 1, dtype=np.float64)

    asm = np.sum(p * p)
    contrast = np.sum(idx ** 2 * p_diff)
    sd = np.sqrt(varx * vary)
    correlation = 1.0 if sd == 0 else (np.sum(i * j * p) - mux * muy) / sd
    sum_squares = np.sum((i - mux) ** 2 * p)
    idm = np.sum(p / (1.0 + (i - j) ** 2))
    sum_avg = ks @ p_sum
    sum_var = ((ks - sum_avg) ** 2) @ p_sum
    sum_ent = _plogp(p_sum)
    hxy = _plogp(p)
    diff_mean = idx @ p_diff
    diff_var = ((idx - diff_mean) ** 2) @ p_diff
    diff_ent = _plogp(p_diff)

    hx, hy = _plogp(px), _plogp(py)
    outer = np.outer(px, py)
    mask = p > 0
    hxy1 = -np.sum(p[mask] * np.log2(outer[mask]))
    hxy2 = _plogp(outer)
    hmax = max(hx, hy)
    imc1 = 0.0 if hmax == 0 else (hxy - hxy1) / hmax
    imc2 = np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * (hxy2 - hxy))))

    return np.array([asm, contrast, correlation, sum_squares, idm, sum_avg, sum_var,
                     sum_ent, hxy, diff_var, diff_ent, imc1, imc2], dtype=np.float64)


def haralick_gray(gray: np.ndarray, levels: int = GLCM_LEVELS) -> np.ndarray:
    """Offset-averaged Haralick features of a 2-D uint8 gray array."""
    if gray.size < 4:
        raise DegenerateRegionError(f"region of {gray.size} pixels is too small for texture features")
    q = quantize(gray, levels)
    rows = [haralick_from_glcm(m) for dx, dy in GLCM_OFFSETS
            if (m := cooccurrence(q, dx, dy, levels)) is not None]
    return np.mean(rows, axis=0)


def haralick_features(figure: Figure, bbox: BoundingBox, levels: int = GLCM_LEVELS) -> np.ndarray:
    return haralick_gray(to_gray(_crop(figure, bbox)), levels)


def _char_count(segment: Segment, texts) -> int:
    total = 0
    for t in texts:
        if t.id == segment.id or t.bbox.intersects(segment.bbox):
            total += t.char_count
    return total


def extract_features(figure: Figure, segment: Segment) -> np.ndarray:
    """39-vector for one segment, in ``FEATURE_NAMES`` order."""
    bbox = segment.bbox
    crop = _crop(figure, bbox)
    gray = to_gray(crop)
    out = np.empty(N_FEATURES, dtype=np.float64)
    cx, cy = bbox.center
    out[0:6] = (cx / figure.width, cy / figure.height,
                bbox.width / figure.width, bbox.height / figure.height,
                bbox.width, bbox.height)
    out[6:22] = np.bincount((gray >> 4).ravel(), minlength=16) / gray.size
    out[22:25] = crop.reshape(-1, 3).mean(axis=0) / 255.0
    out[25:38] = haralick_gray(gray)
    out[38] = _char_count(segment, figure.text_segments)
    return out


def feature_matrix(figure: Figure, segments=None) -> np.ndarray:
    segments = figure.segments if segments is None else segments
    if not segments:
        return np.empty((0, N_FEATURES))
    return np.vstack([extract_features(figure, s) for s in segments])


def features_csv(rows, include_label: bool = True) -> str:
    """Render ``(figure_id, segment_id, vector, label)`` rows as CSV text.

    Floats use ``repr`` so the dump reloads bit-exactly.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["figure_id", "segment_id", *FEATURE_NAMES]
    if include_label:
        header.append("label")
    writer.writerow(header)
    for fid, sid, vec, label in rows:
        row = [fid, sid, *(repr(float(v)) for v in vec)]
        if include_label:
            row.append("" if label is None else ("gel" if label else "non-gel"))
        writer.writerow(row)
    return buf.getvalue()


def read_features_csv(text: str):
    """Inverse of :func:`features_csv`: returns ids, matrix and labels (None when absent)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header[2:2 + N_FEATURES]) != FEATURE_NAMES:
        raise ValueError("feature CSV columns do not match the current schema")
    has_label = len(header) > 2 + N_FEATURES
    ids, rows, labels = [], [], []
    for rec in reader:
        ids.append((rec[0], int(rec[1])))
        rows.append([float(v) for v in rec[2:2 + N_FEATURES]])
        if has_label:
            labels.append(None if rec[-1] == "" else rec[-1] == "gel")
    return ids, np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES), labels if has_label else None
