import json
from pathlib import Path

import numpy as np
import pytest

from gelmine.corpus import BoundingBox, Figure, Segment, SegmentKind, encode_png


def white(h, w):
    return np.full((h, w, 3), 255, dtype=np.uint8)


def graphic(sid, x0, y0, x1, y1):
    return Segment(sid, BoundingBox(x0, y0, x1, y1), SegmentKind.GRAPHIC)


def text(sid, x0, y0, x1, y1, s=""):
    return Segment(sid, BoundingBox(x0, y0, x1, y1), SegmentKind.TEXT, s)


def figure(pixels, segments=(), truth=None, fid="f"):
    return Figure(fid, pixels, tuple(segments), truth)


def write_figure(root: Path, fid: str, pixels, sidecar=None):
    path = root / f"{fid}.png"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(pixels))
    if sidecar is not None:
        (root / f"{fid}.sidecar.json").write_text(json.dumps(sidecar), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpora(tmp_path_factory):
    """A small train/test pair of synthetic corpora shared by slow tests."""
    from gelmine.synth import SynthSpec, generate_corpus

    root = tmp_path_factory.mktemp("synth")
    spec = SynthSpec(n_figures=40, seed=7)
    generate_corpus(spec, root / "train")
    generate_corpus(spec, root / "test", start_index=1000)
    return root


def toy_tiles(n, seed=0):
    """Separable tiles: a dark blob class (gel) and a light blob class, both textured."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:48, 0:48]
    tiles, labels = [], []
    for k in range(n):
        gel = k % 2 == 0
        cy, cx = rng.uniform(14, 34, size=2)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rng.uniform(5, 9) ** 2))
        base = 0.8 - 0.6 * blob if gel else 0.3 + 0.6 * blob
        tiles.append(np.clip(base + rng.normal(0, 0.03, (48, 48)), 0, 1))
        labels.append(gel)
    return tiles, labels


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
