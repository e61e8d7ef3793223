"""Experimental tile classifier: a small three-stage ConvNet in plain numpy.

Shape chain for one 48x48 grayscale tile::

    1x48x48 -conv 8@5x5-> 8x44x44 -tanh, avg 2x2-> 8x22x22
            -conv 24@5x5-> 24x18x18 -tanh, avg 3x3-> 24x6x6
            -conv 72@6x6-> 72x1x1 -tanh-> fc 72->2 -> softmax

Trained per sample with plain SGD on cross-entropy. Not part of the default
detection pipeline.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .corpus import Figure, write_atomic

log = logging.getLogger(__name__)

TILE = 48
MODEL_FORMAT_VERSION = 1

# (name, out_channels, in_channels, kernel, pool after)
LAYERS = (("conv1", 8, 1, 5, 2), ("conv2", 24, 8, 5, 3), ("conv3", 72, 24, 6, 1))
N_CLASSES = 2
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "Wf", "bf")

GEL_RGB = (0, 128, 0)
OTHER_RGB = (139, 69, 19)
SKIPPED_RGB = (255, 255, 255)


class ShapeError(ValueError):
    pass


class SingleClassError(ValueError):
    pass


def param_shapes() -> dict:
    shapes = {}
    for k, (_, out_c, in_c, ksz, _) in enumerate(LAYERS, start=1):
        shapes[f"W{k}"] = (out_c, in_c, ksz, ksz)
        shapes[f"b{k}"] = (out_c,)
    shapes["Wf"] = (N_CLASSES, LAYERS[-1][1])
    shapes["bf"] = (N_CLASSES,)
    return shapes


def shape_trace(size: int = TILE) -> list[int]:
    """Spatial side length after each conv and pool stage."""
    trace = [size]
    for _, _, _, ksz, pool in LAYERS:
        size = size - ksz + 1
        trace.append(size)
        if pool > 1:
            if size % pool:
                raise ShapeError(f"side {size} is not divisible by pool {pool}")
            size //= pool
            trace.append(size)
    return trace


N_PARAMS = sum(int(np.prod(s)) for s in param_shapes().values())


@dataclass
class ConvNetModel:
    params: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls) -> ConvNetModel:
        return cls({k: np.zeros(s) for k, s in param_shapes().items()})

    @classmethod
    def init(cls, seed: int) -> ConvNetModel:
        """Weights uniform in +-1/sqrt(fan_in), biases zero."""
        rng = np.random.default_rng(seed)
        params = {}
        for k, s in param_shapes().items():
            if k.startswith("W"):
                fan_in = int(np.prod(s[1:]))
                bound = 1.0 / np.sqrt(fan_in)
                params[k] = rng.uniform(-bound, bound, size=s)
            else:
                params[k] = np.zeros(s)
        return cls(params)

    def copy(self) -> ConvNetModel:
        return ConvNetModel({k: v.copy() for k, v in self.params.items()})

    def to_json(self) -> str:
        obj = {"version": MODEL_FORMAT_VERSION, "tile": TILE,
               "layers": [{"name": n, "filters": o, "in_channels": i, "kernel": k, "pool": p}
                          for n, o, i, k, p in LAYERS],
               "params": {k: {"shape": list(self.params[k].shape),
                              "data": [float(v) for v in self.params[k].ravel()]}
                          for k in PARAM_NAMES}}
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> ConvNetModel:
        obj = json.loads(text)
        if obj.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported convnet model version {obj.get('version')!r}")
        expected = param_shapes()
        params = {}
        for k in PARAM_NAMES:
            shape = tuple(obj["params"][k]["shape"])
            if shape != expected[k]:
                raise ShapeError(f"parameter {k} has shape {shape}, expected {expected[k]}")
            params[k] = np.array(obj["params"][k]["data"], dtype=np.float64).reshape(shape)
        return cls(params)

    def save(self, path):
        write_atomic(path, self.to_json())

    @classmethod
    def load(cls, path) -> ConvNetModel:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# layers


def conv_valid(x, W, b):
    """x: (C, H, W); W: (F, C, k, k) -> (F, H-k+1, W-k+1)."""
    k = W.shape[-1]
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # (C, Ho, Wo, k, k)
    return np.tensordot(W, win, axes=([1, 2, 3], [0, 3, 4])) + b[:, None, None]


def conv_backward(x, W, dz):
    """Gradients of a valid convolution w.r.t. its input, weights and bias."""
    k = W.shape[-1]
    win = sliding_window_view(x, (k, k), axis=(1, 2))
    dW = np.tensordot(dz, win, axes=([1, 2], [1, 2]))  # (F, C, k, k)
    db = dz.sum(axis=(1, 2))
    padded = np.pad(dz, ((0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    pwin = sliding_window_view(padded, (k, k), axis=(1, 2))  # (F, H, W, k, k)
    dx = np.tensordot(W[:, :, ::-1, ::-1], pwin, axes=([0, 2, 3], [0, 3, 4]))
    return dx, dW, db


def avg_pool(x, p):
    if p == 1:
        return x
    c, h, w = x.shape
    return x.reshape(c, h // p, p, w // p, p).mean(axis=(2, 4))


def avg_pool_backward(dy, p):
    if p == 1:
        return dy
    return np.repeat(np.repeat(dy, p, axis=1), p, axis=2) / (p * p)


def softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _as_tile(tile):
    t = np.asarray(tile, dtype=np.float64)
    if t.shape == (TILE, TILE):
        t = t[None]
    if t.shape != (1, TILE, TILE):
        raise ShapeError(f"tile must be {TILE}x{TILE}, got {np.asarray(tile).shape}")
    return t


def _forward_cache(model: ConvNetModel, tile):
    P = model.params
    x = _as_tile(tile)
    cache = []
    for k, (_, _, _, _, pool) in enumerate(LAYERS, start=1):
        z = conv_valid(x, P[f"W{k}"], P[f"b{k}"])
        a = np.tanh(z)
        cache.append((x, a, pool))
        x = avg_pool(a, pool)
    h = x.reshape(-1)
    logits = P["Wf"] @ h + P["bf"]
    return softmax(logits), h, cache


def forward(model: ConvNetModel, tile) -> np.ndarray:
    """Softmax class probabilities ``[p_gel, p_other]`` for one tile."""
    return _forward_cache(model, tile)[0]


def loss_and_grads(model: ConvNetModel, tile, label: int):
    """Cross-entropy loss and its gradient for every parameter.

    ``label`` is the class index (0 = gel, 1 = other).
    """
    P = model.params
    probs, h, cache = _forward_cache(model, tile)
    loss = -np.log(max(probs[label], 1e-300))
    dlogits = probs.copy()
    dlogits[label] -= 1.0
    grads = {"Wf": np.outer(dlogits, h), "bf": dlogits}
    dx = (P["Wf"].T @ dlogits).reshape(LAYERS[-1][1], 1, 1)
    for k in range(len(LAYERS), 0, -1):
        x_in, a, pool = cache[k - 1]
        da = avg_pool_backward(dx, pool)
        dz = da * (1.0 - a * a)
        dx, grads[f"W{k}"], grads[f"b{k}"] = conv_backward(x_in, P[f"W{k}"], dz)
    return loss, grads


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class ConvNetHyper:
    lr: float = 0.01
    epochs: int = 5
    batch: int = 1
    seed: int = 0


def train_convnet(tiles, labels, hyper: ConvNetHyper = ConvNetHyper(), model: ConvNetModel | None = None,
                  history: list | None = None) -> ConvNetModel:
    """Per-sample SGD on cross-entropy.

    ``labels`` are booleans (True = gel). Samples are visited in an order
    shuffled per epoch by a generator seeded with ``hyper.seed``. Mean
    epoch losses are appended to ``history`` when given.
    """
    if hyper.batch != 1:
        raise ValueError("only per-sample SGD (batch=1) is implemented")
    X = [_as_tile(t) for t in tiles]
    y = np.asarray(labels, dtype=bool)
    if len(X) != len(y):
        raise ValueError("tiles and labels differ in length")
    if len(y) == 0 or y.all() or not y.any():
        raise SingleClassError("ConvNet training needs both gel and non-gel tiles")
    model = ConvNetModel.init(hyper.seed) if model is None else model.copy()
    rng = np.random.default_rng([hyper.seed, 1])
    cls = np.where(y, 0, 1)
    for epoch in range(hyper.epochs):
        total = 0.0
        for i in rng.permutation(len(X)):
            loss, grads = loss_and_grads(model, X[i], int(cls[i]))
            total += loss
            for k in PARAM_NAMES:
                model.params[k] -= hyper.lr * grads[k]
        if history is not None:
            history.append(float(total / len(X)))
        log.debug("convnet epoch %d mean loss %.5f", epoch, total / len(X))
    return model


def mean_loss(model: ConvNetModel, tiles, labels) -> float:
    cls = np.where(np.asarray(labels, dtype=bool), 0, 1)
    return float(np.mean([loss_and_grads(model, t, int(c))[0] for t, c in zip(tiles, cls)]))


def predict_gel(model: ConvNetModel, tiles) -> np.ndarray:
    return np.array([forward(model, t)[0] >= 0.5 for t in tiles], dtype=bool)


# ---------------------------------------------------------------------------
# tiling and masks


@dataclass(frozen=True)
class Tile:
    figure_id: str
    x: int
    y: int
    pixels: np.ndarray


@dataclass
class TileSet:
    figure_id: str
    width: int
    height: int
    size: int = TILE
    stride: int = TILE // 2
    tiles: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (x, y, reason)
    labels: list | None = None
    warning: str | None = None


def grid_positions(length: int, size: int, stride: int) -> list[int]:
    if length < size:
        return []
    pos = list(range(0, length - size + 1, stride))
    if pos[-1] != length - size:
        pos.append(length - size)
    return pos


def mean_gradient(tile: np.ndarray) -> float:
    """Mean Sobel gradient magnitude, scaled to intensity change per pixel."""
    gx = ndimage.sobel(tile, axis=1, mode="nearest")
    gy = ndimage.sobel(tile, axis=0, mode="nearest")
    return float(np.hypot(gx, gy).mean() / 8.0)


def tile_image(figure: Figure, size: int = TILE, stride: int = TILE // 2,
               grad_threshold: float = 2.0 / 255) -> TileSet:
    gray = figure.gray().astype(np.float64) / 255.0
    ts = TileSet(figure.id, figure.width, figure.height, size, stride)
    if figure.width < size or figure.height < size:
        ts.warning = f"figure {figure.id} is smaller than one {size}x{size} tile"
        log.warning(ts.warning)
        return ts
    for y in grid_positions(figure.height, size, stride):
        for x in grid_positions(figure.width, size, stride):
            block = gray[y:y + size, x:x + size]
            if mean_gradient(block) < grad_threshold:
                ts.skipped.append((x, y, "low_gradient"))
            else:
                ts.tiles.append(Tile(figure.id, x, y, block.copy()))
    return ts


def label_tiles(tileset: TileSet, gel_boxes, min_fraction: float = 0.5) -> list[bool]:
    """A tile is gel when at least ``min_fraction`` of its pixels lie in gel boxes."""
    mask = np.zeros((tileset.height, tileset.width), dtype=bool)
    for b in gel_boxes:
        mask[b.y0:b.y1, b.x0:b.x1] = True
    s = tileset.size
    return [bool(mask[t.y:t.y + s, t.x:t.x + s].mean() >= min_fraction) for t in tileset.tiles]


def reconstruct_mask(tileset: TileSet, predictions) -> np.ndarray:
    """Paint tiles green (gel), brown (other) or white (skipped).

    Where tiles overlap, each pixel takes the majority vote; a tie that
    includes gel paints gel, a tie between other and skipped paints other.
    Pixels covered by no tile stay white.
    """
    predictions = list(predictions)
    if len(predictions) != len(tileset.tiles):
        raise ValueError("one prediction per kept tile is required")
    h, w, s = tileset.height, tileset.width, tileset.size
    gel = np.zeros((h, w), dtype=np.int32)
    other = np.zeros((h, w), dtype=np.int32)
    skip = np.zeros((h, w), dtype=np.int32)
    for t, p in zip(tileset.tiles, predictions):
        (gel if p else other)[t.y:t.y + s, t.x:t.x + s] += 1
    for x, y, _ in tileset.skipped:
        skip[y:y + s, x:x + s] += 1
    out = np.empty((h, w, 3), dtype=np.uint8)
    out[:] = SKIPPED_RGB
    is_gel = (gel > 0) & (gel >= other) & (gel >= skip)
    is_other = ~is_gel & (other > 0) & (other >= skip)
    out[is_gel] = GEL_RGB
    out[is_other] = OTHER_RGB
    return out
