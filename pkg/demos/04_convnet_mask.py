# %% [markdown]
# The experimental tile classifier.
#
# Figures are cut into 48x48 tiles every 24 px. Tiles with too little
# gradient are skipped. The rest go through three tanh convolution layers
# with average pooling (48 -> 44 -> 22 -> 18 -> 6 -> 1) and a 72 -> 2 softmax.
# Predictions are painted back as a mask: green gel, brown other, white
# skipped.

# %%
import sys
from pathlib import Path

import numpy as np

from gelmine import convnet as cnn
from gelmine.corpus import encode_png
from gelmine.synth import SynthSpec, generate_figure

print("shape chain:", cnn.shape_trace(), "parameters:", cnn.N_PARAMS)

spec = SynthSpec(seed=42, gel_figure_prob=0.6)
gel_tiles, other_tiles = [], []
for i in range(40):
    fig, truth, _ = generate_figure(spec, i)
    ts = cnn.tile_image(fig)
    boxes = [fig.segment(s).bbox for s in truth.gel_segment_ids]
    for tile, is_gel in zip(ts.tiles, cnn.label_tiles(ts, boxes)):
        (gel_tiles if is_gel else other_tiles).append(tile.pixels)

rng = np.random.default_rng(0)
n = min(len(gel_tiles), 150)
other = [other_tiles[i] for i in rng.choice(len(other_tiles), n, replace=False)]
tiles = gel_tiles[:n] + other
labels = [True] * n + [False] * n
print(f"training on {n} gel and {n} other tiles")

# %%
history = []
model = cnn.train_convnet(tiles, labels, cnn.ConvNetHyper(epochs=3, seed=0), history=history)
print("mean loss per epoch:", [round(h, 4) for h in history])

# %%
fig, truth, _ = generate_figure(SynthSpec(seed=42, gel_figure_prob=1.0), 999)
ts = cnn.tile_image(fig)
mask = cnn.reconstruct_mask(ts, cnn.predict_gel(model, [t.pixels for t in ts.tiles]))
out = Path(sys.argv[1] if len(sys.argv) > 1 else ".") / f"{fig.id}.mask.png"
out.write_bytes(encode_png(mask))
print(f"{len(ts.tiles)} tiles kept, {len(ts.skipped)} skipped; mask written to {out}")
