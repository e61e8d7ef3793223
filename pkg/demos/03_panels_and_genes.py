# %% [markdown]
# From segment scores to gel panels, labels and gene mentions.
#
# Seeds (score >= 0.60) grow into regions by absorbing candidates
# (score >= 0.15) that lie within 50 px with no text in between. Text within
# 30 px of a region, and no farther than 150 px at its far corner, becomes a
# label. Label tokens are then looked up in a case-sensitive lexicon.

# %%
import json

import numpy as np

from gelmine.evalstats import corpus_stats
from gelmine.forest import ForestParams, train_forest
from gelmine.ner import Lexicon, StopLists
from gelmine.pipeline import DetectContext, FeatureContext, figure_rows, process_figure, stack_rows
from gelmine.synth import SynthSpec, generate_figure

spec = SynthSpec(seed=42)
train = [generate_figure(spec, i).figure for i in range(120)]
X, y = stack_rows([figure_rows(f, FeatureContext()) for f in train])
model = train_forest(X, y, ForestParams(n_trees=40, seed=42))

# %%
ctx = DetectContext(model, Lexicon.default(), StopLists(), evaluate=True)
figures = [generate_figure(SynthSpec(seed=42, gel_figure_prob=1.0), 1000 + i).figure for i in range(20)]
results = [process_figure(f, ctx) for f in figures]

first = next(r for r in results if r.panels)
for rec in first.panel_records:
    print(json.dumps(rec, ensure_ascii=False))
for m in first.mentions:
    print(f"  gene {m.token!r} from {m.source_token!r} (partial={m.partial})")

# %%
print(corpus_stats(results).render_table())
tp = sum(r.panel_metrics.tp for r in results)
fp = sum(r.panel_metrics.fp for r in results)
fn = sum(r.panel_metrics.fn for r in results)
print(f"panels at IoU 0.5: tp={tp} fp={fp} fn={fn}")
print(f"mean gel score of true gels: {np.mean([s for r in results for s, t in zip(r.scores, r.truth) if t]):.3f}")
