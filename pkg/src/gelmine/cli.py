"""Command-line front end.

Exit status: 0 on success, 1 on invalid usage, configuration or input
paths, 2 on failures while running. Logs go to stderr; results go to files
under ``--out`` and a JSON summary goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import convnet as cnn
from . import ner
from .config import ConfigError, PipelineConfig
from .corpus import CorpusError, encode_png, load_corpus, write_atomic
from .evalstats import REPORT_SCHEMA_VERSION, Metrics, confusion, corpus_stats, roc_auc
from .features import features_csv
from .forest import ForestError, ForestModel, train_forest
from .pipeline import (DetectContext, FeatureContext, figure_rows, map_figures, process_figure,
                       stack_rows)
from .synth import generate_corpus

log = logging.getLogger("gelmine")

COMMANDS = ("synth", "features", "train-forest", "detect", "train-convnet", "mask", "eval")


class UsageError(Exception):
    """Invalid arguments, configuration or input paths (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="global seed (overrides [run] seed)")
    common.add_argument("--workers", type=int, help="worker processes; 0 = one per core")
    common.add_argument("--out", help="output directory (overrides [paths] out)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="gelmine", description="Gel panel detection and gene-label mining for figures.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus into --out")
    p.add_argument("--n", type=int, help="number of figures (overrides [synth] n_figures)")
    p.add_argument("--start-index", type=int, default=0)

    p = sub.add_parser("features", parents=[common], help="dump segment features as CSV")
    p.add_argument("--corpus")

    p = sub.add_parser("train-forest", parents=[common], help="train the gel segment forest")
    p.add_argument("--corpus")

    p = sub.add_parser("detect", parents=[common], help="detect panels and gene mentions")
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.add_argument("--lexicon")

    p = sub.add_parser("train-convnet", parents=[common], help="train the experimental tile ConvNet")
    p.add_argument("--corpus")

    p = sub.add_parser("mask", parents=[common], help="write ConvNet tile masks")
    p.add_argument("--corpus")
    p.add_argument("--convnet-model")

    p = sub.add_parser("eval", parents=[common], help="score detections against ground truth")
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.add_argument("--lexicon")
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    paths = {}
    for key in ("corpus", "model", "lexicon", "convnet_model", "out"):
        value = getattr(args, key, None)
        if value is not None:
            paths[key] = value
    if paths:
        cfg = cfg.override("paths", paths)
    run = {}
    if args.seed is not None:
        run["seed"] = str(args.seed)
    if args.workers is not None:
        run["workers"] = str(args.workers)
    if run:
        cfg = cfg.override("run", run)
    if getattr(args, "n", None) is not None:
        cfg = cfg.override("synth", {"n_figures": str(args.n)})
    for item in args.set:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        cfg = cfg.override(section.strip(), {name.strip(): value})
    return cfg


def _require_dir(value, what):
    if not value:
        raise UsageError(f"no {what} given")
    if not Path(value).is_dir():
        raise UsageError(f"{what} {value} is not a directory")
    return Path(value)


def _require_file(value, what):
    if not value:
        raise UsageError(f"no {what} given")
    if not Path(value).is_file():
        raise UsageError(f"{what} {value} does not exist")
    return Path(value)


def _out_dir(cfg) -> Path:
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lexicon(cfg):
    if cfg.paths.lexicon:
        return ner.Lexicon.load(_require_file(cfg.paths.lexicon, "lexicon file"))
    return ner.Lexicon.default()


def _stoplists(cfg):
    frequent = _require_file(cfg.paths.frequent_words, "frequent-word list") if cfg.paths.frequent_words else None
    domain = _require_file(cfg.paths.domain_words, "domain stoplist") if cfg.paths.domain_words else None
    return ner.StopLists.from_files(frequent, domain)


def _corpus(cfg):
    index = load_corpus(_require_dir(cfg.paths.corpus, "corpus directory"))
    for s in index.skipped:
        log.warning("skipped %s: %s", s.id, s.reason)
    log.info("corpus %s: %d figures", cfg.paths.corpus, len(index))
    return index


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_synth(cfg):
    out = Path(cfg.paths.out)
    manifest = generate_corpus(cfg.synth_spec(), out, start_index=cfg.args.start_index,
                               workers=cfg.run.effective_workers)
    return {"corpus": str(out), "manifest": str(out / "manifest.json"), **manifest["totals"]}


def _feature_ctx(cfg):
    return FeatureContext(cfg.segmentation, cfg.run.segmentation, cfg.run.iou_min)


def cmd_features(cfg):
    index = _corpus(cfg)
    out = _out_dir(cfg)
    rows = map_figures(figure_rows, index.entries, _feature_ctx(cfg), cfg.run.effective_workers)
    flat = []
    for r in rows:
        for k, sid in enumerate(r.segment_ids):
            flat.append((r.figure_id, sid, r.X[k], None if r.y is None else bool(r.y[k])))
    path = out / "features.csv"
    write_atomic(path, features_csv(flat))
    return {"features": str(path), "rows": len(flat)}


def cmd_train_forest(cfg):
    index = _corpus(cfg)
    out = _out_dir(cfg)
    rows = map_figures(figure_rows, index.entries, _feature_ctx(cfg), cfg.run.effective_workers)
    X, y = stack_rows(rows)
    log.info("training %d trees on %d segments (%d gel)", cfg.forest.n_trees, len(y), int(y.sum()))
    model = train_forest(X, y, cfg.forest_params(), workers=cfg.run.effective_workers)
    path = out / "forest.json"
    model.save(path)
    return {"model": str(path), **model.training_meta}


def _detect_ctx(cfg, evaluate):
    model_path = _require_file(cfg.paths.model, "model file")
    try:
        model = ForestModel.load(model_path)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"model file {model_path} is not a valid forest model: {exc}") from exc
    return DetectContext(model, _lexicon(cfg), _stoplists(cfg), cfg.panels, cfg.segmentation,
                         cfg.run.segmentation, cfg.run.iou_min, evaluate)


def cmd_detect(cfg):
    ctx = _detect_ctx(cfg, evaluate=False)
    index = _corpus(cfg)
    out = _out_dir(cfg)
    results = map_figures(process_figure, index.entries, ctx, cfg.run.effective_workers)
    panels = "".join(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n"
                     for res in results for r in res.panel_records)
    mentions = "".join(json.dumps(m.to_json(), ensure_ascii=False, separators=(",", ":")) + "\n"
                       for res in results for m in res.mentions)
    write_atomic(out / "panels.jsonl", panels)
    write_atomic(out / "mentions.jsonl", mentions)
    if not results:
        raise UsageError("corpus contains no loadable figures")
    report = corpus_stats(results)
    write_atomic(out / "stats.json", report.render_json())
    write_atomic(out / "stats.txt", report.render_table())
    sys.stderr.write(report.render_table())
    return {"panels": str(out / "panels.jsonl"), "mentions": str(out / "mentions.jsonl"),
            "stats": str(out / "stats.json"), "panels_detected": report.panels_detected}


def cmd_eval(cfg):
    ctx = _detect_ctx(cfg, evaluate=True)
    index = _corpus(cfg)
    out = _out_dir(cfg)
    results = [r for r in map_figures(process_figure, index.entries, ctx, cfg.run.effective_workers)
               if r.truth is not None]
    if not results:
        raise UsageError("corpus has no figures with ground truth")
    scores = np.concatenate([r.scores for r in results])
    labels = np.concatenate([r.truth for r in results])
    th = cfg.thresholds.as_tuple()
    at = {repr(t): confusion(scores, labels, t).to_json() for t in th}
    monotone = all(np.all((scores >= a) >= (scores >= b)) for a, b in zip(th, th[1:]))
    panels = sum((r.panel_metrics for r in results), Metrics())
    genes = sum((r.gene_metrics for r in results), Metrics())
    metrics = {
        "schema": REPORT_SCHEMA_VERSION,
        "figures": len(results),
        "segments": {
            "n": int(len(labels)),
            "n_gel": int(labels.sum()),
            "roc_auc": roc_auc(scores, labels) if 0 < labels.sum() < len(labels) else None,
            "thresholds": at,
            "threshold_monotone": bool(monotone),
        },
        "panels": {**panels.to_json(), "iou_min": cfg.run.iou_min},
        "genes": genes.to_json(),
    }
    path = out / "metrics.json"
    write_atomic(path, _dump(metrics))
    return {"metrics": str(path), "roc_auc": metrics["segments"]["roc_auc"],
            "panel_precision": panels.precision, "panel_recall": panels.recall}


def _tiles_for(figure, cfg):
    return cnn.tile_image(figure, stride=cfg.convnet.stride, grad_threshold=cfg.convnet.grad_threshold)


def cmd_train_convnet(cfg):
    from .corpus import load_figure
    index = _corpus(cfg)
    out = _out_dir(cfg)
    gel, other = [], []
    for entry in index.entries:
        fig = load_figure(entry)
        if fig.ground_truth is None:
            continue
        ts = _tiles_for(fig, cfg)
        boxes = [fig.segment(i).bbox for i in fig.ground_truth.gel_segment_ids]
        for tile, lab in zip(ts.tiles, cnn.label_tiles(ts, boxes)):
            (gel if lab else other).append(tile.pixels)
    rng = np.random.default_rng([cfg.run.seed, 2])
    half = cfg.convnet.max_tiles // 2
    if len(gel) > half:
        gel = [gel[i] for i in sorted(rng.choice(len(gel), half, replace=False))]
    n_other = min(len(other), max(len(gel), 1))
    other = [other[i] for i in sorted(rng.choice(len(other), n_other, replace=False))] if other else []
    tiles = gel + other
    labels = [True] * len(gel) + [False] * len(other)
    log.info("training ConvNet on %d gel and %d other tiles", len(gel), len(other))
    hyper = cnn.ConvNetHyper(cfg.convnet.lr, cfg.convnet.epochs, cfg.convnet.batch, cfg.run.seed)
    try:
        model = cnn.train_convnet(tiles, labels, hyper)
    except cnn.SingleClassError as exc:
        raise UsageError(str(exc)) from exc
    path = out / "convnet.json"
    model.save(path)
    return {"model": str(path), "gel_tiles": len(gel), "other_tiles": len(other)}


def cmd_mask(cfg):
    from .corpus import load_figure
    model = cnn.ConvNetModel.load(_require_file(cfg.paths.convnet_model, "ConvNet model file"))
    index = _corpus(cfg)
    out = _out_dir(cfg) / "masks"
    out.mkdir(exist_ok=True)
    written = 0
    for entry in index.entries:
        fig = load_figure(entry)
        ts = _tiles_for(fig, cfg)
        mask = cnn.reconstruct_mask(ts, cnn.predict_gel(model, [t.pixels for t in ts.tiles]))
        write_atomic(out / f"{Path(fig.id).name}.mask.png", encode_png(mask))
        written += 1
    return {"masks": str(out), "count": written}


HANDLERS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "train-forest": cmd_train_forest,
    "detect": cmd_detect,
    "train-convnet": cmd_train_convnet,
    "mask": cmd_mask,
    "eval": cmd_eval,
}


class _Cfg:
    """A config plus the raw arguments some commands read directly."""

    def __init__(self, cfg, args):
        self._cfg, self.args = cfg, args

    def __getattr__(self, name):
        return getattr(self._cfg, name)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"gelmine: error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = resolve_config(args)
        summary = HANDLERS[args.command](_Cfg(cfg, args))
    except (UsageError, ConfigError, CorpusError, ForestError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.error("%s failed: %s", args.command, exc, exc_info=args.verbose)
        return 2
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
