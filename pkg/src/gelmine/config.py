"""Pipeline configuration: every tunable constant in one INI file.

Sections mirror the parameter dataclasses. ``PipelineConfig.to_ini`` writes
every field, so ``from_ini(to_ini(c)) == c``.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

from .forest import ForestParams, Thresholds
from .panels import PanelParams
from .segmentation import SegmentationParams
from .synth import SynthSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    corpus: str = ""
    model: str = ""
    convnet_model: str = ""
    lexicon: str = ""
    frequent_words: str = ""
    domain_words: str = ""
    out: str = "out"


@dataclass(frozen=True)
class ConvNetSettings:
    lr: float = 0.01
    epochs: int = 5
    batch: int = 1
    stride: int = 24
    grad_threshold: float = 2.0 / 255
    max_tiles: int = 2000


@dataclass(frozen=True)
class RunSettings:
    seed: int = 42
    workers: int = 0  # 0: one per available core
    segmentation: str = "auto"  # auto | sidecar | detect
    iou_min: float = 0.5

    def __post_init__(self):
        if self.segmentation not in ("auto", "sidecar", "detect"):
            raise ConfigError(f"unknown segmentation mode {self.segmentation!r}")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")

    @property
    def effective_workers(self) -> int:
        return self.workers or (os.cpu_count() or 1)


SECTIONS = {
    "paths": Paths,
    "run": RunSettings,
    "segmentation": SegmentationParams,
    "forest": ForestParams,
    "thresholds": Thresholds,
    "panels": PanelParams,
    "convnet": ConvNetSettings,
    "synth": SynthSpec,
}


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    run: RunSettings = field(default_factory=RunSettings)
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    forest: ForestParams = field(default_factory=ForestParams)
    thresholds: Thresholds = field(default_factory=Thresholds)
    panels: PanelParams = field(default_factory=PanelParams)
    convnet: ConvNetSettings = field(default_factory=ConvNetSettings)
    synth: SynthSpec = field(default_factory=SynthSpec)

    # the global seed drives every seeded component
    def forest_params(self) -> ForestParams:
        return dataclasses.replace(self.forest, seed=self.run.seed)

    def synth_spec(self) -> SynthSpec:
        return dataclasses.replace(self.synth, seed=self.run.seed)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            obj = getattr(self, name)
            cp[name] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base: PipelineConfig | None = None) -> PipelineConfig:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        unknown = set(cp.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = base or cls()
        for name in cp.sections():
            cfg = cfg.override(name, dict(cp[name]))
        return cfg

    @classmethod
    def load(cls, path) -> PipelineConfig:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
        return cls.from_ini(text)

    def override(self, section: str, values: dict) -> PipelineConfig:
        """Return a copy with string ``values`` parsed into ``section``."""
        current = getattr(self, section)
        types = {f.name: f for f in dataclasses.fields(current)}
        kw = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown key {section}.{key}")
            kw[key] = _parse(raw, getattr(current, key), section, key)
        try:
            new = dataclasses.replace(current, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [{section}] settings: {exc}") from exc
        return dataclasses.replace(self, **{section: new})


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{k}:{_format(v)}" for k, v in value)
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(raw, default, section, key):
    raw = raw.strip()
    try:
        if section == "forest" and key == "max_depth":
            return None if raw.lower() in ("none", "") else int(raw)
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if default and isinstance(default[0], tuple):
                return tuple((k.strip(), float(v)) for k, v in (p.split(":", 1) for p in parts))
            elem = type(default[0]) if default else float
            return tuple(elem(p) for p in parts)
        return raw
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
