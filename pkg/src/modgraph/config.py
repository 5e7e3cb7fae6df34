"""Run configuration: an INI file with one section per pipeline stage.

The defaults reproduce the reference operating point (128-sample records,
128-point DFT, 16-wide features, a +-11 band, 4-layer GCN stacks, two
pooling blocks, AdamW at 1e-3 with plateau halving).  Files may set any
subset; unknown sections or keys are rejected rather than ignored, and
``section.key=value`` override strings (the CLI's ``--set``) are applied
after the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace

from .model import ModelConfig
from .synth import SCHEME_NAMES
from .training import TrainConfig

__all__ = ["SynthSettings", "RunConfig", "ConfigError", "load_run_config",
           "resolved_text", "DEFAULT_SNRS"]

DEFAULT_SNRS = tuple(range(-20, 20, 2))


class ConfigError(ValueError):
    pass


@dataclass
class SynthSettings:
    schemes: tuple = SCHEME_NAMES
    snrs_db: tuple = DEFAULT_SNRS
    frames_per_cell: int = 100
    preset: str = "rml16-like"
    seed: int = 0
    n_samples: int = 128
    samples_per_symbol: int = 8


@dataclass
class RunConfig:
    synth: SynthSettings
    model: ModelConfig
    train: TrainConfig

    def validate(self):
        self.model.validate()
        if self.synth.n_samples != self.model.n_nodes:
            raise ConfigError(
                f"synth.n_samples={self.synth.n_samples} must equal "
                f"model.n_nodes={self.model.n_nodes} (one graph node per sample)")
        if self.synth.frames_per_cell < 1:
            raise ConfigError("synth.frames_per_cell must be >= 1")
        if len(set(self.synth.schemes)) != len(self.synth.schemes):
            raise ConfigError("synth.schemes contains duplicates")
        if self.train.batch_size < 1 or self.train.epochs < 1:
            raise ConfigError("train.batch_size and train.epochs must be >= 1")
        return self


def _bool(raw):
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _str_tuple(raw):
    items = tuple(s.strip() for s in raw.split(",") if s.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _int_tuple(raw):
    return tuple(int(s) for s in raw.split(",") if s.strip())


_CASTERS = {int: int, float: float, bool: _bool, str: lambda s: s.strip()}


def _section_schema(cls, tuple_casters):
    schema = {}
    for f in fields(cls):
        kind = f.type if isinstance(f.type, type) else {"int": int, "float": float,
                                                        "bool": bool, "str": str,
                                                        "tuple": tuple}[f.type]
        schema[f.name] = tuple_casters.get(f.name) if kind is tuple else _CASTERS[kind]
    return schema


_SCHEMA = {
    "synth": _section_schema(SynthSettings, {"schemes": _str_tuple, "snrs_db": _int_tuple}),
    "model": _section_schema(ModelConfig, {}),
    "train": _section_schema(TrainConfig, {}),
}


def _apply(cfg, section, key, raw, where):
    schema = _SCHEMA.get(section)
    if schema is None:
        raise ConfigError(f"{where}: unknown section [{section}]")
    caster = schema.get(key)
    if caster is None:
        raise ConfigError(f"{where}: unknown key {section}.{key}")
    try:
        value = caster(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {section}.{key}: {exc}") from None
    part = getattr(cfg, section)
    setattr(cfg, section, replace(part, **{key: value}))


def load_run_config(path=None, overrides=()):
    """Build a validated RunConfig from defaults, an optional INI file, and
    ``section.key=value`` override strings, in that order."""
    cfg = RunConfig(synth=SynthSettings(), model=ModelConfig(), train=TrainConfig())
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as f:
                parser.read_file(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(cfg, section, key, raw, str(path))
    for item in overrides:
        dotted, sep, raw = item.partition("=")
        section, dot, key = dotted.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        _apply(cfg, section.strip(), key.strip(), raw, "--set")
    cfg.validate()
    return cfg


def _fmt(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def resolved_text(cfg):
    """Deterministic INI echo of every resolved value, for run logs."""
    lines = []
    for section in ("synth", "model", "train"):
        lines.append(f"[{section}]")
        part = getattr(cfg, section)
        for f in fields(part):
            lines.append(f"{f.name} = {_fmt(getattr(part, f.name))}")
        lines.append("")
    return "\n".join(lines)
