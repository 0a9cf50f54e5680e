"""Pipeline configuration and its TOML-shaped file form.

A config file has four sections::

    [paths]      input and output locations
    [sampling]   SamplingConfig fields
    [train]      TrainConfig fields
    [run]        seed, workers, verbosity, all_descriptions

Input paths (corpus, triplets, qa, predictions) are resolved against the
config file's directory; output paths against the output directory chosen at
run time. Unknown keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError
from .sampling import SamplingConfig
from .training import TrainConfig
from .util import atomic_open

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

INPUT_PATHS = ("corpus", "triplets", "qa", "predictions")


@dataclass(frozen=True)
class Paths:
    corpus: str = ""
    triplets: str = ""
    qa: str = ""  # optional QA TSV for the bias report
    predictions: str = ""  # optional EM flags for ``qa``
    graph: str = "graph.bin"
    dataset: str = "dataset.jsonl"
    checkpoints: str = "checkpoints"
    metrics: str = "metrics.csv"
    reports: str = "reports"


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    workers: int = 1
    verbosity: int = 0
    all_descriptions: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: RunOptions = field(default_factory=RunOptions)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, sampling=replace(self.sampling, seed=seed),
                       train=replace(self.train, seed=seed), run=replace(self.run, seed=seed))

    def resolve(self, base_dir: str | os.PathLike, out_dir: str | os.PathLike) -> Paths:
        """Absolute paths: inputs under ``base_dir``, outputs under ``out_dir``."""
        out = {}
        for f in fields(Paths):
            value = getattr(self.paths, f.name)
            if not value:
                out[f.name] = ""
                continue
            root = base_dir if f.name in INPUT_PATHS else out_dir
            out[f.name] = os.path.normpath(os.path.join(root, value))
        return Paths(**out)


_SECTIONS = {"paths": Paths, "sampling": SamplingConfig, "train": TrainConfig, "run": RunOptions}


def _coerce(cls, name: str, value):
    kind = {f.name: f.type for f in fields(cls)}[name]
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{cls.__name__}.{name} must be true or false")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{cls.__name__}.{name} must be an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{cls.__name__}.{name} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{cls.__name__}.{name} must be a string")
    return value


def config_from_dict(data: dict) -> PipelineConfig:
    parts = {}
    for section, values in data.items():
        cls = _SECTIONS.get(section)
        if cls is None or not isinstance(values, dict):
            raise ConfigError(f"unknown config section [{section}]")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
        parts[section] = cls(**{k: _coerce(cls, k, v) for k, v in values.items()})
    return PipelineConfig(**parts)


def parse_config(text: str) -> PipelineConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(data)


def load_config(path: str | os.PathLike) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    out = []
    for ch in str(v):
        if ch in '"\\':
            out.append("\\" + ch)
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04x}")  # TOML forbids raw control characters
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def config_to_text(config: PipelineConfig) -> str:
    blocks = []
    for section in _SECTIONS:
        values = asdict(getattr(config, section))
        lines = [f"[{section}]"] + [f"{k} = {_value(v)}" for k, v in values.items()]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def save_config(path: str | os.PathLike, config: PipelineConfig) -> None:
    with atomic_open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(config))
