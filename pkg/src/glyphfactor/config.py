"""Per-subcommand run configurations, read from YAML with command-line overrides.

Every field has a default; unknown keys are rejected. Overrides use the
field name with ``-`` or ``_`` (``--lambda-sign 0.5``), and booleans also
accept ``--no-<name>``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

import yaml

from .model import ConfigError, TrainConfig


@dataclass
class IngestConfig:
    manifest: str = ""
    out: str = "ingested"
    ink_is_dark: bool = True


@dataclass
class AugmentConfig:
    corpus: str = ""
    out: str = "augmented"


@dataclass
class SynthRunConfig:
    out: str = "synthetic"
    J: int = 6
    K: int = 9
    images_per_pair: int = 1
    density: float = 1.0
    n_findplaces: int = 3
    seed: int = 0


@dataclass
class TrainRunConfig:
    corpus: str = ""
    out: str = "run"
    model: str = "factor"  # or "autoencoder"
    d: int = 16
    lambda_sign: float = 1.0
    lambda_scribe: float = 1.0
    lr: float = 1e-4
    batch_size: int = 25
    epochs: int = 100
    seed: int = 0
    recon: bool = True
    scribe_disc: bool = True
    sign_disc: bool = True
    width: float = 1.0
    dtype: str = "float64"

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})


@dataclass
class EmbedConfig:
    run: str = ""
    out: str = ""  # defaults to the run directory


@dataclass
class ReconstructConfig:
    run: str = ""
    out: str = ""
    scribes: list[str] = field(default_factory=list)  # labels; empty means all
    signs: list[str] = field(default_factory=list)
    image: str = "grid.png"


@dataclass
class EvalProbeConfig:
    embeddings: str = ""
    findplaces: str = ""  # scribe,findplace CSV or a corpus manifest
    out: str = "probe"
    name: str = "model"
    min_scribes: int = 3
    folds: int = 5
    inits: int = 15
    epochs: int = 500
    lr: float = 1e-3
    batch_size: int = 15
    init_std: float = 0.01
    standardize: bool = True
    average: str = "macro"
    seed: int = 0


@dataclass
class EvalQvecConfig:
    embeddings: str = ""
    manual: str = ""
    out: str = "qvec"
    name: str = "model"
    seed: int = 0


COMMANDS: dict[str, type] = {
    "ingest": IngestConfig,
    "augment": AugmentConfig,
    "synth": SynthRunConfig,
    "train": TrainRunConfig,
    "embed": EmbedConfig,
    "reconstruct": ReconstructConfig,
    "eval-probe": EvalProbeConfig,
    "eval-qvec": EvalQvecConfig,
}


def _coerce(value, typ, key: str):
    try:
        if typ is bool:
            if isinstance(value, bool):
                return value
            low = str(value).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if typ is float:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if typ is str:
            if isinstance(value, (dict, list)):
                raise ValueError(value)
            return str(value)
        if typ == list[str]:
            if isinstance(value, str):
                return [v.strip() for v in value.split(",") if v.strip()]
            return [str(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: cannot read {value!r} as {getattr(typ, '__name__', typ)}") from None
    raise ConfigError(f"config key {key!r}: unsupported type {typ}")


def build_config(command: str, values: dict):
    """Instantiate the command's config, rejecting unknown keys and bad types."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cls = COMMANDS[command]
    hints = get_type_hints(cls)
    unknown = sorted(set(values) - set(hints))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    return cls(**{k: _coerce(v, hints[k], k) for k, v in values.items()})


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping of keys to values")
    return data


def parse_overrides(command: str, tokens: list[str]) -> dict:
    """``--key value`` pairs and ``--no-<bool>`` flags into a raw dict."""
    hints = get_type_hints(COMMANDS[command])
    out: dict = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}; overrides look like --key value")
        name = tok[2:]
        if "=" in name:
            name, value = name.split("=", 1)
            out[name.replace("-", "_")] = value
            i += 1
            continue
        name = name.replace("-", "_")
        if name.startswith("no_") and hints.get(name[3:]) is bool:
            out[name[3:]] = False
            i += 1
            continue
        if hints.get(name) is bool and (i + 1 == len(tokens) or tokens[i + 1].startswith("--")):
            out[name] = True
            i += 1
            continue
        if i + 1 == len(tokens):
            raise ConfigError(f"override {tok} needs a value")
        out[name] = tokens[i + 1]
        i += 2
    return out


def load_config(command: str, path=None, overrides: list[str] | None = None, **forced):
    values = read_config_file(path) if path else {}
    values.update(parse_overrides(command, overrides or []))
    values.update({k: v for k, v in forced.items() if v is not None})
    return build_config(command, values)


def describe(command: str) -> str:
    """Documented defaults, one ``key: default`` line per field."""
    cls = COMMANDS[command]
    return "\n".join(f"{k}: {v!r}" for k, v in dataclasses.asdict(cls()).items())
