"""Run configuration: one JSON document with dotted command-line overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .corpus import NoiseConfig
from .gan import GanConfig
from .nmt import NmtConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    # "cipher" builds a synthetic pair; "text" reads the files below
    source: str = "cipher"
    train_l0: str | None = None
    train_l1: str | None = None
    valid_l0: str | None = None
    valid_l1: str | None = None
    test_l0: str | None = None
    test_l1: str | None = None
    embeddings_l0: str | None = None
    embeddings_l1: str | None = None
    vocab_size: int = 15000
    cipher_vocab: int = 50
    cipher_min_len: int = 3
    cipher_max_len: int = 8
    # training pairs generated for the cipher source
    cipher_pairs: int = 2000
    # held-out pairs; text data without explicit valid/test files is carved
    valid_size: int = 200
    test_size: int = 200


@dataclass
class LmConfig:
    emb_dim: int = 300
    hidden: int = 256
    epochs: int = 5
    lr: float = 3e-3
    batch_size: int = 32


@dataclass
class RunConfig:
    mode: str = "unsupervised"
    seed: int = 0
    output_dir: str = "run"
    n_samples: int = 1000
    data: DataConfig = field(default_factory=DataConfig)
    nmt: NmtConfig = field(default_factory=NmtConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    lm: LmConfig = field(default_factory=LmConfig)

    def validate(self) -> None:
        if self.mode not in ("supervised", "unsupervised"):
            raise ConfigError(f"mode must be supervised or unsupervised, got {self.mode!r}")
        if self.nmt.supervised != (self.mode == "supervised"):
            raise ConfigError("nmt.supervised disagrees with mode")
        if self.data.source not in ("cipher", "text"):
            raise ConfigError(f"unknown data source {self.data.source!r}")
        if self.data.source == "text":
            needed = ["train_l0", "train_l1"]
            if self.mode == "unsupervised":
                needed += ["embeddings_l0", "embeddings_l1"]
            missing = [k for k in needed if getattr(self.data, k) is None]
            if missing:
                raise ConfigError(f"data paths required: {missing}")
        if self.data.valid_size < 1 or self.data.test_size < 1:
            raise ConfigError("valid_size and test_size must be >= 1")
        if self.n_samples < 0:
            raise ConfigError("n_samples must be >= 0")
        if self.data.source == "cipher" and self.data.cipher_max_len > self.nmt.max_len:
            raise ConfigError("cipher sentences would exceed nmt.max_len")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, val in values.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, val) if sub is not None else val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{cls.__name__}: {err}") from None


_NESTED = {
    (RunConfig, "data"): DataConfig,
    (RunConfig, "nmt"): NmtConfig,
    (RunConfig, "gan"): GanConfig,
    (RunConfig, "lm"): LmConfig,
    (NmtConfig, "noise"): NoiseConfig,
}


def from_dict(values: dict) -> RunConfig:
    values = json.loads(json.dumps(values))
    # mode drives the supervision flag unless set explicitly
    nmt = values.setdefault("nmt", {})
    nmt.setdefault("supervised", values.get("mode", "unsupervised") == "supervised")
    cfg = _build(RunConfig, values)
    cfg.validate()
    return cfg


def apply_overrides(values: dict, overrides: list[str]) -> dict:
    """``key.sub=value`` pairs; values parse as JSON, else as plain strings."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        try:
            val: Any = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = values
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return values


def load_config(path: str | None, overrides: list[str] = ()) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            values = json.loads(p.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
    return from_dict(apply_overrides(values, list(overrides)))
