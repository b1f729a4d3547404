"""Plain-text ``key=value`` configuration and the training configuration record.

A config file holds one ``key=value`` pair per line. Blank lines and lines
starting with ``#`` are ignored. The same syntax is used for SBM generator
specs (``sbm.*`` keys) and for ``--set key=value`` overrides on the command
line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unknown keys or unparseable values."""


def parse_pairs(lines, source="<config>"):
    """Parse ``key=value`` lines into an ordered dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def read_pairs(path):
    path = Path(path)
    return parse_pairs(path.read_text().splitlines(), source=str(path))


def _coerce(value: str, typ):
    if typ is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if typ is int:
        return int(value)
    if typ is float:
        return float(value)
    return value


def _field_types(cls):
    # dataclass annotations are strings under postponed evaluation
    names = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: names.get(f.type, str) for f in fields(cls)}


VARIANTS = ("full", "no-cal", "large-k", "random-subsample")
SPLITS = ("dense", "sparse")

# config-file key -> dataclass attribute, where the two differ
_KEY_ALIASES = {"lambda": "lam"}
_ATTR_ALIASES = {v: k for k, v in _KEY_ALIASES.items()}


@dataclass
class TrainConfig:
    # data
    dataset: str = "sbm"
    features_path: str = ""
    edges_path: str = ""
    labels_path: str = ""
    split: str = "dense"
    # tokenizer / propagation
    k: int = 6
    ppr_steps: int = 10
    ppr_beta: float = 0.15
    swap_p: float = 0.5
    swap_t: int = 2
    aug_s: int = 4
    resample_each_epoch: bool = False
    # model
    hidden_dim: int = 256
    ffn_dim: int = 512
    layers: int = 1
    heads: int = 8
    alpha: float = 0.5
    lam: float = 1.0
    dropout: float = 0.5
    share_encoder: bool = True
    # optimization
    learning_rate: float = 0.005
    weight_decay: float = 0.0
    max_epochs: int = 500
    patience: int = 50
    batch_size: int = 0
    runs: int = 10
    base_seed: int = 0
    variant: str = "full"
    # sbm.* keys, kept raw; parsed by graph.SbmSpec.from_pairs
    sbm: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must be <= max_epochs")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        if not 0.0 <= self.swap_p <= 1.0:
            raise ConfigError("swap_p must be in [0, 1]")
        if self.swap_t < 1 or self.aug_s < 1:
            raise ConfigError("swap_t and aug_s must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if not 0.0 <= self.ppr_beta <= 1.0 or self.ppr_steps < 0:
            raise ConfigError("ppr_beta must be in [0, 1] and ppr_steps >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.heads < 1 or self.hidden_dim % self.heads:
            raise ConfigError("hidden_dim must be divisible by heads")
        if self.k < 1 or self.batch_size < 0 or self.layers < 0:
            raise ConfigError("k >= 1, layers >= 0 and batch_size >= 0 required")

    # -- serialization -------------------------------------------------

    def with_updates(self, pairs):
        """Return a copy with raw ``key=value`` strings applied on top."""
        types = _field_types(TrainConfig)
        values = dataclasses.asdict(self)
        sbm = dict(self.sbm)
        for key, raw in pairs.items():
            if key.startswith("sbm."):
                sbm[key[4:]] = raw
                continue
            attr = _KEY_ALIASES.get(key, key)
            if attr not in types or attr == "sbm":
                raise ConfigError(f"unknown config key {key!r}")
            try:
                values[attr] = _coerce(raw, types[attr])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        values["sbm"] = sbm
        return TrainConfig(**values)

    @classmethod
    def from_pairs(cls, pairs):
        return cls().with_updates(pairs)

    @classmethod
    def from_file(cls, path, overrides=None):
        cfg = cls.from_pairs(read_pairs(path))
        if overrides:
            cfg = cfg.with_updates(overrides)
        return cfg

    def to_pairs(self):
        """Flat ``{key: str}`` mapping, sorted, suitable for writing back out."""
        out = {}
        for f in fields(self):
            if f.name == "sbm":
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            out[_ATTR_ALIASES.get(f.name, f.name)] = str(value)
        for key, value in self.sbm.items():
            out[f"sbm.{key}"] = str(value)
        return dict(sorted(out.items()))

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in self.to_pairs().items())
