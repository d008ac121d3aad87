"""Flat ``key=value`` run configuration shared by every subcommand.

A config file holds one ``key = value`` pair per line; blank lines and lines
starting with ``#`` are ignored. Command-line ``--key value`` flags override
file values. Unknown keys and malformed values raise :class:`ConfigError`
naming the key, before any work starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .attention import AttentionKind, AttentionSpec
from .network import Insertion, NetworkSpec
from .train import TrainSpec


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


def parse_size(text: str) -> Tuple[int, int]:
    """``"240x360"`` -> ``(240, 360)``; a bare ``"64"`` means a square."""
    parts = text.lower().split("x")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError(f"expected HxW, got {text!r}")
    h, w = int(parts[0]), int(parts[1])
    if h < 1 or w < 1:
        raise ValueError(f"sizes must be positive, got {text!r}")
    return h, w


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    seed: int = 0
    # network
    blocks: int = 4
    width: int = 16
    scale: int = 2
    attention: str = "bam"
    reduction: int = 16
    kernel: int = 7
    insertion: str = "per_block"
    # training
    train_dir: str = ""
    lr_dir: str = ""
    patch_size: int = 64
    batch: int = 16
    epochs: int = 1000
    lr0: float = 1e-4
    halve_period: int = 200
    loss: str = "l1"
    five_crop: bool = True
    crop_fraction: float = 0.5
    checkpoint_every: int = 50
    resume: str = ""
    loss_csv: str = "loss.csv"
    # checkpoint written by train, read by eval/infer
    checkpoint: str = "model.ckpt"
    # evaluation
    hr_dir: str = ""
    reference_dir: str = ""
    test_dir: str = ""
    eval_csv: str = "eval.csv"
    # inference
    input: str = ""
    output: str = ""
    # benchmark and counting
    variants: str = "bam,cbam"
    sizes: str = "64x64,128x128,200x200"
    frames: int = 700
    warmup: int = 5
    size: str = "240x360"

    # keys set explicitly by a file or flag (filled by from_sources)
    provided = frozenset()

    # -- construction -----------------------------------------------------

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_sources(cls, path=None, overrides: Optional[Dict[str, str]] = None) -> "RunConfig":
        values: Dict[str, str] = {}
        if path:
            values.update(read_config_file(path))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        cfg = cls()
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key '{key}'", key)
            setattr(cfg, key, _coerce(key, types[key], raw))
        cfg.provided = frozenset(values)
        cfg.validate()
        return cfg

    # -- validation and derived specs -------------------------------------

    def validate(self) -> None:
        positive = ("blocks", "width", "reduction", "kernel", "patch_size", "batch",
                    "halve_period", "frames")
        for key in positive:
            if getattr(self, key) < 1:
                raise ConfigError(f"'{key}' must be positive, got {getattr(self, key)}", key)
        for key in ("epochs", "checkpoint_every", "warmup", "seed"):
            if getattr(self, key) < 0:
                raise ConfigError(f"'{key}' must be non-negative, got {getattr(self, key)}", key)
        if self.lr0 <= 0:
            raise ConfigError(f"'lr0' must be positive, got {self.lr0}", "lr0")
        if not 0 < self.crop_fraction <= 1:
            raise ConfigError(f"'crop_fraction' must be in (0, 1], got {self.crop_fraction}",
                              "crop_fraction")
        if self.loss != "l1":
            raise ConfigError(f"'loss' must be 'l1', got {self.loss!r}", "loss")
        for key in ("attention",):
            try:
                AttentionKind.parse(self.attention)
            except ValueError as exc:
                raise ConfigError(f"'{key}': {exc}", key) from None
        for kind in self.variant_list():
            try:
                AttentionKind.parse(kind)
            except ValueError as exc:
                raise ConfigError(f"'variants': {exc}", "variants") from None
        for key, check in (("sizes", self.size_list), ("size", self.count_size)):
            try:
                check()
            except ValueError as exc:
                raise ConfigError(f"'{key}': {exc}", key) from None
        try:
            self.network_spec()
        except ValueError as exc:
            raise ConfigError(f"network settings: {exc}", _guess_key(str(exc))) from None

    def attention_spec(self, kind=None) -> AttentionSpec:
        return AttentionSpec(kind or self.attention, self.width, self.reduction, self.kernel)

    def network_spec(self, kind=None) -> NetworkSpec:
        return NetworkSpec(self.blocks, self.width, self.scale, self.attention_spec(kind),
                           Insertion.parse(self.insertion))

    def train_spec(self) -> TrainSpec:
        return TrainSpec(patch_size=self.patch_size, batch=self.batch, epochs=self.epochs,
                         lr0=self.lr0, halve_period=self.halve_period, seed=self.seed,
                         scale=self.scale)

    def variant_list(self) -> List[str]:
        return [v.strip() for v in self.variants.split(",") if v.strip()]

    def size_list(self) -> List[Tuple[int, int]]:
        sizes = [parse_size(s) for s in self.sizes.split(",") if s.strip()]
        if not sizes:
            raise ValueError("no sizes given")
        return sizes

    def count_size(self) -> Tuple[int, int]:
        return parse_size(self.size)

    def require_path(self, key: str, kind: str = "dir") -> Path:
        """Value of ``key`` as an existing path, or :class:`ConfigError`."""
        value = getattr(self, key)
        if not value:
            raise ConfigError(f"'{key}' is required", key)
        p = Path(value)
        ok = p.is_dir() if kind == "dir" else p.is_file()
        if not ok:
            raise ConfigError(f"'{key}': {kind} not found: {value}", key)
        return p

    def as_dict(self) -> Dict[str, object]:
        return dataclasses.asdict(self)


def _guess_key(message: str) -> Optional[str]:
    for key in ("scale", "insertion", "width", "blocks", "kernel", "reduction"):
        if key in message:
            return key
    return None


def _coerce(key: str, typ, raw):
    if not isinstance(raw, str):
        return raw
    try:
        if typ in (bool, "bool"):
            return _parse_bool(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"'{key}': cannot parse {raw!r} as {getattr(typ, '__name__', typ)}", key) from None
    return raw


def read_config_file(path) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}", "config") from None
    out: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out
