"""Flat key=value run configuration.

Lines are ``key = value``; ``#`` starts a comment; blank lines are
ignored; lists are comma-separated.  Unknown keys and unparseable values
fail with the offending line number.  Defaults describe the standard
synthetic task.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, IoError
from .harness import DEFAULT_TEMPLATE

__all__ = ["RunSettings", "load_config", "parse_config"]

DEFAULT_PREDICTORS = ("dynamic", "fixed:0.5", "combo", "learned", "handcrafted")


@dataclass
class RunSettings:
    """Everything one run needs; defaults are the standard synthetic task."""

    n_classes: int = 8
    dim: int = 16
    noise_scale: float = 0.35
    train_per_class: int = 64
    test_per_class: int = 100
    seed: int = 7
    shots: int = 16
    epochs: int = 200
    tau: float = 0.01
    template: str = DEFAULT_TEMPLATE
    predictors: tuple[str, ...] = DEFAULT_PREDICTORS
    embed_width: int = 16
    feat_dim: int = 8
    lr_init: float = 0.02
    warmup_lr: float = 1e-5
    warmup_epochs: int = 1
    batch_size: int | None = None
    alpha_cache_bins: int = 0
    out_dir: str | None = None


def validate_predictor_mode(mode: str) -> str:
    mode = mode.strip()
    if mode in ("dynamic", "combo", "learned", "handcrafted"):
        return mode
    if mode.startswith("fixed:"):
        try:
            alpha = float(mode.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad fixed-alpha predictor {mode!r}") from None
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"fixed alpha must lie in [0, 1], got {alpha}")
        return mode
    raise ConfigError(f"unknown predictor mode {mode!r}")


def _parse_predictors(value: str):
    modes = tuple(validate_predictor_mode(m) for m in value.split(",") if m.strip())
    if not modes:
        raise ConfigError("predictors list is empty")
    return modes


def _parse_opt_int(value: str):
    return None if value.lower() in ("", "none") else int(value)


def _parse_opt_str(value: str):
    return None if value.lower() in ("", "none") else value


_PARSERS = {
    "n_classes": int,
    "dim": int,
    "noise_scale": float,
    "train_per_class": int,
    "test_per_class": int,
    "seed": int,
    "shots": int,
    "epochs": int,
    "tau": float,
    "template": str,
    "predictors": _parse_predictors,
    "embed_width": int,
    "feat_dim": int,
    "lr_init": float,
    "warmup_lr": float,
    "warmup_epochs": int,
    "batch_size": _parse_opt_int,
    "alpha_cache_bins": int,
    "out_dir": _parse_opt_str,
}

assert set(_PARSERS) == {f.name for f in fields(RunSettings)}


def parse_config(text: str, source: str = "<config>") -> RunSettings:
    """Parse config text; errors carry ``source:line``."""
    settings = RunSettings()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        parser = _PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            setattr(settings, key, parser(value))
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(
                f"{source}:{lineno}: bad value for {key!r}: {exc}"
            ) from None
    return settings


def load_config(path) -> RunSettings:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
