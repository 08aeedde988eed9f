"""Plain-text ``key = value`` run configuration files."""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .pipeline import TrainConfig

# the ablation knobs plus the schedule length must be stated explicitly
REQUIRED_KEYS = ("n_sets", "radius", "latent_dim", "max_votes_train", "epochs")

_NOT_CONFIGURABLE = {"task", "n_classes", "n_parts"}


class ConfigError(ValueError):
    pass


def _field_types() -> dict[str, type]:
    defaults = TrainConfig()
    return {
        f.name: type(getattr(defaults, f.name))
        for f in fields(TrainConfig)
        if f.name not in _NOT_CONFIGURABLE
    }


def _convert(kind: type, raw: str):
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is tuple:
        return tuple(int(x) for x in raw.replace(",", " ").split())
    return kind(raw)


def parse_config(text: str, source: str = "<config>") -> dict:
    types = _field_types()
    values: dict = {}
    lines: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {lines[key]})")
        try:
            values[key] = _convert(types[key], raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing required key(s): {', '.join(missing)}")
    return values


def load_config(path, task: str, **overrides) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    values = parse_config(text, str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(task=task, **values)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(cfg: TrainConfig) -> str:
    out = []
    for name in _field_types():
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        out.append(f"{name} = {v}")
    return "\n".join(out) + "\n"
