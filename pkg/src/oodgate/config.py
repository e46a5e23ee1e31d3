"""Pipeline configuration as a flat ``key = value`` text file."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from oodgate.errors import ValidationError
from oodgate.features import SCHEMA_VERSION
from oodgate.features.statistics import BLACK_THRESHOLD, DARK_THRESHOLD
from oodgate.imaging import FACTORS


@dataclass(frozen=True)
class PipelineConfig:
    factor: int = 1
    seed: int = 0
    dark_threshold: float = DARK_THRESHOLD
    black_threshold: float = BLACK_THRESHOLD
    class_weight: str = "none"
    manifest: str = ""
    model: str = ""
    output_dir: str = "."
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.factor not in FACTORS:
            raise ValidationError(f"factor must be one of {FACTORS}, got {self.factor}")
        for name in ("dark_threshold", "black_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 255.0:
                raise ValidationError(f"{name} must lie in [0, 255], got {v}")
        if self.class_weight not in ("none", "balanced"):
            raise ValidationError(f"class_weight must be 'none' or 'balanced', got {self.class_weight!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"schema_version {self.schema_version} is not supported (expected {SCHEMA_VERSION})")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> PipelineConfig:
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ValidationError(f"config line {lineno}: expected key = value")
            if key not in types:
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse(types[key], value, key)
        return cls(**values)

    def with_overrides(self, **overrides) -> PipelineConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _parse(kind: str, value: str, key: str):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {value!r} as {kind}") from None
    return value


def load_config(path) -> PipelineConfig:
    return PipelineConfig.from_text(Path(path).read_text())


def save_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(config.to_text())
