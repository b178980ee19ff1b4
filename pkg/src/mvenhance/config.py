"""Run configuration: sectioned dataclasses, JSON files, dotted overrides.

Precedence is CLI override > config file > defaults. Unknown keys are
rejected. Every run writes its resolved configuration next to the outputs.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import DataError, UsageError
from .network import ModelConfig
from .trainer import TrainConfig


@dataclass
class SynthConfig:
    shot_gain: float = 1000.0
    read_sigma: float = 0.01
    gate_threshold: float = 0.2
    gate: bool = False
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"synth config: unknown keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self):
        return {"model": self.model.to_dict(), "train": self.train.to_dict(),
                "synth": self.synth.to_dict()}


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise DataError("config file must hold a JSON object")
    unknown = set(raw) - {"model", "train", "synth"}
    if unknown:
        raise DataError(f"config file: unknown sections {sorted(unknown)}")
    return RunConfig(
        model=ModelConfig.from_dict(raw.get("model", {})),
        train=TrainConfig.from_dict(raw.get("train", {})),
        synth=SynthConfig.from_dict(raw.get("synth", {})),
    )


def _coerce(section, key, current, text):
    if isinstance(current, bool):
        low = text.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise UsageError(f"override {section}.{key}: expected a boolean, got '{text}'")
    if isinstance(current, int):
        try:
            return int(text)
        except ValueError:
            raise UsageError(f"override {section}.{key}: expected an integer, got '{text}'") from None
    if isinstance(current, float):
        try:
            return float(text)
        except ValueError:
            raise UsageError(f"override {section}.{key}: expected a number, got '{text}'") from None
    return text


def apply_overrides(cfg, overrides):
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"override '{item}' is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise UsageError(f"override key '{dotted}' must be section.key")
        section, key = parts
        target = getattr(cfg, section, None)
        if target is None:
            raise UsageError(f"unknown config section '{section}'")
        if not hasattr(target, key):
            raise UsageError(f"unknown config key '{section}.{key}'")
        setattr(target, key, _coerce(section, key, getattr(target, key), value))
    return cfg


def resolve_config(config_path=None, overrides=None):
    cfg = load_config(config_path) if config_path else RunConfig()
    return apply_overrides(cfg, overrides)


def write_resolved(cfg, out_dir, name="config.resolved.json"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(cfg.to_dict()) + "\n")
    return path
