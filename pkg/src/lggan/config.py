"""Model configuration, ablation setups and the run-config file."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

SEMANTIC = "semantic"
CROSS_VIEW = "cross-view"
SETUPS = ("S1", "S2", "S3", "S4", "S5")
LOCAL_VARIANTS = ("add", "conv")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Architecture, ablation setup, loss weights and optimiser settings.

    Setups: S1 global only; S2 + local (add); S3 + local (conv); S4 + class
    classifier; S5 + learned weight-map fusion. Without fusion (S2-S4) the
    two branches are averaged with fixed 0.5/0.5 weights.
    """

    num_classes: int
    mode: str = SEMANTIC
    nf: int = 32
    nf_d: int = 32
    n_res: int = 3
    setup: str = "S5"
    local_variant: Optional[str] = None  # resolved from the setup when omitted
    lambda_gan: float = 1.0
    lambda_l1_local: float = 10.0
    lambda_ce: float = 1.0
    lambda_l1_fused: float = 10.0
    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.999
    batch_size: int = 1
    epochs: int = 200
    seed: int = 0
    void_id: int = 255

    def __post_init__(self):
        if self.mode not in (SEMANTIC, CROSS_VIEW):
            raise ConfigError(f"mode: expected one of {SEMANTIC!r}, {CROSS_VIEW!r}, got {self.mode!r}")
        if self.setup not in SETUPS:
            raise ConfigError(f"setup: expected one of {', '.join(SETUPS)}, got {self.setup!r}")
        if self.local_variant is not None and self.local_variant not in LOCAL_VARIANTS:
            raise ConfigError(f"local_variant: expected 'add' or 'conv', got {self.local_variant!r}")
        required = {"S2": "add", "S3": "conv", "S4": "conv", "S5": "conv"}.get(self.setup)
        if required is not None:
            if self.local_variant not in (None, required):
                raise ConfigError(
                    f"local_variant: setup {self.setup} requires {required!r}, got {self.local_variant!r}")
            self.local_variant = required
        for name in ("num_classes", "nf", "nf_d", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        for name in ("n_res", "epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0, got {getattr(self, name)}")
        for name in ("lambda_gan", "lambda_l1_local", "lambda_ce", "lambda_l1_fused", "lr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative, got {getattr(self, name)}")

    @property
    def use_local(self) -> bool:
        return self.setup != "S1"

    @property
    def use_classifier(self) -> bool:
        return self.setup in ("S4", "S5")

    @property
    def use_fusion(self) -> bool:
        return self.setup == "S5"

    @property
    def cross_view(self) -> bool:
        return self.mode == CROSS_VIEW

    @property
    def in_channels(self) -> int:
        return self.num_classes + (3 if self.cross_view else 0)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {', '.join(unknown)}")
        if "num_classes" not in values:
            raise ConfigError("num_classes: required")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class RunConfig:
    """Everything a `train` invocation needs: model settings plus data and output paths."""

    model: ModelConfig
    data_root: Optional[str] = None
    synthetic: bool = False
    synthetic_samples: int = 16
    image_height: int = 64
    image_width: int = 64
    out_dir: Optional[str] = None
    checkpoint_every: int = 500
    max_steps: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        values = self.model.to_dict()
        for f in dataclasses.fields(self):
            if f.name != "model":
                values[f.name] = getattr(self, f.name)
        return values


_RUN_KEYS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "model"}
_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _check_type(key: str, value: Any, expected: type) -> Any:
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is not bool and isinstance(value, bool) or not isinstance(value, expected):
        raise ConfigError(f"{key}: expected {expected.__name__}, got {value!r}")
    return value


def _field_type(f: dataclasses.Field) -> tuple[type, bool]:
    name = str(f.type)
    optional = name.startswith("Optional[")
    base = name[len("Optional["):-1] if optional else name
    return _TYPES[base], optional


def parse_run_config(values: dict[str, Any]) -> RunConfig:
    if not isinstance(values, dict):
        raise ConfigError("config file must contain a mapping of keys to values")
    model_fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    unknown = sorted(set(values) - set(model_fields) - set(_RUN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    model_values, run_values = {}, {}
    for key, value in values.items():
        f = model_fields.get(key) or _RUN_KEYS[key]
        expected, optional = _field_type(f)
        if not (optional and value is None):
            value = _check_type(key, value, expected)
        (model_values if key in model_fields else run_values)[key] = value
    run = RunConfig(ModelConfig.from_dict(model_values), **run_values)
    if not run.synthetic and not run.data_root:
        raise ConfigError("data_root: required unless synthetic is true")
    if run.checkpoint_every < 1:
        raise ConfigError("checkpoint_every: must be >= 1")
    return run


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        values = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_run_config(values or {})


def dump_run_config(run: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(run.to_dict(), sort_keys=False))
