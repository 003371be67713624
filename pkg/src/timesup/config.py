"""Plain-text `key = value` run configuration.

Lines are `key = value` with `#` comments; unknown keys are rejected so typos
fail loudly.  The schema mirrors the model/window/training knobs plus the
per-component init/freeze matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .data import WindowSpec
from .model import COMPONENTS, ComponentSetting, ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "on", "yes", "1"):
        return True
    if lowered in ("false", "off", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_choice(*choices: str):
    def parse(text: str) -> str:
        if text not in choices:
            raise ConfigError(f"expected one of {choices}, got {text!r}")
        return text
    return parse


_SCHEMA: dict[str, tuple] = {
    "data.path": (str, ""),
    "data.synthetic": (_parse_bool, True),
    "data.channels": (int, 3),
    "model.d": (int, 64),
    "model.layers": (int, 3),
    "model.heads": (int, 4),
    "model.vocab": (int, 256),
    "model.prototypes": (int, 100),
    "model.top_k": (int, 4),
    "model.compressed_tokens": (int, 8),
    "model.dropout": (float, 0.1),
    "model.horizon": (int, 96),
    "model.enhancer": (_parse_choice("on", "off"), "on"),
    "model.weights": (str, ""),
    "train.lr": (float, 1e-3),
    "train.epochs": (int, 20),
    "train.batch": (int, 32),
    "train.patience": (int, 5),
    "seed": (int, 2021),
    "window.input_len": (int, 96),
    "window.patch": (int, 16),
    "window.stride": (int, 8),
}
for _c in COMPONENTS:
    _SCHEMA[f"component.{_c}.init"] = (_parse_choice("pretrained", "random"), "random")
_SCHEMA["component.ln.mode"] = (_parse_choice("frozen", "trainable"), "trainable")
for _c in ("mha", "ffn", "emb"):
    _SCHEMA[f"component.{_c}.mode"] = (_parse_choice("frozen", "trainable"), "frozen")

# desk-scale synthetic data knobs are fixed, not configurable
SYNTH_LENGTH = 2400
SYNTH_COMPONENTS = 3
SYNTH_NOISE_STD = 0.05


@dataclass
class Config:
    values: dict[str, object]

    def __getitem__(self, key: str):
        return self.values[key]

    def window_spec(self) -> WindowSpec:
        return WindowSpec(input_len=self["window.input_len"],
                          horizon=self["model.horizon"],
                          patch_size=self["window.patch"],
                          stride=self["window.stride"])

    def model_config(self) -> ModelConfig:
        window = self.window_spec()
        components = {
            c: ComponentSetting(init=self[f"component.{c}.init"],
                                mode=self[f"component.{c}.mode"])
            for c in COMPONENTS
        }
        return ModelConfig(
            d=self["model.d"], layers=self["model.layers"], heads=self["model.heads"],
            vocab=self["model.vocab"], n_prototypes=self["model.prototypes"],
            top_k=self["model.top_k"], compressed_tokens=self["model.compressed_tokens"],
            dropout=self["model.dropout"], horizon=self["model.horizon"],
            enhancer=self["model.enhancer"] == "on",
            patch_size=window.patch_size, stride=window.stride,
            n_patches=window.n_patches, components=components,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self["train.lr"], epochs=self["train.epochs"],
                           batch_size=self["train.batch"],
                           patience=self["train.patience"], seed=self["seed"])


def parse_config(text: str) -> Config:
    values = {key: default for key, (_, default) in _SCHEMA.items()}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser = _SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    config = Config(values=values)
    _validate(config)
    return config


def _validate(config: Config) -> None:
    pretrained = [c for c in COMPONENTS if config[f"component.{c}.init"] == "pretrained"]
    if pretrained and not config["model.weights"]:
        raise ConfigError(
            f"components {pretrained} are pretrained but model.weights is not set"
        )
    if not config["data.synthetic"] and not config["data.path"]:
        raise ConfigError("data.path required when data.synthetic is false")


def load_config(path) -> Config:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def serialize_config(config: Config) -> str:
    lines = []
    for key in sorted(_SCHEMA):
        value = config[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
