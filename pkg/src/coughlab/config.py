"""Flat, typed ``key = value`` run configuration.

File format: one ``key = value`` per line, ``#`` starts a comment, keys as
listed in ``SCHEMA``. Optional values accept ``none``. Precedence is
defaults < config file < command-line overrides.
"""
from __future__ import annotations

from pathlib import Path

from .audio import ConditioningConfig
from .errors import ConfigError
from .features import FrameConfig, MfccConfig
from .net.params import NetworkConfig
from .net.train import TrainConfig
from .pipeline import PipelineConfigs

# key -> (type, default); "?" suffix marks an optional (none-able) value
SCHEMA = {
    "seed": ("int", 0),
    "task": ("str", "healthy-vs-pathology"),
    "jobs": ("int", 1),
    "conditioning.target_rate": ("int", 11025),
    "conditioning.normalize_peak": ("bool", True),
    "frame.frame_len": ("float", 0.100),
    "frame.hop_len": ("float", 0.050),
    "frame.fft_size": ("int?", None),
    "mfcc.n_mfcc": ("int", 14),
    "mfcc.n_mels": ("int", 26),
    "mfcc.fmin": ("float", 0.0),
    "mfcc.fmax": ("float?", None),
    "mfcc.delta_window": ("int", 2),
    "mfcc.include_c0": ("bool", True),
    "net.hidden_units": ("int", 50),
    "net.num_bilstm_layers": ("int", 2),
    "net.dropout_rate": ("float", 0.3),
    "net.standardize_inputs": ("bool", False),
    "train.learning_rate": ("float", 1e-3),
    "train.batch_size": ("int", 16),
    "train.max_epochs": ("int", 100),
    "train.optimizer": ("str", "adam"),
    "train.beta1": ("float", 0.9),
    "train.beta2": ("float", 0.999),
    "train.eps": ("float", 1e-8),
    "train.gradient_clip_norm": ("float", 5.0),
    "train.early_stop_patience": ("int", 10),
    "split.train_fraction": ("float", 0.7),
    "split.val_fraction": ("float", 0.15),
    "split.stratify": ("bool", True),
    "analyze.frames_per_class": ("int", 5000),
    "analyze.n_bins": ("int", 5),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    kind, _ = SCHEMA[key]
    text = raw.strip()
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if optional and text.lower() == "none":
        return None
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = {k: d for k, (_, d) in SCHEMA.items()}
        for k, v in (values or {}).items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            self.values[k] = v

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def resolve(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls()
        if path is not None:
            cfg.values.update(read_config_file(path))
        for k, v in (overrides or {}).items():
            if v is None and not SCHEMA[k][0].endswith("?"):
                continue
            cfg.values[k] = v
        cfg.validate()
        return cfg

    def validate(self) -> None:
        # constructing the typed configs runs their invariant checks
        self.pipeline()
        self.network(2)
        self.training()
        if not 0.0 < self["split.train_fraction"] < 1.0:
            raise ConfigError("split.train_fraction must be in (0, 1)")
        if not 0.0 <= self["split.val_fraction"] < 1.0:
            raise ConfigError("split.val_fraction must be in [0, 1)")

    def pipeline(self) -> PipelineConfigs:
        v = self.values
        return PipelineConfigs(
            ConditioningConfig(v["conditioning.target_rate"], v["conditioning.normalize_peak"]),
            FrameConfig(v["frame.frame_len"], v["frame.hop_len"], "hamming", v["frame.fft_size"]),
            MfccConfig(v["mfcc.n_mfcc"], v["mfcc.n_mels"], v["mfcc.fmin"], v["mfcc.fmax"],
                       v["mfcc.delta_window"], v["mfcc.include_c0"]),
        )

    def network(self, num_classes: int) -> NetworkConfig:
        v = self.values
        return NetworkConfig(
            input_dim=3 * v["mfcc.n_mfcc"],
            hidden_units=v["net.hidden_units"],
            num_bilstm_layers=v["net.num_bilstm_layers"],
            dropout_rate=v["net.dropout_rate"],
            num_classes=num_classes,
            seed=v["seed"],
            standardize_inputs=v["net.standardize_inputs"],
        )

    def training(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            learning_rate=v["train.learning_rate"],
            batch_size=v["train.batch_size"],
            max_epochs=v["train.max_epochs"],
            optimizer=v["train.optimizer"],
            beta1=v["train.beta1"],
            beta2=v["train.beta2"],
            eps=v["train.eps"],
            gradient_clip_norm=v["train.gradient_clip_norm"],
            early_stop_patience=v["train.early_stop_patience"],
            seed=v["seed"],
        )

    def dumps(self) -> str:
        lines = ["# resolved run configuration"]
        lines += [f"{k} = {format_value(self.values[k])}" for k in SCHEMA]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = parse_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def parse_assignment(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    return key, parse_value(key, raw)
