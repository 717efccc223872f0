"""key=value config files for the train stage.

Grammar: one `key = value` per line, '#' or '%' comments, blank lines
ignored. Keys mirror TrainConfig and ArchitectureConfig fields. Layer
lists use a compact shape grammar:

    conv_layers = 64x5x5,32x3x3,16x3x3
    fc_widths   = 128,64
    input_shape = 84x130
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidParam, IoFailure
from .siamese import ArchitectureConfig, TrainConfig

_TRAIN_KEYS = {"batch_size": int, "epochs": int, "dropout_rate": float,
               "l2_lambda": float, "lr": float, "seed": int}
_ARCH_KEYS = {"conv_layers", "fc_widths", "input_shape"}


def _parse_dims(text: str, key: str) -> tuple:
    try:
        return tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise InvalidParam(f"{key}: bad dims {text!r} (want e.g. 64x5x5)") from None


def parse_kv_lines(lines, origin="<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidParam(f"{origin}:{lineno}: expected key=value, got {line!r}")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise InvalidParam(f"{origin}:{lineno}: empty key or value")
        if key in out:
            raise InvalidParam(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config_file(path) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_kv_lines(fh.readlines(), origin=str(path))
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc


def build_configs(overrides: dict[str, str]) -> tuple[TrainConfig, ArchitectureConfig]:
    """Defaults plus overrides; unknown keys are errors, not typos to ignore."""
    train = TrainConfig()
    arch = ArchitectureConfig()
    for key, value in overrides.items():
        if key in _TRAIN_KEYS:
            try:
                setattr(train, key, _TRAIN_KEYS[key](value))
            except ValueError:
                raise InvalidParam(f"{key}: cannot parse {value!r}") from None
        elif key == "conv_layers":
            layers = tuple(_parse_dims(part, key) for part in value.split(",") if part)
            for layer in layers:
                if len(layer) != 3:
                    raise InvalidParam(f"conv_layers: want FxKHxKW triples, got {value!r}")
            arch.conv_layers = layers
        elif key == "fc_widths":
            try:
                arch.fc_widths = tuple(int(p) for p in value.split(","))
            except ValueError:
                raise InvalidParam(f"fc_widths: cannot parse {value!r}") from None
        elif key == "input_shape":
            dims = _parse_dims(value, key)
            if len(dims) != 2:
                raise InvalidParam(f"input_shape: want HxW, got {value!r}")
            arch.input_shape = dims
        else:
            raise InvalidParam(f"unknown config key {key!r}")
    train.validate()
    arch.validate()
    return train, arch


@dataclass
class PipelineConfig:
    """Resolved paths and configs for one end-to-end run."""
    corpus_dir: str = "corpus"
    feature_dir: str = "features"
    checkpoint_path: str = "model.ckpt"
    report_path: str = "report.json"
    master_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
