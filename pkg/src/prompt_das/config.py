"""Flat `key = value` run configuration with dotted namespaces.

Every subcommand has a closed key registry; an unknown key is a config error
before any artifact is written. Values are plain text: booleans are
true/false, lists are comma-separated. `--set key=value` overrides win over
the file.
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import BadConfig

OUTPUT_ROOT_ENV = "PROMPT_DAS_OUT"


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(","))


REQUIRED = object()

_MODEL_KEYS = {
    "model.image_size": (int, 32),
    "model.patch": (int, 8),
    "model.d": (int, 64),
    "model.depth": (int, 4),
    "model.heads": (int, 4),
    "model.mlp_ratio": (float, 4.0),
    "model.classes": (int, 6),
    "model.preset": (str, "desk"),  # desk | vit_base
}

_FINETUNE_KEYS = {
    "data": (str, REQUIRED),
    "checkpoint": (str, REQUIRED),
    "out_dir": (str, None),
    "seed": (int, 0),
    "method": (str, "vpt"),  # fullfinetune | linearprobe | vpt
    "vpt.variant": (str, "deep"),
    "vpt.p": (int, 30),
    "vpt.strategy": (str, "bottom_top"),
    "vpt.depth": (int, None),
    "vpt.carry_prompt_outputs": (_bool, False),
    "schedule.epochs": (int, 200),
    "schedule.batch": (int, 16),
    "schedule.base_lr": (float, 0.5),
    "schedule.weight_decay": (float, 0.0),
    "schedule.momentum": (float, 0.9),
    "schedule.augment": (_bool, True),
    "grid.base_lrs": (_float_list, None),
    "grid.weight_decays": (_float_list, None),
}

REGISTRY: dict[str, dict[str, tuple]] = {
    "synth": {
        "scenario": (str, REQUIRED),  # builtin name (gait6, leak4) or spec file path
        "out_dir": (str, None),
        "seed": (int, 0),
        "image_size": (int, 32),
        "representation": (str, "spatiotemporal"),
        "keep_raw": (_bool, False),
        "train_per_class": (int, None),
        "val_per_class": (int, None),
        "test_per_class": (int, None),
    },
    "preprocess": {
        "input": (str, REQUIRED),
        "out_dir": (str, None),
        "representation": (str, "spatiotemporal"),
        "image_size": (int, 32),
        "sample_rate": (float, None),  # falls back to the dataset.info value
        "denoise.enabled": (_bool, True),
        "denoise.threshold": (float, 1.0),
        "denoise.levels": (int, 4),
        "denoise.family": (str, "db4"),
        "stft.window": (int, 256),
        "stft.hop": (int, 128),
    },
    "pretrain": {
        "data": (str, REQUIRED),
        "out_dir": (str, None),
        "seed": (int, 0),
        "mask_ratio": (float, 0.75),
        "keep_decoder": (_bool, False),
        **_MODEL_KEYS,
        "decoder.d": (int, 32),
        "decoder.depth": (int, 2),
        "decoder.heads": (int, 4),
        "schedule.epochs": (int, 100),
        "schedule.batch": (int, 16),
        "schedule.lr": (float, 0.001),
        "schedule.weight_decay": (float, 0.05),
        "schedule.warmup_frac": (float, 0.05),
    },
    "finetune": dict(_FINETUNE_KEYS),
    "eval": {
        "checkpoint": (str, REQUIRED),
        "data": (str, REQUIRED),
        "split": (str, "test"),
        "out_dir": (str, None),
        "batch": (int, 64),
    },
    "sweep": {
        **_FINETUNE_KEYS,
        "kind": (str, REQUIRED),  # prompt_count | depth | datasize
        "sweep.p_values": (_int_list, (1, 5, 10, 15, 20, 25, 30)),
        "sweep.strategies": (_str_list, ("bottom_top", "top_bottom")),
        "sweep.depths": (_int_list, None),  # default: 1..model depth
        "sweep.sizes": (_int_list, None),
        "sweep.split": (str, "test"),
    },
    "report": {
        "input": (str, REQUIRED),
        "out_dir": (str, None),
    },
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key -> value strings; no registry applied yet."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise BadConfig(f"{source}:{lineno}: empty key")
        if key in raw:
            raise BadConfig(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def read_config_file(path: Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise BadConfig(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def resolve(command: str, raw: dict[str, str], overrides: dict[str, str] | None = None) -> dict:
    """Validate keys against the command registry and coerce types."""
    if command not in REGISTRY:
        raise BadConfig(f"unknown command {command!r}")
    registry = REGISTRY[command]
    merged = dict(raw)
    merged.update(overrides or {})
    unknown = sorted(set(merged) - set(registry))
    if unknown:
        raise BadConfig(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    resolved: dict = {}
    for key, (coerce, default) in registry.items():
        if key in merged:
            try:
                resolved[key] = coerce(merged[key])
            except ValueError as exc:
                raise BadConfig(f"config key {key}: {exc}") from exc
        elif default is REQUIRED:
            raise BadConfig(f"missing required config key {key!r} for {command}")
        else:
            resolved[key] = default
    return resolved


def canonical_text(config: dict) -> str:
    """Stable textual echo of a resolved config (sorted keys, one per line)."""
    lines = []
    for key in sorted(config):
        value = config[key]
        if value is None:  # unset optionals stay unset on re-parse
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def default_out_dir(config_value: str | None, command: str) -> Path:
    if config_value:
        return Path(config_value)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / command
