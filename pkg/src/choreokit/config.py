"""Project configuration: flat key=value sections, validated on load.

Defaults carry the full-scale constants (31 joints, 500 clusters, 184-dim
embedding, 13-frame words, beta 40, lambda 0.5, lr 1e-4, batch 32); desk-scale
runs override them per file or flag. Unknown sections or keys are rejected.
The default config path comes from $CHOREOKIT_CONFIG when set.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path

ENV_CONFIG = "CHOREOKIT_CONFIG"


@dataclass
class ProjectConfig:
    fps: float = 30.0
    joints: int = 31
    units: str = "cm"
    clusters: int = 500
    embedding_dim: int = 184
    word_frames: int = 13
    beta: float = 40.0
    contact_height: float = 3.0
    contact_speed: float = 0.5
    left_foot: str = ""
    right_foot: str = ""
    hidden: int = 64
    layers: int = 3
    lambda_perceptual: float = 0.5
    learning_rate: float = 1e-4
    batch_size: int = 32
    window: int = 100
    gt_len: int = 5
    self_len: int = 5
    sg_window: int = 9
    sg_order: int = 3
    tolerance: int = 1
    blend_frames: int = 3
    smooth_window: int = 5
    sampler_mode: str = "deficit"
    seed: int = 0
    store_path: str = ""
    bundle_path: str = ""
    clips_path: str = ""

    def validate(self) -> None:
        positive = ("fps", "joints", "clusters", "embedding_dim", "word_frames",
                    "hidden", "layers", "learning_rate", "batch_size", "window")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config: {name} must be positive")
        if self.word_frames < 2:
            raise ValueError("config: word_frames must be at least 2")
        if self.beta < 0 or self.lambda_perceptual < 0:
            raise ValueError("config: beta and lambda_perceptual must be >= 0")
        if self.sampler_mode not in ("deficit", "absolute"):
            raise ValueError("config: sampler_mode must be deficit or absolute")
        if self.sg_window < 1 or self.sg_window % 2 == 0:
            raise ValueError("config: sg_window must be odd and positive")


# section -> {file key -> dataclass field}
_SCHEMA: dict[str, dict[str, str]] = {
    "core": {"fps": "fps", "joints": "joints", "units": "units"},
    "motif": {"clusters": "clusters", "embedding_dim": "embedding_dim",
              "word_frames": "word_frames"},
    "style": {"beta": "beta"},
    "contacts": {"height_threshold": "contact_height",
                 "speed_threshold": "contact_speed",
                 "left_foot": "left_foot", "right_foot": "right_foot"},
    "train": {"hidden": "hidden", "layers": "layers",
              "lambda_perceptual": "lambda_perceptual",
              "learning_rate": "learning_rate", "batch_size": "batch_size",
              "window": "window", "gt_len": "gt_len", "self_len": "self_len"},
    "eval": {"sg_window": "sg_window", "sg_order": "sg_order",
             "tolerance": "tolerance"},
    "synth": {"blend_frames": "blend_frames", "smooth_window": "smooth_window",
              "sampler_mode": "sampler_mode"},
    "paths": {"store": "store_path", "bundle": "bundle_path", "clips": "clips_path"},
    "seeds": {"default": "seed"},
}


def default_config_path() -> Path | None:
    value = os.environ.get(ENV_CONFIG)
    return Path(value) if value else None


def load_config(path: str | Path | None = None) -> ProjectConfig:
    """Load from the given path, $CHOREOKIT_CONFIG, or pure defaults."""
    if path is None:
        path = default_config_path()
    config = ProjectConfig()
    if path is None:
        config.validate()
        return config
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    types = {f.name: f.type for f in fields(ProjectConfig)}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"config: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ValueError(f"config: unknown key {key!r} in [{section}]")
            field_name = _SCHEMA[section][key]
            kind = types[field_name]
            try:
                if kind == "int":
                    value = int(raw)
                elif kind == "float":
                    value = float(raw)
                else:
                    value = raw
            except ValueError:
                raise ValueError(f"config: bad value for {section}.{key}: {raw!r}") from None
            setattr(config, field_name, value)
    config.validate()
    return config


def save_config(config: ProjectConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    for section, mapping in _SCHEMA.items():
        parser[section] = {key: str(getattr(config, field_name))
                           for key, field_name in mapping.items()}
    with open(path, "w") as fh:
        parser.write(fh)
