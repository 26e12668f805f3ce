"""Plain-text run configuration.

Grammar: ``[section]`` headers and ``key = value`` lines, ``#`` or ``;``
comments (parsed with :mod:`configparser`). Recognized sections and keys::

    [model]  variant, depths, channels, chunk_lens, mlp_ratio, stoch_depth,
             num_classes, input (HxW or HxWxT), gate, pathways, group_rule,
             temporal_group_rule, video_order, video_residual, temporal, dtype
    [train]  steps, lr, warmup, floor_lr, weight_decay, label_smoothing, seed
    [data]   source, kind, path, size, frames, batch_size, seed, noise

List values are comma separated. With ``variant = T|S|B|L`` the published
setting is loaded first and any other ``[model]`` key overrides it.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from os import PathLike
from typing import Optional, Union

from .data import DatasetSpec
from .model import ModelConfig, StageConfig, variant_config

_MODEL_KEYS = {
    "variant", "depths", "channels", "chunk_lens", "mlp_ratio", "stoch_depth", "num_classes",
    "input", "gate", "pathways", "group_rule", "temporal_group_rule", "video_order",
    "video_residual", "temporal", "dtype",
}
_TRAIN_KEYS = {"steps", "lr", "warmup", "floor_lr", "weight_decay", "label_smoothing", "seed"}
_DATA_KEYS = {"source", "kind", "path", "size", "frames", "batch_size", "seed", "noise"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 300
    lr: float = 3e-3
    warmup: int = 20
    floor_lr: float = 0.0
    weight_decay: float = 0.05
    label_smoothing: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DatasetSpec = field(default_factory=DatasetSpec)


def parse_input(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.lower().replace(" ", "").split("x"))
    except ValueError:
        raise ConfigError(f"input must look like HxW or HxWxT, got {text!r}") from None
    if len(dims) == 1:
        dims = (dims[0], dims[0])
    if len(dims) not in (2, 3) or min(dims) <= 0:
        raise ConfigError(f"input must look like HxW or HxWxT, got {text!r}")
    return dims


def _ints(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def model_from_section(sec: dict) -> ModelConfig:
    unknown = set(sec) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown [model] keys: {sorted(unknown)}")
    variant = sec.get("variant", "custom").strip()
    if variant.lower() != "custom":
        cfg = variant_config(variant)
        depths = [s.depth for s in cfg.stages]
        channels = [s.channels for s in cfg.stages]
        lens = [s.chunk_len for s in cfg.stages]
    else:
        for key in ("depths", "channels", "chunk_lens"):
            if key not in sec:
                raise ConfigError(f"custom model needs [model] {key}")
        cfg = ModelConfig(variant="custom", num_classes=sec_int(sec, "num_classes", 10))
        depths = channels = lens = None
    depths = _ints(sec["depths"]) if "depths" in sec else depths
    channels = _ints(sec["channels"]) if "channels" in sec else channels
    lens = _ints(sec["chunk_lens"]) if "chunk_lens" in sec else lens
    if not (len(depths) == len(channels) == len(lens)):
        raise ConfigError("depths, channels and chunk_lens need the same number of stages")
    stages = tuple(
        StageConfig(d, c, l, downsample_after=i < len(depths) - 1)
        for i, (d, c, l) in enumerate(zip(depths, channels, lens))
    )
    kw: dict = {"stages": stages}
    if "mlp_ratio" in sec:
        kw["mlp_ratio"] = float(sec["mlp_ratio"])
    if "stoch_depth" in sec:
        kw["stoch_depth_max"] = float(sec["stoch_depth"])
    if "num_classes" in sec:
        kw["num_classes"] = int(sec["num_classes"])
    if "input" in sec:
        dims = parse_input(sec["input"])
        kw.update(height=dims[0], width=dims[1])
        if len(dims) == 3:
            kw.update(input_kind="video", frames=dims[2])
    if "gate" in sec:
        kw["gate_enabled"] = _bool(sec["gate"])
    if "pathways" in sec:
        # H+W+C spelling: the two letters for the spatial axes select both spatial pathways
        p = sec["pathways"].lower().replace("+", "").replace("w", "v")
        kw["pathways"] = p
    for key in ("group_rule", "temporal_group_rule", "video_order", "video_residual", "dtype"):
        if key in sec:
            kw[key] = sec[key].strip()
    if "temporal" in sec:
        kw["temporal_enabled"] = _bool(sec["temporal"])
    return replace(cfg, **kw)


def sec_int(sec: dict, key: str, default: int) -> int:
    return int(sec[key]) if key in sec else default


def load_config(source: Union[str, PathLike], text: Optional[str] = None) -> RunConfig:
    """Read a config file (or ``text`` when given; ``source`` is then only a label)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if text is not None:
            parser.read_string(text, source=str(source))
        else:
            with open(source, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if "model" not in parser:
        raise ConfigError(f"{source}: missing [model] section")
    model = model_from_section(dict(parser["model"]))

    train_sec = dict(parser["train"]) if "train" in parser else {}
    unknown = set(train_sec) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown [train] keys: {sorted(unknown)}")
    defaults = TrainConfig()
    train = TrainConfig(
        steps=int(train_sec.get("steps", defaults.steps)),
        lr=float(train_sec.get("lr", defaults.lr)),
        warmup=int(train_sec.get("warmup", defaults.warmup)),
        floor_lr=float(train_sec.get("floor_lr", defaults.floor_lr)),
        weight_decay=float(train_sec.get("weight_decay", defaults.weight_decay)),
        label_smoothing=float(train_sec.get("label_smoothing", defaults.label_smoothing)),
        seed=int(train_sec.get("seed", defaults.seed)),
    )

    data_sec = dict(parser["data"]) if "data" in parser else {}
    unknown = set(data_sec) - _DATA_KEYS
    if unknown:
        raise ConfigError(f"unknown [data] keys: {sorted(unknown)}")
    d = DatasetSpec()
    kind = data_sec.get("kind", "frame-order" if model.input_kind == "video" else d.kind)
    data = DatasetSpec(
        source=data_sec.get("source", d.source),
        kind=kind,
        path=data_sec.get("path"),
        size=int(data_sec.get("size", model.height)),
        frames=int(data_sec.get("frames", model.frames if model.input_kind == "video" else d.frames)),
        batch_size=int(data_sec.get("batch_size", d.batch_size)),
        seed=int(data_sec.get("seed", d.seed)),
        noise=float(data_sec.get("noise", 0.1 if kind == "frame-order" else d.noise)),
    )
    return RunConfig(model=model, train=train, data=data)
