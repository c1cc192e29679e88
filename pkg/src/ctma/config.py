"""Run configuration: a flat registry of dotted keys over the component
config dataclasses.

File format: one `key = value` per line, `#` starts a comment, blank lines
ignored. Lists are comma-separated (`te.tblock2_filters = 256,256,512,512`).
CLI overrides use the same `key=value` syntax and win over file values.
Unknown keys are rejected. With no file and no overrides every value is the
published training default.
"""

from dataclasses import dataclass, field
from typing import List, Optional

from .errors import ConfigError
from .losses import LossConfig
from .model import AblationFlags, CTMANet
from .spatial_encoder import SEConfig
from .synthetic import SynthParams
from .temporal_encoder import TEConfig
from .tiling import TileSpec
from .train import ScheduleConfig


@dataclass
class RunConfig:
    seed: int = 0
    run_name: str = "run"
    data_root: str = ""
    augment_enabled: bool = True
    augment_translate: float = 0.1
    synth_count: int = 32
    te: TEConfig = field(default_factory=TEConfig)
    se: SEConfig = field(default_factory=SEConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    tile: TileSpec = field(default_factory=TileSpec)
    flags: AblationFlags = field(default_factory=AblationFlags)
    synth: SynthParams = field(default_factory=SynthParams)

    def validate(self):
        if self.synth_count < 1:
            raise ConfigError("synth.count must be >= 1")
        if not 0.0 <= self.augment_translate <= 0.5:
            raise ConfigError("augment.translate_frac must lie in [0, 0.5]")
        self.te.validate()
        self.se.validate()
        self.loss.validate()
        self.schedule.validate()
        self.tile.validate()
        self.flags.validate()
        self.synth.validate()
        return self

    def build_model(self) -> CTMANet:
        return CTMANet(self.te, self.se, self.flags)


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> List[int]:
    return [int(x) for x in s.split(",")]


def _parse_float_pair(s: str):
    parts = [float(x) for x in s.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two values, got {len(parts)}")
    return tuple(parts)


def _parse_int_pair(s: str):
    parts = [int(x) for x in s.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two values, got {len(parts)}")
    return tuple(parts)


def _parse_int_triple(s: str):
    parts = [int(x) for x in s.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three values, got {len(parts)}")
    return tuple(parts)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# dotted key -> (attribute path on RunConfig, parser)
KEY_REGISTRY = {
    "seed": ("seed", int),
    "run_name": ("run_name", str),
    "data_root": ("data_root", str),
    "augment.enabled": ("augment_enabled", _parse_bool),
    "augment.translate_frac": ("augment_translate", float),
    "te.tblock1_channels": ("te.tblock1_channels", int),
    "te.tblock2_filters": ("te.tblock2_filters", _parse_int_list),
    "te.mask_threshold": ("te.mask_threshold", float),
    "te.n_frames": ("te.n_frames", int),
    "se.channels": ("se.channels", _parse_int_triple),
    "se.backbone_stem": ("se.backbone_stem", int),
    "se.backbone_stages": ("se.backbone_stages", _parse_int_pair),
    "fusion.lambda_mask": ("se.fusion.lambda_mask", float),
    "fusion.gl_weights": ("se.fusion.gl_weights", _parse_float_pair),
    "fusion.binarize_threshold": ("se.fusion.binarize_threshold", float),
    "loss.alpha": ("loss.alpha", float),
    "loss.aux_weight": ("loss.aux_weight", float),
    "loss.mode": ("loss.mode", str),
    "loss.class_weighting": ("loss.class_weighting", str),
    "loss.epsilon": ("loss.epsilon", float),
    "schedule.base_lr": ("schedule.base_lr", float),
    "schedule.decay_rate": ("schedule.decay_rate", float),
    "schedule.decay_step": ("schedule.decay_step", int),
    "schedule.optimizer": ("schedule.optimizer", str),
    "schedule.batch_size": ("schedule.batch_size", int),
    "schedule.max_iterations": ("schedule.max_iterations", int),
    "schedule.weight_decay": ("schedule.weight_decay", float),
    "schedule.grad_clip": ("schedule.grad_clip", float),
    "tile.tile_size": ("tile.tile_size", int),
    "tile.stride": ("tile.stride", int),
    "flags.use_te": ("flags.use_te", _parse_bool),
    "flags.use_se": ("flags.use_se", _parse_bool),
    "flags.use_resnet_diff": ("flags.use_resnet_diff", _parse_bool),
    "flags.use_mask_augment": ("flags.use_mask_augment", _parse_bool),
    "flags.use_motion_augment": ("flags.use_motion_augment", _parse_bool),
    "synth.count": ("synth_count", int),
    "synth.canvas": ("synth.canvas", int),
    "synth.num_shapes": ("synth.num_shapes", int),
    "synth.shape_min": ("synth.shape_min", int),
    "synth.shape_max": ("synth.shape_max", int),
    "synth.noise": ("synth.noise", float),
}


def _set_key(cfg: RunConfig, key: str, raw: str):
    if key not in KEY_REGISTRY:
        raise ConfigError(f"unknown config key {key!r}")
    path, parser = KEY_REGISTRY[key]
    try:
        value = parser(raw.strip())
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad value for {key}: {e}") from e
    parts = path.split(".")
    obj = cfg
    for p in parts[:-1]:
        obj = getattr(obj, p)
    setattr(obj, parts[-1], value)


def _get_key(cfg: RunConfig, key: str):
    path, _ = KEY_REGISTRY[key]
    obj = cfg
    for p in path.split("."):
        obj = getattr(obj, p)
    return obj


def _apply_line(cfg: RunConfig, line: str, where: str):
    text = line.split("#", 1)[0].strip()
    if not text:
        return
    if "=" not in text:
        raise ConfigError(f"{where}: expected key = value, got {line.strip()!r}")
    key, raw = text.split("=", 1)
    _set_key(cfg, key.strip(), raw)


def parse_config(path: Optional[str] = None, overrides: Optional[List[str]] = None) -> RunConfig:
    """Resolve file values, then CLI overrides, then validate the result."""
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as f:
                lines = f.readlines()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        for i, line in enumerate(lines, 1):
            _apply_line(cfg, line, f"{path}:{i}")
    for ov in overrides or []:
        _apply_line(cfg, ov, f"override {ov!r}")
    return cfg.validate()


def parse_config_text(text: str, overrides: Optional[List[str]] = None) -> RunConfig:
    """Same resolution order, reading the file content from a string (used to
    rebuild a model from the config snapshot embedded in a checkpoint)."""
    cfg = RunConfig()
    for i, line in enumerate(text.splitlines(), 1):
        _apply_line(cfg, line, f"snapshot:{i}")
    for ov in overrides or []:
        _apply_line(cfg, ov, f"override {ov!r}")
    return cfg.validate()


def snapshot(cfg: RunConfig) -> str:
    """Canonical text of every resolved key; parsing it back reproduces cfg."""
    lines = [f"{key} = {_fmt(_get_key(cfg, key))}" for key in sorted(KEY_REGISTRY)]
    return "\n".join(lines) + "\n"
