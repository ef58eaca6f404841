"""Run configuration: schema, defaults, presets, and JSON handling.

Config files are JSON with // and /* */ comments allowed; comments are
stripped before parsing. Unknown keys are rejected. The resolved config
printed by --print-config round-trips through the same loader.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .kernels import conv_output_size


@dataclass
class ModelConfig:
    in_channels: int = 3
    channels: list = field(default_factory=lambda: [16, 32, 48, 48, 32])
    kernels: list = field(default_factory=lambda: [3, 3, 3, 3, 3])
    strides: list = field(default_factory=lambda: [2, 2, 1, 1, 1])
    template_size: int = 64
    search_size: int = 96
    fusion_channels: int = 32

    @property
    def total_stride(self):
        out = 1
        for s in self.strides:
            out *= s
        return out

    def feature_sizes(self, input_size):
        """Spatial size after each backbone block for a square input."""
        sizes = []
        size = input_size
        for k, s in zip(self.kernels, self.strides):
            size = conv_output_size(size, k, s, 0)
            sizes.append(size)
        return sizes

    def response_size(self):
        """Spatial size of the correlation maps (and every head output)."""
        search = self.feature_sizes(self.search_size)
        template = self.feature_sizes(self.template_size)
        mid = search[3] - template[3] + 1
        deep = search[4] - template[4] + 1
        return mid, deep


@dataclass
class TrainSchedule:
    total_epochs: int = 20
    freeze_epochs: int = 4
    steps_per_epoch: int = 50
    batch_size: int = 8
    lr_start: float = 0.005
    lr_end: float = 0.0005
    momentum: float = 0.9
    clip_grad: float = 10.0  # global gradient-norm ceiling; 0 disables
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 means final checkpoint only


@dataclass
class LabelConfig:
    area_ratio: float = 2.0
    iou_pos: float = 0.6
    iou_neg: float = 0.3
    min_anchor_size: float = 1e-3


@dataclass
class LossWeights:
    lambda_cls1: float = 1.2
    lambda_cls2: float = 1.0
    lambda_cls3: float = 1.0
    lambda_loc1: float = 1.0
    lambda_loc2: float = 1.0
    lambda_1: float = 1.0
    lambda_2: float = 1.0
    smooth_l1_delta: float = 1.0


@dataclass
class TrackerConfig:
    window_influence: float = 0.3
    scale_damping: float = 0.7   # weight kept on the previous size
    max_scale_step: float = 1.4  # per-frame size-ratio ceiling before damping
    alpha_cls1: float = 1.0
    alpha_cls2: float = 1.0
    alpha_cls3: float = 1.0


@dataclass
class EvalConfig:
    cle_max: float = 50.0
    cle_step: float = 1.0
    iou_step: float = 0.02
    rank_cle: float = 20.0


@dataclass
class SceneConfig:
    frame_height: int = 192
    frame_width: int = 192
    min_object: float = 20.0
    max_object: float = 44.0
    max_velocity: float = 1.5
    jitter: float = 0.5
    appearance_noise: float = 6.0
    center_jitter: float = 8.0  # search-crop center offset during training
    max_frame_gap: int = 8
    num_scenes: int = 32


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    labels: LabelConfig = field(default_factory=LabelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: SceneConfig = field(default_factory=SceneConfig)


PRESETS = {
    "toy": {},
    "paper": {
        "model": {
            "channels": [96, 256, 384, 384, 256],
            "kernels": [11, 5, 3, 3, 3],
            "strides": [2, 2, 2, 1, 1],
            "template_size": 127,
            "search_size": 287,
            "fusion_channels": 256,
        },
        "schedule": {
            "total_epochs": 50,
            "freeze_epochs": 10,
            "batch_size": 124,
            "lr_start": 0.005,
            "lr_end": 0.0005,
            "momentum": 0.9,
        },
    },
}

# Defaults that encode reference-protocol constants, keyed by (section, field);
# emitted as comments by format_config when the current value still matches.
_PROTOCOL_NOTES = {
    ("loss", "lambda_cls1"): (1.2, "reference protocol: branch-1 classification weight 1.2"),
    ("loss", "lambda_cls2"): (1.0, "reference protocol: remaining loss weights 1"),
    ("schedule", "lr_start"): (0.005, "reference protocol: learning rate decays 0.005 -> 0.0005 in log space"),
    ("schedule", "lr_end"): (0.0005, "reference protocol: learning rate decays 0.005 -> 0.0005 in log space"),
    ("schedule", "total_epochs"): (50, "reference protocol: 50 training epochs"),
    ("schedule", "freeze_epochs"): (10, "reference protocol: feature extractor frozen for the first 10 epochs"),
    ("schedule", "batch_size"): (124, "reference protocol: minibatch of 124 pairs"),
    ("schedule", "momentum"): (0.9, "reference protocol: SGD momentum 0.9"),
    ("model", "template_size"): (127, "reference protocol: 127x127 template patch"),
    ("model", "search_size"): (287, "reference protocol: 287x287 search patch"),
}

_SECTIONS = {
    "model": ModelConfig,
    "schedule": TrainSchedule,
    "labels": LabelConfig,
    "loss": LossWeights,
    "tracker": TrackerConfig,
    "eval": EvalConfig,
    "data": SceneConfig,
}


def strip_comments(text):
    """Remove // line and /* */ block comments outside of strings."""
    out = []
    i = 0
    n = len(text)
    in_string = False
    while i < n:
        ch = text[i]
        if in_string:
            out.append(ch)
            if ch == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 2
                continue
            if ch == '"':
                in_string = False
            i += 1
            continue
        if ch == '"':
            in_string = True
            out.append(ch)
            i += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "*":
            i += 2
            while i + 1 < n and not (text[i] == "*" and text[i + 1] == "/"):
                i += 1
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _coerce(section, name, value, current):
    if isinstance(current, bool):
        expected = bool
    elif isinstance(current, int):
        expected = int
    elif isinstance(current, float):
        if isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        expected = float
    elif isinstance(current, list):
        expected = list
    elif isinstance(current, str):
        expected = str
    else:
        expected = type(current)
    if not isinstance(value, expected) or isinstance(value, bool) is not isinstance(current, bool):
        raise ConfigError(
            f"config key '{section}.{name}' expects {expected.__name__}, "
            f"got {type(value).__name__}"
        )
    return value


def _apply_section(obj, section, overrides):
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in overrides.items():
        if key not in names:
            raise ConfigError(f"unknown config key '{section}.{key}'")
        setattr(obj, key, _coerce(section, key, value, getattr(obj, key)))


def from_dict(data, base=None):
    cfg = base if base is not None else RunConfig()
    for key, value in data.items():
        if key == "seed":
            cfg.seed = _coerce("", "seed", value, cfg.seed)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section '{key}' must be an object")
            _apply_section(getattr(cfg, key), key, value)
        else:
            raise ConfigError(f"unknown config key '{key}'")
    return cfg


def load_config(path=None, preset="toy", seed=None):
    """Resolve preset defaults, then file overrides, then the seed flag."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset '{preset}'")
    cfg = from_dict(PRESETS[preset])
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
            data = json.loads(strip_comments(text))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = from_dict(data, base=cfg)
    if seed is not None:
        cfg.seed = int(seed)
    validate(cfg)
    return cfg


def validate(cfg):
    m, sch, lbl, lw, trk = cfg.model, cfg.schedule, cfg.labels, cfg.loss, cfg.tracker
    if len(m.channels) != 5 or len(m.kernels) != 5 or len(m.strides) != 5:
        raise ConfigError("model.channels/kernels/strides must list five conv blocks")
    if any(c < 1 for c in m.channels) or any(k < 1 for k in m.kernels) or any(s < 1 for s in m.strides):
        raise ConfigError("model block sizes must be positive")
    try:
        mid, deep = m.response_size()
    except ValueError as exc:
        raise ConfigError(f"model patch sizes collapse: {exc}") from exc
    if mid < 1 or deep < 1:
        raise ConfigError("template feature map larger than search feature map")
    if sch.freeze_epochs >= sch.total_epochs:
        raise ConfigError(
            f"schedule.freeze_epochs ({sch.freeze_epochs}) must be below "
            f"total_epochs ({sch.total_epochs})"
        )
    if sch.lr_start <= 0 or sch.lr_end <= 0:
        raise ConfigError("schedule learning rates must be positive")
    if not 0 <= sch.momentum < 1:
        raise ConfigError("schedule.momentum must lie in [0, 1)")
    if sch.batch_size < 1 or sch.steps_per_epoch < 1:
        raise ConfigError("schedule batch/steps must be positive")
    if lbl.area_ratio <= 1.0:
        raise ConfigError("labels.area_ratio must exceed 1")
    if lbl.iou_neg >= lbl.iou_pos:
        raise ConfigError("labels.iou_neg must be below labels.iou_pos")
    for name in ("lambda_cls1", "lambda_cls2", "lambda_cls3", "lambda_loc1",
                 "lambda_loc2", "lambda_1", "lambda_2"):
        if getattr(lw, name) < 0:
            raise ConfigError(f"loss.{name} must be non-negative")
    alphas = (trk.alpha_cls1, trk.alpha_cls2, trk.alpha_cls3)
    if any(a < 0 for a in alphas) or all(a == 0 for a in alphas):
        raise ConfigError("tracker score-fusion weights must be non-negative and not all zero")
    if not 0 <= trk.window_influence <= 1:
        raise ConfigError("tracker.window_influence must lie in [0, 1]")
    if not 0 <= trk.scale_damping <= 1:
        raise ConfigError("tracker.scale_damping must lie in [0, 1]")
    return cfg


def to_dict(cfg):
    out = {"seed": cfg.seed}
    for name in _SECTIONS:
        out[name] = dataclasses.asdict(getattr(cfg, name))
    return out


def _format_value(value):
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            raise ConfigError("non-finite config value")
        return json.dumps(value)
    return json.dumps(value)


def format_config(cfg):
    """Render the resolved config as commented JSON (round-trips via loader)."""
    lines = ["{"]
    lines.append(f'  "seed": {json.dumps(cfg.seed)},')
    sections = list(_SECTIONS)
    for si, name in enumerate(sections):
        lines.append(f'  "{name}": {{')
        fields = dataclasses.fields(getattr(cfg, name))
        for fi, f in enumerate(fields):
            value = getattr(getattr(cfg, name), f.name)
            note = _PROTOCOL_NOTES.get((name, f.name))
            if note is not None and value == note[0]:
                lines.append(f"    // {note[1]}")
            comma = "," if fi + 1 < len(fields) else ""
            lines.append(f'    "{f.name}": {_format_value(value)}{comma}')
        comma = "," if si + 1 < len(sections) else ""
        lines.append(f"  }}{comma}")
    lines.append("}")
    return "\n".join(lines) + "\n"
