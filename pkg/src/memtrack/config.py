"""Configuration dataclasses and JSON round-trip.

The desk-scale defaults keep the object/search ratio and 6x6 template of the
full-scale setup while staying CPU-trainable; the full-scale layer table is
expressible through the same layer-spec format (see configs/full.json).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


@dataclass
class LayerSpec:
    kind: str            # "conv" or "maxpool"
    kernel: int
    stride: int = 1
    channels: int = 0    # conv only


@dataclass
class FeatNetConfig:
    object_size: int = 36
    search_size: int = 72
    template_side: int = 6          # n
    feature_channels: int = 16      # c
    context_factor: float = 0.5     # margin p = factor * (w + h) / 2
    layers: list[LayerSpec] = field(default_factory=lambda: [
        LayerSpec("conv", kernel=5, stride=2, channels=8),
        LayerSpec("conv", kernel=3, stride=2, channels=16),
        LayerSpec("conv", kernel=2, stride=1, channels=16),
    ])

    @property
    def total_stride(self) -> int:
        s = 1
        for layer in self.layers:
            s *= layer.stride
        return s

    def spatial_out(self, size: int) -> int:
        for layer in self.layers:
            size = (size - layer.kernel) // layer.stride + 1
        return size


@dataclass
class TrackerConfig:
    featnet: FeatNetConfig = field(default_factory=FeatNetConfig)
    hidden_size: int = 64           # LSTM state dimension
    memory_slots: int = 8           # N
    access_decay: float = 0.99      # lambda
    keep_prob: float = 0.8          # LSTM dropout retain probability
    scale_step: float = 1.05        # candidates scale_step ** (-1, 0, 1)
    scale_smooth: float = 0.6       # gamma
    window_factor: float = 0.15
    response_upsample: int = 8
    variant: str = "full"           # full | noatt | queue | hardread | nores

    @property
    def scale_factors(self) -> list[float]:
        return [1.0 / self.scale_step, 1.0, self.scale_step]


@dataclass
class TrainConfig:
    batch_clips: int = 8
    clip_len: int = 16
    learning_rate: float = 1e-4
    lr_decay: float = 0.8
    lr_decay_every: int = 10000
    grad_clip_norm: float = 5.0
    label_radius: float = 2.0
    stretch_jitter: float = 0.05    # +/- fraction of crop side
    translate_jitter: float = 4.0   # +/- pixels
    teacher_forcing: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


def _to_dict(obj) -> dict:
    return dataclasses.asdict(obj)


def _layers_from(raw: list) -> list[LayerSpec]:
    return [LayerSpec(**d) for d in raw]


def tracker_config_from_dict(d: dict) -> TrackerConfig:
    d = dict(d)
    feat_raw = d.pop("featnet", None)
    cfg = TrackerConfig(**d)
    if feat_raw is not None:
        feat_raw = dict(feat_raw)
        layers_raw = feat_raw.pop("layers", None)
        feat = FeatNetConfig(**feat_raw)
        if layers_raw is not None:
            feat.layers = _layers_from(layers_raw)
        cfg.featnet = feat
    return cfg


def train_config_from_dict(d: dict) -> TrainConfig:
    return TrainConfig(**d)


def load_config(path: str) -> tuple[TrackerConfig, TrainConfig]:
    """Read a JSON config file holding optional "tracker" and "train" sections."""
    with open(path) as f:
        raw = json.load(f)
    tracker = tracker_config_from_dict(raw.get("tracker", {}))
    train = train_config_from_dict(raw.get("train", {}))
    return tracker, train


def save_config(path: str, tracker: TrackerConfig, train: TrainConfig | None = None):
    payload = {"tracker": _to_dict(tracker)}
    if train is not None:
        payload["train"] = _to_dict(train)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def config_to_dict(tracker: TrackerConfig, train: TrainConfig | None = None) -> dict:
    payload = {"tracker": _to_dict(tracker)}
    if train is not None:
        payload["train"] = _to_dict(train)
    return payload
