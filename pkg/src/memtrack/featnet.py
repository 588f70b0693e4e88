"""Fully-convolutional feature extraction, cropping, and response maps."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from . import engine as E
from .config import FeatNetConfig
from .engine import Tensor


class TrackingError(RuntimeError):
    """Degenerate tracking input (e.g. a box with non-positive side)."""


@dataclass
class BoundingBox:
    """Axis-aligned box, center convention. File formats use corner x,y,w,h."""
    cx: float
    cy: float
    w: float
    h: float

    @classmethod
    def from_corner(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    def to_corner(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    def validate(self):
        if self.w <= 0 or self.h <= 0:
            raise TrackingError(f"degenerate box {self.w}x{self.h}")


@dataclass
class ImagePatch:
    pixels: np.ndarray            # (out, out, 3) float32 in [0, 1]
    center: tuple[float, float]   # crop center in frame coords
    crop_side: float              # square side in frame pixels before resize

    @property
    def scale(self) -> float:
        """Patch pixels per frame pixel."""
        return self.pixels.shape[0] / self.crop_side

    def frame_to_patch(self, x: float, y: float) -> tuple[float, float]:
        out = self.pixels.shape[0]
        s = out / self.crop_side
        return ((x - self.center[0]) * s + (out - 1) / 2.0,
                (y - self.center[1]) * s + (out - 1) / 2.0)


def context_side(box: BoundingBox, context_factor: float) -> float:
    """Square crop side around the target including context margin."""
    p = context_factor * (box.w + box.h) / 2.0
    return float(np.sqrt((box.w + 2 * p) * (box.h + 2 * p)))


def crop_patch(frame: np.ndarray, box: BoundingBox, context_factor: float,
               out_size: int, side_scale: float = 1.0) -> ImagePatch:
    """Crop a square, mean-padded patch around the box and resize bilinearly.

    side_scale rescales the crop side (search-region expansion, scale
    candidates, augmentation stretch).
    """
    box.validate()
    side = context_side(box, context_factor) * side_scale
    if side < 1.0:
        raise TrackingError(f"crop side collapsed to {side}")
    fh, fw = frame.shape[:2]
    mean_color = frame.reshape(-1, frame.shape[2]).mean(axis=0)

    half = side / 2.0
    x0 = int(np.floor(box.cx - half))
    y0 = int(np.floor(box.cy - half))
    n = int(np.ceil(side))
    patch = np.empty((n, n, frame.shape[2]), dtype=np.float32)
    patch[:] = mean_color
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + n, fw), min(y0 + n, fh)
    if sx1 > sx0 and sy1 > sy0:
        patch[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = frame[sy0:sy1, sx0:sx1]
    resized = cv2.resize(patch, (out_size, out_size), interpolation=cv2.INTER_LINEAR)
    return ImagePatch(pixels=resized, center=(x0 + n / 2.0, y0 + n / 2.0), crop_side=float(n))


class FeatNet:
    """Conv stack shared by object and search branches (same parameters)."""

    def __init__(self, cfg: FeatNetConfig, params: dict[str, Tensor]):
        self.cfg = cfg
        self.params = params

    @staticmethod
    def init_params(cfg: FeatNetConfig, rng: np.random.Generator) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        cin = 3
        for i, layer in enumerate(cfg.layers):
            if layer.kind != "conv":
                continue
            fan_in = layer.kernel * layer.kernel * cin
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(layer.kernel, layer.kernel, cin, layer.channels))
            params[f"feat.conv{i}.w"] = Tensor(w.astype(np.float32), requires_grad=True)
            params[f"feat.conv{i}.b"] = Tensor(np.zeros(layer.channels, np.float32), requires_grad=True)
            cin = layer.channels
        return params

    def extract(self, patch: np.ndarray | Tensor) -> Tensor:
        """Forward pass over an (h, w, 3) patch in [0, 1]."""
        x = patch if isinstance(patch, Tensor) else Tensor(patch)
        n_conv = sum(1 for l in self.cfg.layers if l.kind == "conv")
        seen = 0
        for i, layer in enumerate(self.cfg.layers):
            if layer.kind == "maxpool":
                x = E.max_pool(x, layer.kernel, layer.stride)
                continue
            x = E.conv2d(x, self.params[f"feat.conv{i}.w"], layer.stride)
            x = E.add(x, self.params[f"feat.conv{i}.b"])
            seen += 1
            if seen < n_conv:   # last conv stays linear
                x = E.relu(x)
        return x

    def extract_object(self, patch: np.ndarray | Tensor) -> Tensor:
        f = self.extract(patch)
        n, c = self.cfg.template_side, self.cfg.feature_channels
        if f.shape != (n, n, c):
            raise E.ShapeError(f"object features {f.shape} != expected template {(n, n, c)}")
        return f


def cross_correlate(template: Tensor, search_feat: Tensor) -> Tensor:
    """Response map: template slid over the search features."""
    return E.cross_correlate(search_feat, template)


def upsample_response(resp: np.ndarray, factor: int) -> np.ndarray:
    """Cubic-spline upsampling onto a (size-1)*factor+1 grid, exact at grid points."""
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"upsample factor must be a positive integer, got {factor}")
    if factor == 1:
        return np.asarray(resp, dtype=np.float64)
    h, w = resp.shape
    rows = np.arange((h - 1) * factor + 1) / factor
    cols = np.arange((w - 1) * factor + 1) / factor
    grid = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(np.asarray(resp, dtype=np.float64),
                                   np.stack([g.ravel() for g in grid]),
                                   order=3, mode="nearest").reshape(len(rows), len(cols))
