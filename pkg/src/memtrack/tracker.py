"""Online tracking loop: crop, match, localize over a scale pyramid, write memory."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as E, featnet, memory
from .config import TrackerConfig
from .controller import ControllerState
from .engine import Tensor
from .featnet import BoundingBox, TrackingError, crop_patch, upsample_response
from .model import MemTrackNet


@dataclass
class TrackerState:
    ctrl: ControllerState
    mem: memory.MemoryState
    initial_template: Tensor
    box: BoundingBox
    init_size: tuple[float, float]     # box w/h at initialization
    scale: float = 1.0                 # smoothed cumulative scale
    frame_index: int = 1
    last_debug: dict = field(default_factory=dict)


def apply_window(resp: np.ndarray, factor: float = 0.15) -> np.ndarray:
    """Blend the min-max normalized response with a centered 2-D Hann window."""
    if not 0.0 <= factor <= 1.0:
        raise ValueError(f"window factor must be in [0, 1], got {factor}")
    rmin, rmax = resp.min(), resp.max()
    span = rmax - rmin
    norm = (resp - rmin) / span if span > 0 else np.zeros_like(resp)
    hann = np.outer(np.hanning(resp.shape[0]), np.hanning(resp.shape[1]))
    return (1.0 - factor) * norm + factor * hann


def locate(resp_up: np.ndarray, box: BoundingBox, smoothed_scale_ratio: float,
           stride: int, upsample: int, patch_to_frame: float = 1.0) -> BoundingBox:
    """Peak displacement to a new box; ties resolve to the lowest flat index."""
    idx = int(np.argmax(resp_up))
    r, c = divmod(idx, resp_up.shape[1])
    center_r = (resp_up.shape[0] - 1) / 2.0
    center_c = (resp_up.shape[1] - 1) / 2.0
    dy = (r - center_r) * stride / upsample * patch_to_frame
    dx = (c - center_c) * stride / upsample * patch_to_frame
    return BoundingBox(box.cx + dx, box.cy + dy,
                       box.w * smoothed_scale_ratio, box.h * smoothed_scale_ratio)


def _clip_box(box: BoundingBox, frame_shape: tuple) -> BoundingBox:
    fh, fw = frame_shape[:2]
    w = float(np.clip(box.w, 2.0, fw))
    h = float(np.clip(box.h, 2.0, fh))
    cx = float(np.clip(box.cx, 0.0, fw - 1.0))
    cy = float(np.clip(box.cy, 0.0, fh - 1.0))
    return BoundingBox(cx, cy, w, h)


class Tracker:
    """Feed-forward tracker; one TrackerState per sequence, model shared."""

    def __init__(self, net: MemTrackNet):
        self.net = net
        self.cfg: TrackerConfig = net.cfg

    def init(self, frame: np.ndarray, box: BoundingBox) -> TrackerState:
        box.validate()
        fc = self.cfg.featnet
        with E.no_grad():
            patch = crop_patch(frame, box, fc.context_factor, fc.object_size)
            template = self.net.features.extract_object(patch.pixels)
            ctrl, mem = self.net.init_states(template)
        return TrackerState(ctrl=ctrl, mem=mem, initial_template=template,
                            box=BoundingBox(box.cx, box.cy, box.w, box.h),
                            init_size=(box.w, box.h))

    def step(self, state: TrackerState, frame: np.ndarray) -> tuple[TrackerState, BoundingBox]:
        cfg = self.cfg
        fc = cfg.featnet
        search_to_object = fc.search_size / fc.object_size

        with E.no_grad():
            patches = [crop_patch(frame, state.box, fc.context_factor, fc.search_size,
                                  side_scale=search_to_object * f)
                       for f in cfg.scale_factors]
            mid = cfg.scale_factors.index(1.0)
            feats = [self.net.features.extract(p.pixels) for p in patches]

            result = self.net.match_step(feats[mid], state.initial_template,
                                         state.ctrl, state.mem, training=False)

            best = None
            for si, f in enumerate(cfg.scale_factors):
                resp = result.response if si == mid else featnet.cross_correlate(
                    result.final_template, feats[si])
                up = upsample_response(resp.data, cfg.response_upsample)
                windowed = apply_window(up, cfg.window_factor)
                peak = float(windowed.max())
                # prefer the unit scale on exact ties
                better = best is None or peak > best[0] + 1e-12 or (
                    abs(peak - best[0]) <= 1e-12 and f == 1.0)
                if better:
                    best = (peak, si, windowed)
            _, win_si, win_map = best
            win_factor = cfg.scale_factors[win_si]

            ratio = (1.0 - cfg.scale_smooth) + cfg.scale_smooth * win_factor
            new_box = locate(win_map, state.box, ratio, fc.total_stride,
                             cfg.response_upsample,
                             patch_to_frame=patches[win_si].crop_side / fc.search_size)
            new_box = _clip_box(new_box, frame.shape)

            obj_patch = crop_patch(frame, new_box, fc.context_factor, fc.object_size)
            new_template = self.net.features.extract_object(obj_patch.pixels)
            mem_next = self.net.write_step(result.mem, result.signals, new_template)

        sig = result.signals
        debug = {
            "final_template": result.final_template.data,
            "read_weights": result.mem.last_read.data.copy(),
            "write_weights": mem_next.last_write.data.copy() if mem_next.last_write is not None
                             else np.zeros(mem_next.n_slots, np.float32),
            "access": mem_next.access.data.copy(),
            "gates": sig.gates.data.copy(),
            "read_strength": float(sig.read_strength.data),
            "decay_rate": float(sig.decay_rate.data),
            "alpha": None if result.alpha is None else result.alpha.data.copy(),
            "alpha_grid": result.alpha_grid,
            "scale_index": win_si,
        }

        new_state = TrackerState(ctrl=result.ctrl, mem=mem_next,
                                 initial_template=state.initial_template,
                                 box=new_box, init_size=state.init_size,
                                 scale=state.scale * ratio,
                                 frame_index=state.frame_index + 1,
                                 last_debug=debug)
        return new_state, new_box


def track_sequence(net: MemTrackNet, frames, init_box: BoundingBox,
                   collect_debug: bool = False):
    """Run one-pass tracking; returns (boxes incl. the init frame, debug rows)."""
    if len(frames) == 0:
        raise TrackingError("empty sequence")
    tracker = Tracker(net)
    state = tracker.init(frames[0], init_box)
    boxes = [BoundingBox(init_box.cx, init_box.cy, init_box.w, init_box.h)]
    debug_rows = []
    for frame in frames[1:]:
        state, box = tracker.step(state, frame)
        boxes.append(box)
        if collect_debug:
            debug_rows.append(state.last_debug)
    return boxes, debug_rows
