"""Parameter bundle and the per-frame matching step shared by tracking and training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attention, controller, engine as E, featnet, memory
from .config import TrackerConfig
from .engine import Tensor

VARIANTS = ("full", "noatt", "queue", "hardread", "nores")


@dataclass
class FrameResult:
    response: Tensor              # raw correlation map
    final_template: Tensor
    ctrl: controller.ControllerState
    mem: memory.MemoryState
    signals: controller.ControlSignals | None
    alpha: Tensor | None          # attention weights over the patch grid
    alpha_grid: tuple[int, int] | None


class MemTrackNet:
    """All trainable parameters plus the frame-level forward logic."""

    def __init__(self, cfg: TrackerConfig, params: dict[str, Tensor] | None = None,
                 seed: int = 0):
        if cfg.variant not in VARIANTS:
            raise ValueError(f"unknown variant {cfg.variant!r}; expected one of {VARIANTS}")
        self.cfg = cfg
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            params.update(featnet.FeatNet.init_params(cfg.featnet, rng))
            params.update(attention.init_params(cfg.hidden_size, cfg.featnet.feature_channels, rng))
            params.update(controller.init_params(cfg.hidden_size, cfg.featnet.feature_channels, rng))
        self.params = params
        self.features = featnet.FeatNet(cfg.featnet, params)

    def named_parameters(self) -> dict[str, Tensor]:
        return self.params

    def init_states(self, initial_template: Tensor) -> tuple[controller.ControllerState, memory.MemoryState]:
        ctrl = controller.init_state(initial_template, self.params)
        mem = memory.init_memory(self.cfg.memory_slots, self.cfg.featnet.template_side,
                                 self.cfg.featnet.feature_channels)
        return ctrl, mem

    def match_step(self, search_feat: Tensor, initial_template: Tensor,
                   ctrl: controller.ControllerState, mem: memory.MemoryState,
                   training: bool = False, rng: np.random.Generator | None = None
                   ) -> FrameResult:
        """Attend, advance the controller, read memory, and correlate.

        Memory writing is separate (``write_step``) because the written
        template comes from a crop that depends on this step's output box.
        """
        cfg = self.cfg
        variant = cfg.variant
        grid = attention.pool_patches(search_feat, cfg.featnet.template_side)

        alpha = None
        if variant == "noatt":
            attended = attention.attend_no_att(grid)
        else:
            attended, alpha = attention.attend(grid, ctrl.h, self.params)

        ctrl_new = controller.step(attended, ctrl, self.params, training=training,
                                   keep_prob=cfg.keep_prob, rng=rng)
        signals = controller.emit_signals(ctrl_new.h, self.params)

        if variant == "queue":
            retrieved = memory.queue_read(mem)
            w_read = Tensor(np.zeros(mem.n_slots, np.float32))
        elif variant == "hardread":
            keys = memory.slot_keys(mem)
            retrieved, _ = memory.hard_read(mem, keys, signals.read_key)
            w_read = memory.read_weights(keys, signals.read_key, signals.read_strength)
        else:
            keys = memory.slot_keys(mem)
            w_read = memory.read_weights(keys, signals.read_key, signals.read_strength)
            retrieved = memory.read(mem, w_read)

        gate = None if variant == "nores" else signals.residual_gate
        final = memory.combine(initial_template, retrieved, gate)
        response = featnet.cross_correlate(final, search_feat)

        mem_after_read = memory.MemoryState(slots=mem.slots, access=mem.access,
                                            last_read=w_read, last_write=mem.last_write,
                                            cursor=mem.cursor, occupied=mem.occupied)
        return FrameResult(response=response, final_template=final, ctrl=ctrl_new,
                           mem=mem_after_read, signals=signals, alpha=alpha,
                           alpha_grid=(grid.grid_h, grid.grid_w))

    def write_step(self, mem: memory.MemoryState, signals: controller.ControlSignals,
                   new_template: Tensor) -> memory.MemoryState:
        """Store the new template according to the current control signals."""
        if self.cfg.variant == "queue":
            return memory.queue_write(mem, new_template)
        w_read = mem.last_read if mem.last_read is not None else Tensor(
            np.zeros(mem.n_slots, np.float32))
        w_alloc = memory.allocation_weight(mem.access)
        w_write = memory.write_weight(signals.gates, w_read, w_alloc)
        return memory.write(mem, w_write, signals.gates, signals.decay_rate,
                            new_template, w_read=w_read, access_decay=self.cfg.access_decay)
