"""External template memory: keyed reads, gated residual combine, gated writes.

Slot contents are treated as constants once stored (no gradient flows through
a written template back to the extractor), while read weights, gates, decay
and the access vector stay on the differentiable path within a training clip.
Allocation uses an argmin and is likewise held out of the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .engine import Tensor


@dataclass
class MemoryState:
    slots: Tensor                 # (N, n, n, c); constant w.r.t. the graph
    access: Tensor                # w_u, (N,) nonnegative
    last_read: Tensor | None = None
    last_write: Tensor | None = None
    cursor: int = 0               # queue-variant write position
    occupied: int = 0             # queue-variant slot count

    @property
    def n_slots(self) -> int:
        return self.slots.shape[0]


def init_memory(n_slots: int, template_side: int, channels: int) -> MemoryState:
    """All slots zero: the first read is uniform and retrieves a zero template."""
    shape = (n_slots, template_side, template_side, channels)
    return MemoryState(slots=Tensor(np.zeros(shape, np.float32)),
                       access=Tensor(np.zeros(n_slots, np.float32)))


def slot_keys(mem: MemoryState) -> Tensor:
    """Per-slot key: global average pool of the stored template, (N, c)."""
    return E.mean_axes(mem.slots, (1, 2))


def read_weights(keys: Tensor, read_key: Tensor, read_strength: Tensor) -> Tensor:
    """Softmax over strength-scaled cosine similarities, (N,) on the simplex."""
    sims = E.row_cosine(keys, read_key)
    return E.softmax(E.mul(sims, E.reshape(read_strength, ())))


def read(mem: MemoryState, w_read: Tensor) -> Tensor:
    """Weighted sum of slots, (n, n, c)."""
    n, side, _, c = mem.slots.shape
    flat = E.reshape(mem.slots, (n, side * side * c))
    mixed = E.matmul(w_read, flat)
    return E.reshape(mixed, (side, side, c))


def hard_read(mem: MemoryState, keys: Tensor, read_key: Tensor) -> tuple[Tensor, int]:
    """Single slot with maximum cosine similarity; ties go to the lowest index."""
    sims = E.row_cosine(keys, read_key)
    idx = int(np.argmax(sims.data))
    slot = Tensor(mem.slots.data[idx])
    return slot, idx


def queue_read(mem: MemoryState) -> Tensor:
    """Queue-variant retrieval: plain mean of the occupied slots."""
    side = mem.slots.shape[1]
    c = mem.slots.shape[3]
    if mem.occupied == 0:
        return Tensor(np.zeros((side, side, c), np.float32))
    return Tensor(mem.slots.data[:mem.occupied].mean(axis=0))


def combine(initial: Tensor, retrieved: Tensor, residual_gate: Tensor | None) -> Tensor:
    """Final template: initial plus channel-gated retrieved residual.

    residual_gate=None is the ungated ablation (retrieved added untouched).
    """
    if initial.shape != retrieved.shape:
        raise E.ShapeError(f"template shapes differ: {initial.shape} vs {retrieved.shape}")
    if residual_gate is None:
        return E.add(initial, retrieved)
    return E.add(initial, E.mul(retrieved, residual_gate))


def allocation_weight(access: Tensor) -> Tensor:
    """One-hot at the least-accessed slot; constant w.r.t. the graph."""
    idx = int(np.argmin(access.data))
    w = np.zeros(access.shape[0], np.float32)
    w[idx] = 1.0
    return Tensor(w)


def write_weight(gates: Tensor, w_read: Tensor, w_alloc: Tensor) -> Tensor:
    """Gate-interpolated write weight: g_read * w_read + g_alloc * w_alloc."""
    g_read = E.reshape(E.slice1d(gates, 1, 2), ())
    g_alloc = E.reshape(E.slice1d(gates, 2, 3), ())
    return E.add(E.mul(w_read, g_read), E.mul(w_alloc, g_alloc))


def update_access(access_prev: Tensor, w_read: Tensor, w_write: Tensor,
                  decay: float = 0.99) -> Tensor:
    return E.add(E.scale(access_prev, decay), E.add(w_read, w_write))


def write(mem: MemoryState, w_write: Tensor, gates: Tensor, decay_rate: Tensor,
          new_template: Tensor, w_read: Tensor | None = None,
          access_decay: float = 0.99) -> MemoryState:
    """Erase-and-add write; returns the next memory state.

    Erase factor e_w = d_r * g_read + g_alloc; each slot j becomes
    slots[j] * (1 - w_write[j] * e_w) + w_write[j] * e_w * new_template.
    Template contents entering the write (previous slots and the new
    template) are detached, so the next frame's read back-propagates into
    this write's gates/weights but no further into stored values.
    """
    g_read = E.reshape(E.slice1d(gates, 1, 2), ())
    g_alloc = E.reshape(E.slice1d(gates, 2, 3), ())
    erase = E.add(E.mul(decay_rate, g_read), g_alloc)          # scalar
    factor = E.mul(w_write, erase)                             # (N,)

    n, side, _, c = mem.slots.shape
    dim = side * side * c
    flat = E.reshape(mem.slots.detach(), (n, dim))
    fcol = E.reshape(factor, (n, 1))
    keep = E.mul(flat, E.add_const(E.scale(fcol, -1.0), 1.0))  # slots * (1 - f)
    put = E.matmul(fcol, E.reshape(new_template.detach(), (1, dim)))
    new_slots = E.reshape(E.add(keep, put), mem.slots.shape)

    w_r = w_read if w_read is not None else (mem.last_read if mem.last_read is not None
                                             else Tensor(np.zeros(n, np.float32)))
    access = update_access(mem.access, w_r, w_write, access_decay)
    return MemoryState(slots=new_slots, access=access,
                       last_read=w_r, last_write=w_write,
                       cursor=mem.cursor, occupied=mem.occupied)


def queue_write(mem: MemoryState, new_template: Tensor) -> MemoryState:
    """FIFO ablation: store at the cursor, advance mod N, overwrite the oldest."""
    slots = mem.slots.data.copy()
    slots[mem.cursor] = new_template.data
    n = mem.n_slots
    return MemoryState(slots=Tensor(slots), access=mem.access,
                       last_read=mem.last_read, last_write=mem.last_write,
                       cursor=(mem.cursor + 1) % n,
                       occupied=min(mem.occupied + 1, n))
