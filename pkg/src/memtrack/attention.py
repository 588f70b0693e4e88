"""Soft attention over pooled search-feature patches.

Pooling turns the search feature map into a grid of per-patch descriptors
(one per template-sized window); attention scores them against the previous
controller hidden state and returns their convex combination as the
controller input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as E
from .engine import Tensor


@dataclass
class PatchGrid:
    vectors: Tensor               # (L, c)
    grid_h: int
    grid_w: int

    @property
    def count(self) -> int:
        return self.grid_h * self.grid_w


def init_params(hidden_size: int, channels: int, rng: np.random.Generator) -> dict[str, Tensor]:
    d = hidden_size

    def uniform(shape, fan_in):
        bound = np.sqrt(3.0 / fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True)

    return {
        "att.score.w": uniform((1, d), d),        # W^a
        "att.hidden.w": uniform((d, d), d),       # W^h
        "att.patch.w": uniform((d, channels), channels),  # W^f
        "att.b": Tensor(np.zeros(d, np.float32), requires_grad=True),
    }


def pool_patches(search_feat: Tensor, window: int) -> PatchGrid:
    """Stride-1 average pooling with a template-sized window, flattened row-major."""
    pooled = E.avg_pool(search_feat, window, stride=1)   # (h', w', c)
    gh, gw, c = pooled.shape
    return PatchGrid(vectors=E.reshape(pooled, (gh * gw, c)), grid_h=gh, grid_w=gw)


def attend(grid: PatchGrid, h_prev: Tensor, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Return (attended vector (c,), attention weights (L,))."""
    proj = E.matmul(params["att.patch.w"], E.transpose2d(grid.vectors))       # (d, L)
    hterm = E.add(E.matmul(params["att.hidden.w"], h_prev), params["att.b"])  # (d,)
    pre = E.add(proj, E.reshape(hterm, (hterm.shape[0], 1)))                  # broadcast over patches
    scores = E.reshape(E.matmul(params["att.score.w"], E.tanh(pre)), (grid.count,))
    alpha = E.softmax(scores)
    attended = E.matmul(alpha, grid.vectors)                                  # (c,)
    return attended, alpha


def attend_no_att(grid: PatchGrid) -> Tensor:
    """Ablation path: plain average of all patch vectors."""
    if grid.count < 1:
        raise E.ShapeError("empty patch grid")
    return E.mean_axes(grid.vectors, (0,))
