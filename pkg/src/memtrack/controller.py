"""LSTM memory controller.

A standard LSTM cell with per-gate layer normalization and inverted dropout
on the hidden output.  The output layer is a set of small affine heads that
produce the memory control signals: read key, read strength, channel-wise
residual gate, write/read/allocation gates, and decay rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as E
from .engine import Tensor

GATE_NAMES = ("i", "f", "o", "g")


@dataclass
class ControllerState:
    h: Tensor
    c: Tensor


@dataclass
class ControlSignals:
    read_key: Tensor        # k_t, (c,)
    read_strength: Tensor   # beta_t, scalar >= 1
    residual_gate: Tensor   # r_t, (c,) in (0, 1)
    gates: Tensor           # [g_write, g_read, g_alloc], 3-simplex
    decay_rate: Tensor      # d_r, scalar in (0, 1)


def _orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q[:rows, :cols].astype(np.float32)


def init_params(hidden_size: int, channels: int, rng: np.random.Generator) -> dict[str, Tensor]:
    d, c = hidden_size, channels
    params: dict[str, Tensor] = {}

    # initial-state heads fed by the pooled initial template
    for name in ("h0", "c0"):
        params[f"ctrl.init_{name}.w"] = Tensor(_orthogonal(rng, d, c), requires_grad=True)
        params[f"ctrl.init_{name}.b"] = Tensor(np.zeros(d, np.float32), requires_grad=True)

    # one stacked input/hidden map per gate, plus per-gate layer norm
    for gate in GATE_NAMES:
        params[f"ctrl.{gate}.wx"] = Tensor(_orthogonal(rng, d, c), requires_grad=True)
        params[f"ctrl.{gate}.wh"] = Tensor(_orthogonal(rng, d, d), requires_grad=True)
        params[f"ctrl.{gate}.ln_gain"] = Tensor(np.ones(d, np.float32), requires_grad=True)
        init_bias = 1.0 if gate == "f" else 0.0
        params[f"ctrl.{gate}.ln_bias"] = Tensor(np.full(d, init_bias, np.float32), requires_grad=True)

    def head(name, rows):
        bound = np.sqrt(3.0 / d)
        params[f"ctrl.head_{name}.w"] = Tensor(
            rng.uniform(-bound, bound, size=(rows, d)).astype(np.float32), requires_grad=True)
        params[f"ctrl.head_{name}.b"] = Tensor(np.zeros(rows, np.float32), requires_grad=True)

    head("key", c)
    head("strength", 1)
    head("residual", c)
    head("gates", 3)
    head("decay", 1)
    return params


def init_state(initial_template: Tensor, params: dict[str, Tensor]) -> ControllerState:
    """Initial h/c from the globally pooled initial template through tanh heads."""
    v = E.mean_axes(initial_template, (0, 1))   # (c,)
    h0 = E.tanh(E.add(E.matmul(params["ctrl.init_h0.w"], v), params["ctrl.init_h0.b"]))
    c0 = E.tanh(E.add(E.matmul(params["ctrl.init_c0.w"], v), params["ctrl.init_c0.b"]))
    return ControllerState(h=h0, c=c0)


def step(a_t: Tensor, state: ControllerState, params: dict[str, Tensor],
         training: bool = False, keep_prob: float = 0.8,
         rng: np.random.Generator | None = None) -> ControllerState:
    """One LSTM step with layer-normalized gate pre-activations."""
    pre = {}
    for gate in GATE_NAMES:
        z = E.add(E.matmul(params[f"ctrl.{gate}.wx"], a_t),
                  E.matmul(params[f"ctrl.{gate}.wh"], state.h))
        pre[gate] = E.layer_norm(z, params[f"ctrl.{gate}.ln_gain"], params[f"ctrl.{gate}.ln_bias"])
    i = E.sigmoid(pre["i"])
    f = E.sigmoid(pre["f"])
    o = E.sigmoid(pre["o"])
    g = E.tanh(pre["g"])
    c_new = E.add(E.mul(f, state.c), E.mul(i, g))
    h_new = E.mul(o, E.tanh(c_new))
    if training:
        if rng is None:
            raise ValueError("training step requires an rng for dropout")
        h_new = E.dropout(h_new, keep_prob, training=True, rng=rng)
    return ControllerState(h=h_new, c=c_new)


def emit_signals(h_t: Tensor, params: dict[str, Tensor]) -> ControlSignals:
    def affine(name):
        return E.add(E.matmul(params[f"ctrl.head_{name}.w"], h_t), params[f"ctrl.head_{name}.b"])

    key = affine("key")
    strength = E.add_const(E.softplus(E.reshape(affine("strength"), ())), 1.0)
    residual = E.sigmoid(affine("residual"))
    gates = E.softmax(affine("gates"))
    decay = E.sigmoid(E.reshape(affine("decay"), ()))
    return ControlSignals(read_key=key, read_strength=strength,
                          residual_gate=residual, gates=gates, decay_rate=decay)
