"""Recurrent building blocks shared by the hierarchical model and the baseline.

All sequence functions are batched: a sequence input has shape
``[N, T, input_dim]`` with a ``[N, T]`` step mask (1 = real, 0 = padding).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

GATES = ("i", "f", "o", "c")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None,
                   dtype=np.float64) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape or (fan_in, fan_out)).astype(dtype)


@dataclass
class LstmParams:
    """Gate weights of one LSTM direction.

    ``W[g]`` is ``[input_dim, hidden_dim]``, ``U[g]`` is
    ``[hidden_dim, hidden_dim]`` and ``b[g]`` is ``[hidden_dim]`` for each gate
    ``g`` in ``i, f, o, c``.
    """

    W: Dict[str, Tensor]
    U: Dict[str, Tensor]
    b: Dict[str, Tensor]

    @property
    def input_dim(self) -> int:
        return self.W["i"].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.U["i"].shape[0]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator,
             dtype=np.float64, prefix: str = "lstm", forget_bias: float = 1.0) -> "LstmParams":
        W, U, b = {}, {}, {}
        for g in GATES:
            W[g] = T.parameter(glorot_uniform(rng, input_dim, hidden_dim, dtype=dtype), f"{prefix}.W_{g}")
            U[g] = T.parameter(glorot_uniform(rng, hidden_dim, hidden_dim, dtype=dtype), f"{prefix}.U_{g}")
            bias = np.full(hidden_dim, forget_bias if g == "f" else 0.0, dtype=dtype)
            b[g] = T.parameter(bias, f"{prefix}.b_{g}")
        return cls(W, U, b)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, dtype=np.float64, prefix: str = "lstm") -> "LstmParams":
        z = lambda *s: np.zeros(s, dtype=dtype)  # noqa: E731
        return cls({g: T.parameter(z(input_dim, hidden_dim), f"{prefix}.W_{g}") for g in GATES},
                   {g: T.parameter(z(hidden_dim, hidden_dim), f"{prefix}.U_{g}") for g in GATES},
                   {g: T.parameter(z(hidden_dim), f"{prefix}.b_{g}") for g in GATES})

    def tensors(self) -> Dict[str, Tensor]:
        out = {}
        for g in GATES:
            out[f"W_{g}"] = self.W[g]
            out[f"U_{g}"] = self.U[g]
            out[f"b_{g}"] = self.b[g]
        return out

    def fused(self) -> Tuple[Tensor, Tensor, Tensor]:
        """Gate matrices joined along the output axis in (i, f, o, c) order."""
        return (T.concat([self.W[g] for g in GATES], axis=1),
                T.concat([self.U[g] for g in GATES], axis=1),
                T.concat([self.b[g] for g in GATES], axis=0))


@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden_dim: int, dtype=np.float64) -> "LstmState":
        return cls(Tensor(np.zeros((batch, hidden_dim), dtype=dtype)),
                   Tensor(np.zeros((batch, hidden_dim), dtype=dtype)))


def embedding_lookup(ids, table: Tensor) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise IndexError(f"token id out of range for vocabulary of size {vocab}")
    return T.take(table, ids)


def _cell(pre: Tensor, state: LstmState, hidden: int) -> LstmState:
    gates = T.sigmoid(pre[:, :3 * hidden])
    i, f, o = gates[:, :hidden], gates[:, hidden:2 * hidden], gates[:, 2 * hidden:]
    g = T.tanh(pre[:, 3 * hidden:])
    c = T.add(T.mul(f, state.c), T.mul(i, g))
    h = T.mul(o, T.tanh(c))
    return LstmState(h, c)


def lstm_step(x_t: Tensor, state: LstmState, p: LstmParams) -> LstmState:
    """One LSTM step on a batch ``x_t: [N, input_dim]`` (a 1-D vector is treated as N=1).

    i = s(x W_i + h U_i + b_i), f, o likewise, g = tanh(x W_c + h U_c + b_c),
    c' = f*c + i*g, h' = o*tanh(c').
    """
    squeeze = x_t.ndim == 1
    if squeeze:
        x_t = T.reshape(x_t, (1, -1))
        state = LstmState(T.reshape(state.h, (1, -1)), T.reshape(state.c, (1, -1)))
    if x_t.shape[1] != p.input_dim or state.h.shape[1] != p.hidden_dim:
        raise ShapeError(f"lstm_step: input {x_t.shape} / state {state.h.shape} do not fit "
                         f"params ({p.input_dim}->{p.hidden_dim})")
    W, U, b = p.fused()
    pre = T.add(T.add(T.matmul(x_t, W), T.matmul(state.h, U)), b)
    out = _cell(pre, state, p.hidden_dim)
    if squeeze:
        out = LstmState(T.reshape(out.h, (-1,)), T.reshape(out.c, (-1,)))
    return out


def lstm_sequence(xs: Tensor, mask, p: LstmParams, reverse: bool = False,
                  ) -> Tuple[Tensor, LstmState]:
    """Run one direction over ``xs: [N, T, in]``.

    Padding steps copy the state through unchanged and emit a zero output, so
    the returned final state is the state after the last real step (or the
    first real step when ``reverse``).
    """
    n, steps, dim = xs.shape
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n, steps):
        raise ShapeError(f"mask shape {mask.shape} does not match sequence {(n, steps)}")
    if dim != p.input_dim:
        raise ShapeError(f"sequence input dim {dim} != LSTM input dim {p.input_dim}")
    hidden = p.hidden_dim
    W, U, b = p.fused()
    # input projections for all steps in one product
    xw = T.reshape(T.matmul(T.reshape(xs, (n * steps, dim)), W), (n, steps, 4 * hidden))
    state = LstmState.zeros(n, hidden, xs.dtype)
    zero = state.h
    outputs = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        m = mask[:, t:t + 1]
        if not m.any():
            outputs[t] = zero
            continue
        pre = T.add(T.add(xw[:, t, :], T.matmul(state.h, U)), b)
        new = _cell(pre, state, hidden)
        if m.all():
            state = new
            outputs[t] = new.h
        else:
            state = LstmState(T.where(m, new.h, state.h), T.where(m, new.c, state.c))
            outputs[t] = T.where(m, new.h, zero)
    return T.stack(outputs, axis=1), state


def bilstm(xs: Tensor, mask, p_fw: LstmParams, p_bw: LstmParams):
    """Forward and backward passes; per-step outputs are ``[h_fw ; h_bw]``."""
    hs_fw, fin_fw = lstm_sequence(xs, mask, p_fw, reverse=False)
    hs_bw, fin_bw = lstm_sequence(xs, mask, p_bw, reverse=True)
    return T.concat([hs_fw, hs_bw], axis=-1), (fin_fw, fin_bw)


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; the identity at inference or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return T.mul(x, Tensor(keep))


def affine_softmax(h: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Class distribution ``softmax(h W + b)``; ``h`` is ``[d]`` or ``[N, d]``."""
    if h.ndim == 1:
        return T.reshape(affine_softmax(T.reshape(h, (1, -1)), W, b), (-1,))
    if h.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(f"affine_softmax: {h.shape} x {W.shape} + {b.shape}")
    return T.softmax(T.add(T.matmul(h, W), b))


@dataclass
class LossResult:
    loss: Tensor
    n_real: int

    @property
    def empty(self) -> bool:
        return self.n_real == 0


def masked_cross_entropy(probs: Tensor, labels, instance_mask) -> LossResult:
    """Mean negative log-likelihood over the real instances only.

    ``probs`` is ``[..., C]``; ``labels`` and ``instance_mask`` match its
    leading shape.  Masked instances are dropped before summation, so their
    probabilities cannot influence the result in any bit.
    """
    n_classes = probs.shape[-1]
    flat = T.reshape(probs, (-1, n_classes))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    keep = np.flatnonzero(np.asarray(instance_mask, dtype=bool).reshape(-1))
    real_labels = labels[keep]
    if real_labels.size and (real_labels.min() < 0 or real_labels.max() >= n_classes):
        raise IndexError(f"label outside [0, {n_classes})")
    if keep.size == 0:
        return LossResult(Tensor(np.zeros((), dtype=probs.dtype)), 0)
    picked = T.take(flat, (keep, real_labels))
    total = T.sum_all(T.log(picked))
    return LossResult(T.scale(total, -1.0 / keep.size), int(keep.size))
