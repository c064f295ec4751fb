"""Dense tensors with tape-based reverse-mode differentiation.

A :class:`Tape` is opened around a forward pass; every primitive op whose
inputs require gradients appends one entry (output, inputs, vector-Jacobian
product).  :meth:`Tape.backward` walks the entries once in reverse and returns
the gradients of the leaf tensors.  A tape is consumed by ``backward``.

Only one implicit broadcast exists: adding a vector along the last axis.
"""

from __future__ import annotations

import threading
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_state = threading.local()
# open tapes in any thread; zero lets untaped forward passes skip the lookup
_open_tapes = [0]


def _active_tape() -> Optional["Tape"]:
    return getattr(_state, "tape", None)


class Tensor:
    """An n-dimensional float array that can take part in a recorded graph."""

    __slots__ = ("data", "requires_grad", "name", "node_id", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.node_id: Optional[int] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, data={np.array2string(self.data, threshold=8)})"

    def __add__(self, other):
        return add(self, _lift(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, index):
        return take(self, index)


def _not_scalar(t):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(like.shape, x, dtype=like.dtype))


def tensor_new(shape: Sequence[int], fill=None, values=None, dtype=np.float64,
               requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    """Create a tensor of ``shape`` from a scalar ``fill`` or flat row-major ``values``."""
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ShapeError(f"shape must be non-empty with dims >= 1, got {shape}")
    if values is not None:
        flat = np.asarray(values, dtype=dtype).reshape(-1)
        if flat.size != int(np.prod(shape)):
            raise ShapeError(f"{flat.size} values cannot fill shape {shape}")
        arr = flat.reshape(shape).copy()
    else:
        arr = np.full(shape, 0.0 if fill is None else fill, dtype=dtype)
    return Tensor(arr, requires_grad=requires_grad, name=name)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, copy=True), requires_grad=True, name=name)


class Tape:
    """Records primitive ops for one forward pass.

    Use as a context manager; ops executed inside the block are recorded.
    """

    def __init__(self):
        self.entries: List[tuple] = []
        self.consumed = False
        self._previous = None

    def __enter__(self):
        self._previous = _active_tape()
        _state.tape = self
        _open_tapes[0] += 1
        return self

    def __exit__(self, *exc):
        _state.tape = self._previous
        _open_tapes[0] -= 1
        return False

    def __len__(self):
        return len(self.entries)

    def record(self, out: Tensor, inputs: tuple, vjp: Callable) -> None:
        if self.consumed:
            raise ContractError("tape already consumed by backward()")
        out.node_id = len(self.entries)
        self.entries.append((out, inputs, vjp))

    def backward(self, loss: Tensor) -> Dict[Tensor, np.ndarray]:
        """Return ``{leaf: dloss/dleaf}`` for every leaf reached from ``loss``.

        Leaves that requires_grad but received no gradient map to zeros only if
        they appear as an input somewhere on the tape.
        """
        if self.consumed:
            raise ContractError("backward() called twice on the same tape")
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")
        if loss.node_id is None or loss.node_id >= len(self.entries) \
                or self.entries[loss.node_id][0] is not loss:
            raise ContractError("loss is not reachable from this tape")
        self.consumed = True

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        for out, inputs, vjp in reversed(self.entries[: loss.node_id + 1]):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = vjp(g)
            for inp, gi in zip(inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.node_id is None:
                    leaves[id(inp)] = inp
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        self.entries = []
        result: Dict[Tensor, np.ndarray] = {}
        for key, leaf in leaves.items():
            result[leaf] = np.asarray(grads[key], dtype=leaf.dtype).reshape(leaf.shape)
        return result


def backward(loss: Tensor, tape: Optional[Tape] = None) -> Dict[Tensor, np.ndarray]:
    tape = tape or _active_tape()
    if tape is None:
        raise ContractError("no tape recorded this loss")
    return tape.backward(loss)


def _result(data: np.ndarray, inputs: tuple, vjp: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data, out.requires_grad, out.name, out.node_id = data, False, None, None
    tape = getattr(_state, "tape", None) if _open_tapes[0] else None
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, vjp)
    return out


def _check_same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _bias_ok(a: Tensor, b: Tensor) -> bool:
    return b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0] and a.ndim > 1


def _unbias(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


# --- elementwise -----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a bias vector along the last axis."""
    if a.shape != b.shape:
        if _bias_ok(a, b):
            return _result(a.data + b.data, (a, b), lambda g: (g, _unbias(g)))
        _check_same(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # tanh form never overflows
    s = np.tanh(x * 0.5)
    s += 1.0
    s *= 0.5
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),))


def log(a: Tensor, floor: float = 1e-30) -> Tensor:
    x = a.data
    safe = np.maximum(x, floor)
    live = x >= floor
    return _result(np.log(safe), (a,), lambda g: (np.where(live, g / safe, 0.0),))


def where(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Select ``a`` where ``mask`` is true, else ``b``.

    ``mask`` is a constant that broadcasts against the operands (typically
    ``[N, 1]`` against ``[N, d]``).  Unselected entries get exactly zero
    gradient, which is what keeps padding out of the backward pass.
    """
    _check_same(a, b, "where")
    m = np.asarray(mask, dtype=bool)
    out = np.where(m, a.data, b.data)
    zero = np.zeros((), dtype=out.dtype)

    def vjp(g):
        return np.where(m, g, zero), np.where(m, zero, g)

    return _result(out, (a, b), vjp)


def elementwise(op: str, *args: Tensor) -> Tensor:
    table = {"add": add, "sub": sub, "mul": mul, "sigmoid": sigmoid, "tanh": tanh}
    if op not in table:
        raise ValueError(f"unknown elementwise op {op!r}")
    return table[op](*args)


# --- structural --------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _result(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[x.shape for x in tensors]} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), vjp)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    for t in tensors[1:]:
        _check_same(tensors[0], t, "stack")
    n = len(tensors)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def take(a: Tensor, index) -> Tensor:
    """Numpy-style indexing; gradients scatter-add back (repeated rows accumulate)."""
    src_shape, dtype = a.shape, a.dtype
    out = a.data[index]
    basic = _is_basic(index)
    if not basic:
        out = np.array(out, copy=True)

    def vjp(g):
        grad = np.zeros(src_shape, dtype=dtype)
        if basic:
            grad[index] += g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return _result(out, (a,), vjp)


def _is_basic(index) -> bool:
    items = index if type(index) is tuple else (index,)
    for i in items:
        if not isinstance(i, _BASIC):
            return False
    return True


_BASIC = (int, slice, type(Ellipsis), type(None))


def sum_all(a: Tensor) -> Tensor:
    shape, dtype = a.shape, a.dtype
    return _result(np.sum(a.data).reshape(()), (a,),
                   lambda g: (np.full(shape, g, dtype=dtype),))


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    x = a.data
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result(s, (a,), vjp)


# --- gradient oracle ---------------------------------------------------------

def finite_difference_oracle(f: Callable[[Sequence[Tensor]], Tensor], params: Iterable[Tensor],
                             eps: float = 1e-6, coords: Optional[int] = None,
                             rng: Optional[np.random.Generator] = None) -> float:
    """Compare reverse-mode gradients of ``f(params)`` with central differences.

    Returns the max over checked coordinates of
    ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)``.  ``coords`` limits the
    number of coordinates checked per parameter (sampled with ``rng``);
    ``None`` checks all of them.
    """
    params = list(params)
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must lie in [1e-7, 1e-3], got {eps}")

    with Tape() as tape:
        loss = f(params)
    base = float(loss.data)
    if float(f(params).data) != base:
        raise ContractError("f is not deterministic (disable dropout / RNG)")
    grads = tape.backward(loss)

    worst = 0.0
    for p in params:
        g_ad = grads.get(p, np.zeros_like(p.data)).reshape(-1)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if coords is not None and flat.size > coords:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, coords, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f(params).data)
            flat[i] = orig - eps
            down = float(f(params).data)
            flat[i] = orig
            g_fd = (up - down) / (2 * eps)
            err = abs(g_ad[i] - g_fd) / max(1e-8, abs(g_ad[i]) + abs(g_fd))
            worst = max(worst, err)
    return worst
