"""Dense tensors with tape-based reverse-mode differentiation.

Everything is float64 by default so that finite-difference checks are the
ground truth for every operation.  Ops are recorded on the currently active
:class:`Tape`; calling :meth:`Tape.backward` replays the records in reverse.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

DTYPE = np.float64


class TensorkitError(Exception):
    pass


class ShapeError(TensorkitError):
    pass


class NonFiniteError(TensorkitError):
    pass


class Tensor:
    """A dense n-dimensional value, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, have {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"grad shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _TapeEntry:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


_ACTIVE_TAPE: Optional["Tape"] = None


class Tape:
    """Ordered record of executed ops; topological by construction."""

    def __init__(self):
        self.entries: list[_TapeEntry] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TensorkitError("a Tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of a scalar loss into every recorded parent."""
        if loss.data.size != 1:
            raise ShapeError("backward requires a scalar loss")
        produced = {id(e.out) for e in self.entries}
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            g_out = grads.pop(id(entry.out), None)
            if g_out is None:
                continue
            parent_grads = entry.backward(g_out)
            for parent, g in zip(entry.parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if g.shape != parent.data.shape:
                    raise ShapeError(
                        f"backward produced grad {g.shape} for parent {parent.data.shape}"
                    )
                if id(parent) in produced:
                    if id(parent) in grads:
                        grads[id(parent)] += g
                    else:
                        grads[id(parent)] = np.asarray(g, dtype=DTYPE).copy()
                else:
                    # leaf: gradient lands on the tensor itself
                    parent.accumulate_grad(np.asarray(g, dtype=DTYPE))


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE


def _check_finite(data: np.ndarray) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("non-finite value produced by a forward op")


def record(
    out_data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap an op result, registering it on the active tape when tracked."""
    _check_finite(out_data)
    tracked = _ACTIVE_TAPE is not None and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=tracked)
    if tracked:
        _ACTIVE_TAPE.entries.append(_TapeEntry(out, tuple(parents), backward))
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops


def add(x: Tensor, y: Tensor) -> Tensor:
    out = x.data + y.data
    return record(out, (x, y), lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)))


def sub(x: Tensor, y: Tensor) -> Tensor:
    out = x.data - y.data
    return record(out, (x, y), lambda g: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)))


def mul(x: Tensor, y: Tensor) -> Tensor:
    out = x.data * y.data
    return record(
        out,
        (x, y),
        lambda g: (_unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)),
    )


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return record(x.data * c, (x,), lambda g: (g * c,))


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))
    return record(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    return record(out, (x,), lambda g: (g * (x.data > 0.0),))


LEAKY_RELU_SLOPE = 0.01


def leaky_relu(x: Tensor, slope: float = LEAKY_RELU_SLOPE) -> Tensor:
    out = np.where(x.data > 0.0, x.data, slope * x.data)
    # at exactly 0 the negative-side derivative applies
    return record(out, (x,), lambda g: (g * np.where(x.data > 0.0, 1.0, slope),))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "sigmoid": sigmoid,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "scale": scale,
}


def elementwise(kind: str, x: Tensor, y=None) -> Tensor:
    """Dispatch by op kind; binary kinds take a second tensor, scale a float."""
    if kind not in _ELEMENTWISE:
        raise TensorkitError(f"unknown elementwise kind {kind!r}")
    fn = _ELEMENTWISE[kind]
    if kind in ("add", "sub", "mul"):
        if y is None:
            raise TensorkitError(f"{kind} needs two operands")
        try:
            np.broadcast_shapes(x.shape, as_tensor(y).shape)
        except ValueError as e:
            raise ShapeError(str(e)) from None
        return fn(x, as_tensor(y))
    if kind == "scale":
        return scale(x, y)
    return fn(x)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-D tensors")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dims disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data
    return record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(x: Tensor) -> Tensor:
    return record(x.data.T.copy(), (x,), lambda g: (g.T.copy(),))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------------------
# reductions / normalization


def reduce_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    out = x.data.sum(axis=axis)
    def backward(g):
        if axis is None:
            return (np.full_like(x.data, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)
    return record(out, (x,), backward)


def reduce_mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    if n == 0:
        raise ShapeError("mean over an empty axis")
    out = x.data.mean(axis=axis)
    def backward(g):
        if axis is None:
            return (np.full_like(x.data, float(g) / n),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape) / n,)
    return record(out, (x,), backward)


def reduce_max(x: Tensor, axis: int) -> Tensor:
    """Max along an axis; gradient routed to the first argmax on ties."""
    if x.shape[axis] == 0:
        raise ShapeError("max over an empty axis")
    out = x.data.max(axis=axis)
    arg = x.data.argmax(axis=axis)
    def backward(g):
        gx = np.zeros_like(x.data)
        idx = list(np.indices(out.shape))
        idx.insert(axis if axis >= 0 else x.ndim + axis, arg)
        gx[tuple(idx)] = g
        return (gx,)
    return record(out, (x,), backward)


def pool(x: Tensor, kind: str, axis: int = 0) -> Tensor:
    """Mean or columnwise max over one axis of an n x d matrix."""
    if kind == "mean":
        return reduce_mean(x, axis=axis)
    if kind == "max":
        return reduce_max(x, axis=axis)
    raise TensorkitError(f"unknown pool kind {kind!r}")


def softmax(x: Tensor, axis: int = -1, mask=None, _allow_empty: bool = False) -> Tensor:
    """Numerically stabilized softmax; masked-out positions are exactly 0.

    ``mask`` is a boolean array aligned with ``x``; every normalized slice
    must keep at least one live entry unless ``_allow_empty`` (internal use,
    empty slices then come out all-zero).
    """
    data = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != data.shape:
            raise ShapeError("mask shape must match input shape")
        live = mask.any(axis=axis)
        if not _allow_empty and not live.all():
            raise ShapeError("softmax slice is fully masked")
        shifted = np.where(mask, data, -np.inf)
        m = np.max(np.where(mask, data, -np.inf), axis=axis, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        e = np.where(mask, np.exp(shifted - m), 0.0)
    else:
        m = data.max(axis=axis, keepdims=True)
        e = np.exp(data - m)
    denom = e.sum(axis=axis, keepdims=True)
    denom = np.where(denom == 0.0, 1.0, denom)
    out = e / denom
    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)
    return record(out, (x,), backward)


# ---------------------------------------------------------------------------
# indexing / shaping


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]
    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))
    return record(out, tuple(tensors), backward)


def rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice [start, stop)."""
    if not (0 <= start < stop <= x.shape[0]):
        raise ShapeError(f"row slice [{start}, {stop}) out of range for {x.shape}")
    out = x.data[start:stop].copy()
    def backward(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        return (gx,)
    return record(out, (x,), backward)


def gather_rows(x: Tensor, indices) -> Tensor:
    """Row lookup (embedding); backward scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.intp)
    out = x.data[idx]
    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)
    return record(out, (x,), backward)


def flip_rows(x: Tensor) -> Tensor:
    return record(x.data[::-1].copy(), (x,), lambda g: (g[::-1].copy(),))


# ---------------------------------------------------------------------------
# stochastic ops


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with prob ``rate``, scale survivors by 1/(1-rate)."""
    if not (0.0 <= rate < 1.0):
        raise TensorkitError(f"dropout rate {rate} out of [0, 1)")
    if not training or rate == 0.0:
        return record(x.data.copy(), (x,), lambda g: (g,))
    keep = rng.random(x.shape) >= rate
    factor = keep / (1.0 - rate)
    return record(x.data * factor, (x,), lambda g: (g * factor,))
