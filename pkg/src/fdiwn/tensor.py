"""Dense NCHW tensors with tape-based reverse-mode differentiation.

Every value in the engine is a 4-D ``(n, c, h, w)`` array of reals.  Scalars
are ``(1, 1, 1, 1)``, per-channel vectors are ``(1, c, 1, 1)``.  Storage is
float32 by default; :func:`precision` switches new tensors to float64 for
high-accuracy gradient checking.

Operations compute eagerly.  When a :class:`Tape` is active (used as a
context manager), every differentiable operation whose inputs require
gradients appends a record; :func:`backward` replays the records in reverse
and accumulates gradients additively, so a tensor used by several downstream
operations receives the sum of all contributions.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "precision",
    "default_dtype",
    "tensor",
    "scalar",
    "zeros",
    "ones",
    "zeros_like",
    "ones_like",
    "randn",
    "add",
    "mul",
    "sub",
    "neg",
    "scalar_weight",
    "tsum",
    "tmean",
    "tabs",
    "backward",
]


class ShapeError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


# ---------------------------------------------------------------------------
# precision handling

_DTYPE_STACK: list[type] = [np.float32]


def default_dtype():
    """dtype used for newly created tensors."""
    return _DTYPE_STACK[-1]


class precision:
    """Context manager selecting the storage dtype for new tensors.

    ``with precision(64): ...`` builds everything inside in float64, which the
    gradient-oracle tests use; normal operation stays in float32.
    """

    def __init__(self, bits: int | str):
        if bits in (32, "32", "float32"):
            self._dtype = np.float32
        elif bits in (64, "64", "float64"):
            self._dtype = np.float64
        else:
            raise ValueError(f"unsupported precision: {bits!r}")

    def __enter__(self):
        _DTYPE_STACK.append(self._dtype)
        return self

    def __exit__(self, *exc):
        _DTYPE_STACK.pop()
        return False


# ---------------------------------------------------------------------------
# tensor

class Tensor:
    """4-D ``(n, c, h, w)`` array with an optional gradient buffer.

    The data buffer is treated as immutable once constructed (the optimizer,
    which owns the parameters, is the single sanctioned writer).  ``grad`` is
    populated by :func:`backward` and holds an array of the same shape.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else default_dtype())
        if arr.ndim != 4:
            raise ShapeError(f"tensors are 4-D (n,c,h,w); got shape {arr.shape}")
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"all dimensions must be >= 1; got shape {arr.shape}")
        # single-pass finiteness screen: a float64 sum is finite iff every
        # element is (float32 magnitudes cannot overflow the f64 accumulator)
        if not np.isfinite(arr.sum(dtype=np.float64)):
            raise ValueError("tensor holds non-finite values (NaN/Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    # -- introspection ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor; got {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Copy of the value with no gradient tracking."""
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other, self))

    def __radd__(self, other):
        return add(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self))

    def __rmul__(self, other):
        return mul(_coerce(other, self), self)

    def __sub__(self, other):
        return sub(self, _coerce(other, self))

    def __neg__(self):
        return neg(self)


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, (int, float)):
        return Tensor(np.full((1, 1, 1, 1), value, dtype=like.data.dtype), dtype=like.data.dtype)
    raise TypeError(f"cannot combine Tensor with {type(value).__name__}")


# -- constructors -----------------------------------------------------------

def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def scalar(value: float, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.full((1, 1, 1, 1), value), requires_grad=requires_grad, dtype=dtype)


def zeros(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad, dtype=dtype)


def ones(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad, dtype=dtype)


def zeros_like(t: Tensor, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros_like(t.data), requires_grad=requires_grad, dtype=t.data.dtype)


def ones_like(t: Tensor, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones_like(t.data), requires_grad=requires_grad, dtype=t.data.dtype)


def randn(shape, rng: np.random.Generator, scale: float = 1.0, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=requires_grad, dtype=dtype)


# ---------------------------------------------------------------------------
# tape

class _Record:
    """One recorded operation: output, inputs, and a rule mapping the
    output gradient to per-input gradient arrays (None = no gradient)."""

    __slots__ = ("output", "inputs", "rule")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...], rule):
        self.output = output
        self.inputs = inputs
        self.rule = rule


_TAPE_STACK: list["Tape"] = []


def active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of a single forward pass.

    Records are appended in execution order, so every operation's inputs
    precede it on the tape; the backward sweep walks the list once in
    reverse.  A tape is meant for one forward + one backward and is then
    discarded.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self._consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.records)

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], rule):
        self.records.append(_Record(output, inputs, rule))

    def backward(self, loss: Tensor):
        backward(loss, self)


def record_op(output: Tensor, inputs: tuple[Tensor, ...], rule) -> Tensor:
    """Register ``output = op(inputs)`` on the active tape, if recording.

    ``rule(grad_out)`` must return one gradient array (or None) per input.
    The output's ``requires_grad`` is inherited from the inputs.
    """
    needs = any(t.requires_grad for t in inputs)
    output.requires_grad = needs
    tape = active_tape()
    if tape is not None and needs:
        tape.record(output, inputs, rule)
    return output


def backward(loss: Tensor, tape: Tape):
    """Accumulate ``d loss / d t`` into ``t.grad`` for every tensor that
    requires a gradient and was recorded on the tape.

    Recorded-but-unreachable tensors receive an exact zero gradient.  If a
    tensor already holds a ``grad`` buffer (e.g. zeroed by the training
    loop), the new gradient is added into it.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward needs a scalar (1,1,1,1) loss; got {loss.shape}")
    if tape._consumed:
        raise RuntimeError("tape already replayed; build a fresh tape per forward pass")
    tape._consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    seen: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        for t in rec.inputs:
            if t.requires_grad:
                seen[id(t)] = t
        if rec.output.requires_grad:
            seen[id(rec.output)] = rec.output
        gout = grads.get(id(rec.output))
        if gout is None:
            continue
        gins = rec.rule(gout)
        for t, g in zip(rec.inputs, gins):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.data.shape:
                raise ShapeError(
                    f"backward rule produced gradient of shape {g.shape} for tensor {t.shape}"
                )
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g

    for key, t in seen.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros_like(t.data)
        if t.grad is None:
            t.grad = g.astype(t.data.dtype, copy=False)
        else:
            t.grad = t.grad + g.astype(t.data.dtype, copy=False)


# ---------------------------------------------------------------------------
# broadcasting helpers

def _broadcast_check(a: Tensor, b: Tensor):
    """Allow equal shapes, a (1,1,1,1) scalar, or a per-channel gate/bias
    ((1,c,1,1) or (n,c,1,1)) against matching channel count.  General
    broadcasting is rejected."""
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    for x, y in ((sa, sb), (sb, sa)):
        if y == (1, 1, 1, 1):
            return
        if y[1] == x[1] and y[2] == y[3] == 1 and y[0] in (1, x[0]):
            return
    raise ShapeError(f"incompatible shapes for elementwise op: {sa} vs {sb}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over the axes that were broadcast to reach ``g.shape``."""
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


# ---------------------------------------------------------------------------
# elementwise primitives

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b)
    out = Tensor(a.data + b.data)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record_op(out, (a, b), rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b)
    out = Tensor(a.data - b.data)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record_op(out, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return record_op(out, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b)
    out = Tensor(a.data * b.data)

    def rule(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record_op(out, (a, b), rule)


def scalar_weight(x: Tensor, lam: Tensor) -> Tensor:
    """Adaptive branch weight: lam is a learnable single-element tensor."""
    if lam.shape != (1, 1, 1, 1):
        raise ShapeError(f"scalar weight must be (1,1,1,1); got {lam.shape}")
    return mul(x, lam)


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a (1,1,1,1) tensor."""
    out = Tensor(x.data.sum(dtype=x.data.dtype).reshape(1, 1, 1, 1))

    def rule(g):
        return (np.broadcast_to(g.reshape(()), x.shape).astype(x.data.dtype),)

    return record_op(out, (x,), rule)


def tmean(x: Tensor) -> Tensor:
    """Mean of all elements, as a (1,1,1,1) tensor."""
    n = x.size
    out = Tensor(np.asarray(x.data.mean(dtype=np.float64), dtype=x.data.dtype).reshape(1, 1, 1, 1))

    def rule(g):
        return (np.broadcast_to(g.reshape(()) / n, x.shape).astype(x.data.dtype),)

    return record_op(out, (x,), rule)


def tabs(x: Tensor) -> Tensor:
    """Elementwise absolute value; subgradient at 0 is 0."""
    out = Tensor(np.abs(x.data))

    def rule(g):
        return (g * np.sign(x.data),)

    return record_op(out, (x,), rule)
