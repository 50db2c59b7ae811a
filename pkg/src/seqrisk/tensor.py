"""Reverse-mode automatic differentiation over flat float64 storage.

A Tensor wraps a C-contiguous numpy array (the array's memory is the flat
row-major buffer) plus an optional gradient of the same shape.  While a
ComputationTape is active, every primitive records the operation; backward()
replays the records in reverse order exactly once, accumulating gradients
into .grad.  Gradients keep accumulating across backward calls until
sgd_step (or the caller) zeroes them.

Tapes are thread-confined: each thread sees only the tapes it opened, so
independent replicas may run on different threads without sharing state.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class Tensor:
    """Float64 array with optional gradient storage."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            # ascontiguousarray would also promote 0-d to (1,); keep scalars 0-d
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


class _Record:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output, inputs, backward_fn):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = _tls.stack = []
    return stack


def active_tape() -> "ComputationTape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class ComputationTape:
    """Ordered record of primitive applications (a Wengert list).

    Use as a context manager around a forward pass; outside any tape,
    primitives compute values without recording (inference mode).
    """

    def __init__(self):
        self._ops: list[_Record] = []

    def __enter__(self) -> "ComputationTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._ops)

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> None:
        self._ops.append(_Record(output, tuple(inputs), backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into .grad for every recorded input.

        Visits each recorded operation exactly once, in reverse recording
        order.  Records whose output received no gradient (branches that do
        not lead to the loss) propagate nothing.
        """
        if loss.data.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones((), dtype=np.float64)
        for rec in reversed(self._ops):
            g = rec.output.grad
            if g is None:
                continue
            grads = rec.backward_fn(g)
            for tensor, gi in zip(rec.inputs, grads):
                if gi is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += gi


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    tape = active_tape()
    if tape is not None and requires:
        tape.record(out, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product: (m,k)@(k,n), (m,k)@(k,), (k,)@(k,n) or (k,)@(k,)."""
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.ndim > 2 or bd.ndim > 2:
        raise ValueError(f"matmul supports 1-D and 2-D operands, got shapes {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise ValueError(
            f"matmul: inner dimensions disagree: left shape {ad.shape}, right shape {bd.shape}"
        )
    out = ad @ bd

    def bwd(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return g @ bd.T, np.outer(ad, g)
        return g * bd, g * ad  # (k,)@(k,) -> scalar

    return _emit(out, (a, b), bwd)


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{name}: operand shapes differ: {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(c: float, x: Tensor) -> Tensor:
    c = float(c)
    return _emit(c * x.data, (x,), lambda g: (c * g,))


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_values(x.data)
    return _emit(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _emit(out, (x,), lambda g: (g * (1.0 - out * out),))


def clamp_unit(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Pin a probability into [eps, 1-eps]; only acts once sigmoid has
    saturated in float64, where its gradient has already vanished."""
    xd = x.data
    out = np.clip(xd, eps, 1.0 - eps)
    inside = (xd > eps) & (xd < 1.0 - eps)
    return _emit(out, (x,), lambda g: (g * inside,))


def relu(x: Tensor) -> Tensor:
    xd = x.data
    out = np.maximum(xd, 0.0)
    return _emit(out, (x,), lambda g: (g * (xd > 0.0),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along one axis; rejects non-finite input."""
    xd = x.data
    if not np.isfinite(xd).all():
        raise ValueError("softmax: input contains non-finite values")
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _emit(out, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    xd = x.data
    out = np.asarray(xd.sum())

    def bwd(g):
        return (np.full(xd.shape, float(g)),)

    return _emit(out, (x,), bwd)


def slice1d(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor; backward scatters into the source."""
    xd = x.data
    if xd.ndim != 1:
        raise ValueError(f"slice1d needs a 1-D tensor, got shape {xd.shape}")
    out = xd[start:stop].copy()

    def bwd(g):
        gi = np.zeros_like(xd)
        gi[start:stop] = g
        return (gi,)

    return _emit(out, (x,), bwd)


def masked_mean_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over unmasked rows of a (T, H) tensor -> (H,)."""
    xd = x.data
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    if idx.size == 0:
        raise ValueError("masked_mean_rows: mask excludes every row")
    n = idx.size
    out = xd[idx].mean(axis=0)

    def bwd(g):
        gi = np.zeros_like(xd)
        gi[idx] = g / n
        return (gi,)

    return _emit(out, (x,), bwd)


_BCE_EPS = 1e-12


def bce_loss(risk: Tensor, label: float) -> Tensor:
    """Binary cross-entropy of a scalar probability against a 0/1 label.

    The probability is clamped to [1e-12, 1 - 1e-12]; the clamp only acts
    once sigmoid has saturated in float64 and keeps the loss finite there.
    """
    y = float(label)
    if y not in (0.0, 1.0):
        raise ValueError(f"bce_loss: label must be 0 or 1, got {label!r}")
    if risk.data.shape != ():
        raise ValueError(f"bce_loss: risk must be scalar, got shape {risk.data.shape}")
    p = float(risk.data)
    pc = min(max(p, _BCE_EPS), 1.0 - _BCE_EPS)
    out = np.asarray(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))

    def bwd(g):
        return (np.asarray(float(g) * -(y / pc - (1.0 - y) / (1.0 - pc))),)

    return _emit(out, (risk,), bwd)


# ---------------------------------------------------------------------------
# optimization and verification


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """In-place p <- p - lr * grad for every parameter, then zero the grads."""
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ValueError("sgd_step: parameter has no gradient; run backward first")
    for p in params:
        p.data -= lr * p.grad
        p.grad = None


@dataclass
class GradCheckReport:
    """Per-parameter max relative error of analytic vs central differences."""

    per_param: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def worst(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return all(err <= self.tolerance for err in self.per_param.values())

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.per_param.items() if v > self.tolerance}


def grad_check(
    fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare tape gradients of fn() against central finite differences.

    fn must be a deterministic closure returning a scalar loss; it runs once
    under a tape for the analytic gradients and 2 x size(params) times
    without one for the numeric quotients.  Relative error uses
    |a - n| / max(|a|, |n|, 1e-6).  An empty params dict yields an empty report.
    """
    report = GradCheckReport(tolerance=tolerance)
    if not params:
        return report

    saved = {name: p.grad for name, p in params.items()}
    for p in params.values():
        p.grad = None
    with ComputationTape() as tape:
        loss = fn()
    tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    for name, p in params.items():
        p.grad = saved[name]

    for name, p in params.items():
        flat = p.data.reshape(-1)  # view: perturb in place, restore after
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = float(fn().data)
            flat[i] = orig - step
            lm = float(fn().data)
            flat[i] = orig
            numeric[i] = (lp - lm) / (2.0 * step)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
        report.per_param[name] = float(np.max(np.abs(a - numeric) / denom))
    return report
