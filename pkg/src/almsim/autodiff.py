"""Minimal reverse-mode automatic differentiation on numpy arrays.

A :class:`Tensor` wraps an ndarray and remembers, for each input it was
computed from, a vector-Jacobian product closure.  :func:`backward` walks
the tape in reverse topological order and accumulates gradients.  Only the
operations the episode graph needs are implemented; kinked operations
(``relu``, ``abs_``) use the subgradient 0 at their kink.

Parameters can be given an external gradient buffer (for example a slice of
a stacked array), in which case backward accumulates into it in place.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "backward",
    "add",
    "mul",
    "matmul",
    "relu",
    "abs_",
    "log",
    "pow_const",
    "sum_last",
    "mean_all",
    "col",
    "cols",
    "stack_cols",
    "append_const_cols",
    "rowdot_const",
    "shift_left",
    "masked_ratio",
]

Vjp = Callable[[np.ndarray], np.ndarray]


class Tensor:
    __slots__ = ("value", "grad", "parents", "requires_grad")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple[tuple["Tensor", Vjp], ...] = (),
        requires_grad: bool = False,
    ):
        self.value = np.asarray(value, dtype=float)
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        # Keep the tape only where gradients can flow.
        self.parents = parents if self.requires_grad else ()
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    # Operator sugar; non-tensors are wrapped as constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def constant(value) -> Tensor:
    return Tensor(np.asarray(value, dtype=float))


def parameter(value: np.ndarray, grad_buffer: np.ndarray | None = None) -> Tensor:
    """Leaf tensor that collects gradient, optionally into ``grad_buffer``."""
    t = Tensor(value, requires_grad=True)
    if grad_buffer is not None:
        if grad_buffer.shape != t.value.shape:
            raise ValueError("gradient buffer shape mismatch")
        t.grad = grad_buffer
    return t


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(root: Tensor) -> None:
    """Accumulate gradients of ``root`` (summed over all entries) into every
    reachable parameter's ``grad``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            stack.append((parent, False))

    if root.grad is None:
        root.grad = np.ones_like(root.value)
    else:
        root.grad += np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad += vjp(g)


# --- arithmetic -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value + b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value - b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(-g, b.value.shape)),
        ),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value * b.value,
        parents=(
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value / b.value,
        parents=(
            (a, lambda g: _unbroadcast(g / b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(-g * a.value / b.value**2, b.value.shape)),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for a 2-D right operand: (..., i) @ (i, o)."""
    if b.value.ndim != 2:
        raise ValueError("matmul right operand must be 2-D")
    return Tensor(
        a.value @ b.value,
        parents=(
            (a, lambda g: g @ b.value.T),
            (b, lambda g: np.tensordot(a.value, g, axes=(tuple(range(a.value.ndim - 1)),) * 2)),
        ),
    )


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0.0
    return Tensor(np.where(mask, a.value, 0.0), parents=((a, lambda g: g * mask),))


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.value)
    return Tensor(np.abs(a.value), parents=((a, lambda g: g * sign),))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.value), parents=((a, lambda g: g / a.value),))


def pow_const(a: Tensor, exponent: float) -> Tensor:
    return Tensor(
        a.value**exponent,
        parents=((a, lambda g: g * exponent * a.value ** (exponent - 1.0)),),
    )


def sum_last(a: Tensor) -> Tensor:
    """Sum over the trailing axis: (..., k) -> (...)."""
    return Tensor(a.value.sum(axis=-1), parents=((a, lambda g: g[..., None] * np.ones_like(a.value)),))


def mean_all(a: Tensor) -> Tensor:
    size = a.value.size
    return Tensor(
        np.asarray(a.value.mean()),
        parents=((a, lambda g: np.broadcast_to(g / size, a.value.shape)),),
    )


# --- structural ops -------------------------------------------------------


def col(a: Tensor, j: int) -> Tensor:
    """Select one trailing-axis column: (..., n) -> (...)."""

    def vjp(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.value)
        out[..., j] = g
        return out

    return Tensor(a.value[..., j], parents=((a, vjp),))


def cols(a: Tensor, k: int) -> Tensor:
    """Select the first ``k`` trailing-axis columns."""

    def vjp(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.value)
        out[..., :k] = g
        return out

    return Tensor(a.value[..., :k], parents=((a, vjp),))


def stack_cols(items: Sequence[Tensor]) -> Tensor:
    """Stack (...,) tensors into (..., len(items))."""
    parents = tuple(
        (item, (lambda g, i=i: g[..., i])) for i, item in enumerate(items)
    )
    return Tensor(np.stack([t.value for t in items], axis=-1), parents=parents)


def append_const_cols(a: Tensor, const: np.ndarray) -> Tensor:
    """Concatenate constant trailing columns: (..., p) ++ (..., q)."""
    p = a.value.shape[-1]
    const = np.broadcast_to(const, a.value.shape[:-1] + const.shape[-1:])
    return Tensor(
        np.concatenate([a.value, const], axis=-1),
        parents=((a, lambda g: g[..., :p]),),
    )


def rowdot_const(a: Tensor, const: np.ndarray) -> Tensor:
    """Row-wise inner product with a constant: (..., n) . (..., n) -> (...)."""
    const = np.asarray(const, dtype=float)
    return Tensor(
        np.sum(a.value * const, axis=-1),
        parents=((a, lambda g: g[..., None] * const),),
    )


def shift_left(a: Tensor) -> Tensor:
    """Left-shift the trailing axis, appending a zero."""

    def vjp(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.value)
        out[..., 1:] = g[..., :-1]
        return out

    shifted = np.zeros_like(a.value)
    shifted[..., :-1] = a.value[..., 1:]
    return Tensor(shifted, parents=((a, vjp),))


def masked_ratio(num: Tensor, den: Tensor) -> Tensor:
    """``num / den`` where ``den > 0``, else 0, with matching gradients."""
    mask = den.value > 0.0
    safe = np.where(mask, den.value, 1.0)
    out = np.where(mask, num.value / safe, 0.0)
    return Tensor(
        out,
        parents=(
            (num, lambda g: _unbroadcast(g * mask / safe, num.value.shape)),
            (den, lambda g: _unbroadcast(-g * mask * num.value / safe**2, den.value.shape)),
        ),
    )
