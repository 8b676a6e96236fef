"""Minimal define-by-run reverse-mode differentiation over 2-D float64 arrays.

Every value is a 2-D array; scalars are ``(1, 1)``. The only broadcasting
supported is a row vector ``(1, q)`` against a ``(p, q)`` matrix, which covers
bias addition and scalar-against-column arithmetic (a ``(1, 1)`` against a
``(d, 1)`` column).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Node:
    __slots__ = ("value", "parents", "grad_fn", "name")

    def __init__(self, value, parents=(), grad_fn=None, name=None):
        self.value = value
        self.parents = parents
        # grad_fn maps the upstream gradient to one gradient per parent
        self.grad_fn = grad_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.value.shape})"


def _as2d(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


def const(x, name=None) -> Node:
    """Wrap an array as a leaf. Leaves double as parameters: pass them to
    :func:`backward` to receive their gradients."""
    return Node(_as2d(x).copy(), name=name)


param = const


def _node(x) -> Node:
    return x if isinstance(x, Node) else const(x)


def _broadcast_kind(a: np.ndarray, b: np.ndarray, op: str) -> str:
    if a.shape == b.shape:
        return "same"
    if b.shape[0] == 1 and b.shape[1] == a.shape[1]:
        return "row"
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, kind: str) -> np.ndarray:
    return g if kind == "same" else g.sum(axis=0, keepdims=True)


# --------------------------------------------------------------------------
# gradient rules, kept at module level so a test can swap one out


def _matmul_grad(a, b, g):
    return g @ b.T, a.T @ g


def _tanh_grad(x, out, g):
    return (g * (1.0 - out * out),)


def _abs_grad(x, out, g):
    return (g * np.sign(x),)


def _square_grad(x, out, g):
    return (g * 2.0 * x,)


def _sqrt_grad(x, out, g):
    return (g * 0.5 / out,)


# --------------------------------------------------------------------------
# ops


def matmul(a, b) -> Node:
    a, b = _node(a), _node(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.value.shape} @ {b.value.shape}"
        )
    av, bv = a.value, b.value
    return Node(av @ bv, (a, b), lambda g: _matmul_grad(av, bv, g))


def transpose(a) -> Node:
    a = _node(a)
    return Node(a.value.T.copy(), (a,), lambda g: (g.T,))


def add(a, b) -> Node:
    a, b = _node(a), _node(b)
    kind = _broadcast_kind(a.value, b.value, "add")
    return Node(a.value + b.value, (a, b), lambda g: (g, _unbroadcast(g, kind)))


def sub(a, b) -> Node:
    a, b = _node(a), _node(b)
    kind = _broadcast_kind(a.value, b.value, "sub")
    return Node(a.value - b.value, (a, b), lambda g: (g, -_unbroadcast(g, kind)))


def mul(a, b) -> Node:
    a, b = _node(a), _node(b)
    kind = _broadcast_kind(a.value, b.value, "mul")
    av, bv = a.value, b.value
    return Node(
        av * bv, (a, b), lambda g: (g * bv, _unbroadcast(g * av, kind))
    )


def div(a, b) -> Node:
    a, b = _node(a), _node(b)
    kind = _broadcast_kind(a.value, b.value, "div")
    av, bv = a.value, b.value
    out = av / bv
    return Node(
        out, (a, b), lambda g: (g / bv, _unbroadcast(-g * out / bv, kind))
    )


def scale(a, c: float) -> Node:
    a = _node(a)
    c = float(c)
    return Node(a.value * c, (a,), lambda g: (g * c,))


def square(a) -> Node:
    a = _node(a)
    x = a.value
    out = x * x
    return Node(out, (a,), lambda g: _square_grad(x, out, g))


def abs(a) -> Node:  # noqa: A001 - mirrors the numeric op name
    a = _node(a)
    x = a.value
    out = np.abs(x)
    return Node(out, (a,), lambda g: _abs_grad(x, out, g))


def tanh(a) -> Node:
    a = _node(a)
    x = a.value
    out = np.tanh(x)
    return Node(out, (a,), lambda g: _tanh_grad(x, out, g))


def sqrt(a) -> Node:
    a = _node(a)
    x = a.value
    if np.any(x < 0):
        raise ValueError("sqrt: negative input")
    out = np.sqrt(x)
    return Node(out, (a,), lambda g: _sqrt_grad(x, out, g))


def reduce_sum(a) -> Node:
    a = _node(a)
    if a.value.size == 0:
        raise ShapeError("reduce_sum: empty input")
    shape = a.value.shape
    return Node(
        np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),)
    )


def reduce_mean(a) -> Node:
    a = _node(a)
    count = a.value.size
    if count == 0:
        raise ShapeError("reduce_mean: empty input")
    shape = a.value.shape
    return Node(
        np.array([[a.value.sum() / count]]),
        (a,),
        lambda g: (np.full(shape, g[0, 0] / count),),
    )


ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "square": square,
    "abs": abs,
    "tanh": tanh,
    "sqrt": sqrt,
}


def elementwise(op_kind: str, *inputs) -> Node:
    try:
        fn = ELEMENTWISE[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None
    return fn(*inputs)


# --------------------------------------------------------------------------
# reverse pass


def _topo_order(output: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Node, params: Sequence[Node]) -> list[np.ndarray]:
    """Gradients of a scalar ``output`` with respect to each node in ``params``.

    Contributions from shared subexpressions are summed. Parameters the output
    does not depend on get a zero array.
    """
    if output.value.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar output, got {output.value.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones((1, 1))}
    for node in reversed(_topo_order(output)):
        g = grads.get(id(node))
        if g is None or node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return [
        grads[id(p)].copy() if id(p) in grads else np.zeros_like(p.value)
        for p in params
    ]


# --------------------------------------------------------------------------
# finite-difference verification


class NondeterministicLoss(RuntimeError):
    pass


@dataclass
class GradReport:
    max_rel_error: dict[str, float]
    eps: float
    worst_index: dict[str, tuple] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.worst < tol


def relative_error(a, f) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-12)


def grad_check(
    loss_builder: Callable[[list[Node]], Node],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
) -> GradReport:
    """Compare analytic gradients against central differences, per parameter.

    ``loss_builder`` receives fresh leaf nodes (in ``params`` order) and must
    return a scalar node.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    names = list(params)
    base = [_as2d(params[k]) for k in names]

    def evaluate(arrays):
        return float(loss_builder([const(a) for a in arrays]).value[0, 0])

    leaves = [const(a) for a in base]
    out = loss_builder(leaves)
    analytic = backward(out, leaves)
    if evaluate(base) != float(out.value[0, 0]):
        raise NondeterministicLoss("loss changed between two evaluations at the same point")

    report = GradReport(max_rel_error={}, eps=eps)
    arrays = [a.copy() for a in base]
    for i, name in enumerate(names):
        numeric = np.zeros_like(base[i])
        for idx in np.ndindex(base[i].shape):
            orig = arrays[i][idx]
            arrays[i][idx] = orig + eps
            f_plus = evaluate(arrays)
            arrays[i][idx] = orig - eps
            f_minus = evaluate(arrays)
            arrays[i][idx] = orig
            numeric[idx] = (f_plus - f_minus) / (2 * eps)
        err = relative_error(analytic[i], numeric)
        flat = int(np.argmax(err))
        report.max_rel_error[name] = float(err.flat[flat])
        report.worst_index[name] = np.unravel_index(flat, err.shape)
    return report
