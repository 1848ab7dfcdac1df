"""Minimal reverse-mode tape over numpy arrays.

Loss builders compose network outputs with smooth reductions (sums, means,
squares); this tape differentiates exactly those compositions.  Variables
are created through a ``Tape`` so creation order doubles as a topological
order for the backward sweep.  Only the handful of operations the loss
terms need are implemented; anything fancier belongs in the network's own
vector-Jacobian products.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """A node in the tape: an array value plus how to push gradients back."""

    __slots__ = ("value", "parents", "grad", "_tape")

    def __init__(self, tape: "Tape", value, parents=()):
        self.value = np.asarray(value)
        self.parents = parents  # tuple of (Var, vjp callable)
        self.grad = None
        self._tape = tape
        tape.nodes.append(self)

    # -- helpers -----------------------------------------------------------
    def _lift(self, other) -> "Var | None":
        return other if isinstance(other, Var) else None

    def _new(self, value, parents):
        return Var(self._tape, value, parents)

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        o = self._lift(other)
        if o is None:
            return self._new(self.value + other, ((self, lambda g: g),))
        return self._new(self.value + o.value, ((self, lambda g: g), (o, lambda g: g)))

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.value, ((self, lambda g: -g),))

    def __sub__(self, other):
        o = self._lift(other)
        if o is None:
            return self._new(self.value - other, ((self, lambda g: g),))
        return self._new(self.value - o.value, ((self, lambda g: g), (o, lambda g: -g)))

    def __rsub__(self, other):
        return self._new(other - self.value, ((self, lambda g: -g),))

    def __mul__(self, other):
        o = self._lift(other)
        if o is None:
            return self._new(self.value * other, ((self, lambda g: g * other),))
        return self._new(
            self.value * o.value,
            ((self, lambda g: g * o.value), (o, lambda g: g * self.value)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported in loss builders")
        return self * (1.0 / other)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        val = self.value ** p
        return self._new(val, ((self, lambda g: g * p * self.value ** (p - 1)),))

    # -- reductions --------------------------------------------------------
    def sum(self):
        return self._new(
            self.value.sum(),
            ((self, lambda g: np.broadcast_to(g, self.value.shape)),),
        )

    def mean(self):
        n = self.value.size
        return self._new(
            self.value.mean(),
            ((self, lambda g: np.broadcast_to(g / n, self.value.shape)),),
        )


class Tape:
    """Records Vars in creation order and runs the backward sweep."""

    def __init__(self):
        self.nodes: list[Var] = []

    def leaf(self, value) -> Var:
        return Var(self, value)

    def backward(self, result: Var) -> None:
        """Accumulate d(result)/d(node) into each node's .grad."""
        if result.value.ndim != 0:
            raise ValueError("backward() expects a scalar result")
        for node in self.nodes:
            node.grad = None
        result.grad = np.ones_like(result.value)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            for parent, vjp in node.parents:
                contrib = _unbroadcast(np.asarray(vjp(node.grad)), parent.value.shape)
                if parent.grad is None:
                    parent.grad = contrib.copy() if contrib is node.grad else contrib
                else:
                    parent.grad = parent.grad + contrib
