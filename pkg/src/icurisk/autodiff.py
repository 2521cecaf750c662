"""Minimal reverse-mode automatic differentiation on numpy arrays.

The engine supplies exactly the operations the risk model needs, nothing
more: no broadcasting, no GPU, double precision throughout.  Each forward
call on a :class:`Tape` produces a fresh :class:`Tensor` and appends an
entry holding the inputs, the output, and a backward rule.  Entries are
therefore already in topological order, and :meth:`Tape.backward` is a
single reverse sweep that accumulates gradients into ``Tensor.grad``
(summing over all paths, so shared subexpressions and shared parameters
come out right).

Gradients accumulate across tapes: running backward on several per-example
tapes sums example gradients into the shared parameter tensors, which is
how mini-batches are aggregated.  Callers zero parameter grads between
optimizer steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when an operation's input shapes are incompatible."""


def _require_same_shape(op: str, a: "Tensor", b: "Tensor") -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} differ"
        )


class Tensor:
    """An array value in the graph; ``grad`` is filled by backward passes."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


# A backward rule maps the output gradient to one gradient per input
# (None for inputs that need no gradient).
BackwardRule = Callable[[np.ndarray], tuple]


@dataclass
class TapeEntry:
    op: str
    inputs: tuple
    output: Tensor
    backward: BackwardRule


class Tape:
    """Ordered record of forward operations for one computation."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def _push(self, op: str, inputs: Sequence[Tensor], data: np.ndarray,
              backward: BackwardRule) -> Tensor:
        out = Tensor(data)
        self.entries.append(TapeEntry(op, tuple(inputs), out, backward))
        return out

    # -- arithmetic ---------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        """Matrix product of a 2-D ``a`` with a 1-D or 2-D ``b``."""
        if a.data.ndim != 2 or b.data.ndim not in (1, 2):
            raise ShapeMismatchError(
                f"matmul: need 2-D @ 1-D/2-D, got {a.data.shape} and {b.data.shape}"
            )
        if a.data.shape[1] != b.data.shape[0]:
            raise ShapeMismatchError(
                f"matmul: inner dimensions of {a.data.shape} and {b.data.shape} differ"
            )

        def backward(g):
            if b.data.ndim == 1:
                return np.outer(g, b.data), a.data.T @ g
            return g @ b.data.T, a.data.T @ g

        return self._push("matmul", (a, b), a.data @ b.data, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("add", a, b)
        return self._push("add", (a, b), a.data + b.data, lambda g: (g, g))

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product."""
        _require_same_shape("mul", a, b)
        return self._push(
            "mul", (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data)
        )

    def concat(self, parts: Sequence[Tensor]) -> Tensor:
        """Concatenate 1-D tensors."""
        if not parts:
            raise ValueError("concat: need at least one tensor")
        for p in parts:
            if p.data.ndim != 1:
                raise ShapeMismatchError(f"concat: expected 1-D, got {p.data.shape}")
        sizes = [p.data.shape[0] for p in parts]
        offsets = np.cumsum(sizes)[:-1]

        def backward(g):
            return tuple(np.split(g, offsets))

        return self._push("concat", parts, np.concatenate([p.data for p in parts]), backward)

    # -- nonlinearities -----------------------------------------------------

    def sigmoid(self, x: Tensor) -> Tensor:
        v = x.data
        out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                       np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
        return self._push("sigmoid", (x,), out, lambda g: (g * out * (1.0 - out),))

    def tanh(self, x: Tensor) -> Tensor:
        out = np.tanh(x.data)
        return self._push("tanh", (x,), out, lambda g: (g * (1.0 - out * out),))

    def softmax(self, x: Tensor) -> Tensor:
        """Softmax of a 1-D tensor, computed with max subtraction."""
        if x.data.ndim != 1:
            raise ShapeMismatchError(f"softmax: expected 1-D, got {x.data.shape}")
        shifted = np.exp(x.data - x.data.max())
        out = shifted / shifted.sum()

        def backward(g):
            return (out * (g - np.dot(g, out)),)

        return self._push("softmax", (x,), out, backward)

    # -- reductions and combinations ----------------------------------------

    def maximum(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise max; on ties the gradient routes to the first input."""
        _require_same_shape("maximum", a, b)
        first_wins = a.data >= b.data

        def backward(g):
            return g * first_wins, g * ~first_wins

        return self._push("maximum", (a, b), np.maximum(a.data, b.data), backward)

    def mean(self, parts: Sequence[Tensor]) -> Tensor:
        """Elementwise mean of same-shape tensors (reduction over a sequence)."""
        if not parts:
            raise ValueError("mean: need at least one tensor")
        for p in parts[1:]:
            _require_same_shape("mean", parts[0], p)
        n = len(parts)

        def backward(g):
            share = g / n
            return (share,) * n

        total = parts[0].data.copy()
        for p in parts[1:]:
            total += p.data
        return self._push("mean", parts, total / n, backward)

    def weighted_sum(self, parts: Sequence[Tensor], weights: Tensor) -> Tensor:
        """sum_t weights[t] * parts[t] for same-shape tensors."""
        if weights.data.ndim != 1 or len(parts) != weights.data.shape[0]:
            raise ShapeMismatchError(
                f"weighted_sum: {len(parts)} tensors vs weights {weights.data.shape}"
            )
        for p in parts[1:]:
            _require_same_shape("weighted_sum", parts[0], p)
        w = weights.data

        def backward(g):
            part_grads = tuple(w[t] * g for t in range(len(parts)))
            weight_grad = np.array([np.dot(g.ravel(), parts[t].data.ravel())
                                    for t in range(len(parts))])
            return part_grads + (weight_grad,)

        total = np.zeros_like(parts[0].data)
        for t, p in enumerate(parts):
            total += w[t] * p.data
        return self._push("weighted_sum", (*parts, weights), total, backward)

    # -- stochastic and loss ops --------------------------------------------

    def dropout(self, x: Tensor, rate: float, rng: np.random.Generator | None = None,
                train: bool = True) -> Tensor:
        """Inverted dropout: keep with probability 1-rate and rescale.

        Identity when ``train`` is off.  The caller owns the generator; no
        ambient global randomness.
        """
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        if not train or rate == 0.0:
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs a random generator")
        keep = 1.0 - rate
        mask = (rng.random(x.data.shape) >= rate) / keep
        return self._push("dropout", (x,), x.data * mask, lambda g: (g * mask,))

    def binary_cross_entropy(self, p: Tensor, y: float) -> Tensor:
        """-[y log p + (1-y) log(1-p)] with p clipped to [1e-12, 1-1e-12]."""
        if p.data.size != 1:
            raise ShapeMismatchError(
                f"binary_cross_entropy: probability must be scalar, got {p.data.shape}"
            )
        if y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {y}")
        clipped = np.clip(p.data, 1e-12, 1.0 - 1e-12)
        loss = -(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped))

        def backward(g):
            inside = (p.data > 1e-12) & (p.data < 1.0 - 1e-12)
            return (g * inside * (clipped - y) / (clipped * (1.0 - clipped)),)

        return self._push("bce", (p,), loss.reshape(p.data.shape), backward)

    # -- reverse sweep ------------------------------------------------------

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every tensor's ``grad``."""
        if loss.data.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for entry in reversed(self.entries):
            g = entry.output.grad
            if g is None:
                continue
            for tensor, grad in zip(entry.inputs, entry.backward(g)):
                if grad is not None:
                    tensor._accumulate(grad)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(|a|, |n|, 1e-8) over all entries."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build_loss: Callable[[], tuple[Tape, Tensor]],
                    params: Sequence[Tensor], step: float = 1e-5) -> float:
    """Compare tape gradients with central finite differences.

    ``build_loss`` must rebuild the forward pass (and be deterministic, so
    dropout must be off).  Returns the max relative error over every entry
    of every parameter tensor.
    """
    for p in params:
        p.zero_grad()
    tape, loss = build_loss()
    tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            _, up = build_loss()
            flat[i] = original - step
            _, down = build_loss()
            flat[i] = original
            numeric = (up.data.item() - down.data.item()) / (2.0 * step)
            worst = max(worst, max_relative_error(
                np.array([a.reshape(-1)[i]]), np.array([numeric])))
    return worst
