"""Scalar reverse-mode automatic differentiation on an explicit tape.

The training objective is built from ordinary Python arithmetic on
:class:`Node` objects. Every operation evaluates eagerly (the numeric value is
available immediately) and appends one record to its :class:`Tape`; the tape's
append order is a topological order of the computation graph, so
:func:`backward` is a single reverse sweep over the node list. No recursion,
no graph search.

Two conventions keep model code independent of whether it is being
differentiated:

* binary operators accept plain floats on either side (folded into a fused
  affine node, never a hidden graph rebuild), and
* the free functions :func:`exp`, :func:`log1p`, :func:`sigmoid`,
  :func:`max0`, :func:`square`, :func:`maximum_with`, :func:`lincomb`
  dispatch on type, so the same rollout code runs in float mode (fast, for
  validation and finite differences) or in tape mode (for gradients).

``max0`` uses subgradient 0 at the kink. Parameters live in a
:class:`ParameterStore` keyed by name; ``store.bind(tape)`` creates one
parameter node per entry, and gradients are read off those nodes after
``backward``.

Tapes share no mutable state, so independent tapes may be used from
different threads concurrently; a single tape must only ever be touched by
one thread at a time.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence, Union

from .errors import NumericalError, TapeError

__all__ = [
    "Tape",
    "Node",
    "ParameterStore",
    "backward",
    "gradient_check",
    "GradientCheckReport",
    "exp",
    "log1p",
    "sigmoid",
    "max0",
    "square",
    "maximum_with",
    "lincomb",
    "value_of",
]

# Op codes. CONST and PARAM are leaves; LINCOMB is sum(coef_i * node_i) + const,
# the fused form every float-operand arithmetic lowers to.
_CONST = 0
_PARAM = 1
_ADD = 2
_SUB = 3
_MUL = 4
_DIV = 5
_EXP = 6
_LOG1P = 7
_SIGMOID = 8
_MAX0 = 9
_SQUARE = 10
_LINCOMB = 11

_OP_NAMES = {
    _CONST: "constant",
    _PARAM: "parameter",
    _ADD: "add",
    _SUB: "sub",
    _MUL: "mul",
    _DIV: "div",
    _EXP: "exp",
    _LOG1P: "log1p",
    _SIGMOID: "sigmoid",
    _MAX0: "max0",
    _SQUARE: "square",
    _LINCOMB: "lincomb",
}

Scalar = Union[float, "Node"]


class Tape:
    """Append-only record of operations, in evaluation order."""

    __slots__ = ("nodes", "consumed")

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def constant(self, value: float) -> "Node":
        return Node(self, float(value), _CONST, None, None)

    def parameter(self, value: float) -> "Node":
        return Node(self, float(value), _PARAM, None, None)

    def reset(self) -> None:
        """Zero all adjoints so another backward pass may run."""
        for node in self.nodes:
            node.grad = 0.0
        self.consumed = False


class Node:
    """One taped scalar. ``a``/``b`` hold operands; see the op table."""

    __slots__ = ("tape", "value", "op", "a", "b", "grad")

    def __init__(self, tape: Tape, value: float, op: int, a, b) -> None:
        self.tape = tape
        self.value = value
        self.op = op
        self.a = a
        self.b = b
        self.grad = 0.0
        tape.nodes.append(self)

    # -- graph construction helpers -------------------------------------

    def _binary(self, other: "Node", op: int, value: float) -> "Node":
        if other.tape is not self.tape:
            raise TapeError(f"operands of {_OP_NAMES[op]} live on different tapes")
        return Node(self.tape, value, op, self, other)

    def __add__(self, other: Scalar) -> "Node":
        if isinstance(other, Node):
            return self._binary(other, _ADD, self.value + other.value)
        return _affine(self.tape, self.value + other, (1.0,), (self,), float(other))

    __radd__ = __add__

    def __sub__(self, other: Scalar) -> "Node":
        if isinstance(other, Node):
            return self._binary(other, _SUB, self.value - other.value)
        return _affine(self.tape, self.value - other, (1.0,), (self,), -float(other))

    def __rsub__(self, other: float) -> "Node":
        return _affine(self.tape, other - self.value, (-1.0,), (self,), float(other))

    def __mul__(self, other: Scalar) -> "Node":
        if isinstance(other, Node):
            return self._binary(other, _MUL, self.value * other.value)
        return _affine(self.tape, self.value * other, (float(other),), (self,), 0.0)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Node":
        if isinstance(other, Node):
            if other.value == 0.0:
                raise NumericalError("div: division by a zero-valued node")
            return self._binary(other, _DIV, self.value / other.value)
        if other == 0.0:
            raise NumericalError("div: division by zero constant")
        return _affine(self.tape, self.value / other, (1.0 / other,), (self,), 0.0)

    def __rtruediv__(self, other: float) -> "Node":
        if self.value == 0.0:
            raise NumericalError("div: division by a zero-valued node")
        num = self.tape.constant(float(other))
        return num._binary(self, _DIV, other / self.value)

    def __neg__(self) -> "Node":
        return _affine(self.tape, -self.value, (-1.0,), (self,), 0.0)

    def __repr__(self) -> str:  # debugging aid only
        return f"Node({_OP_NAMES[self.op]}, value={self.value!r})"


def _affine(tape: Tape, value: float, coefs: tuple, nodes: tuple, const: float) -> Node:
    # b packs (coefs, const); backward only needs the coefs
    return Node(tape, value, _LINCOMB, nodes, (coefs, const))


def value_of(x: Scalar) -> float:
    """Numeric value of a float or a Node."""
    return x.value if isinstance(x, Node) else x


# -- dispatching math ----------------------------------------------------


def _stable_sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def exp(x: Scalar) -> Scalar:
    if isinstance(x, Node):
        try:
            v = math.exp(x.value)
        except OverflowError:
            raise NumericalError(f"exp: overflow at input {x.value!r}") from None
        return Node(x.tape, v, _EXP, x, None)
    try:
        return math.exp(x)
    except OverflowError:
        raise NumericalError(f"exp: overflow at input {x!r}") from None


def log1p(x: Scalar) -> Scalar:
    if isinstance(x, Node):
        if x.value <= -1.0:
            raise NumericalError(f"log1p: input {x.value!r} outside domain (> -1)")
        return Node(x.tape, math.log1p(x.value), _LOG1P, x, None)
    if x <= -1.0:
        raise NumericalError(f"log1p: input {x!r} outside domain (> -1)")
    return math.log1p(x)


def sigmoid(x: Scalar) -> Scalar:
    if isinstance(x, Node):
        return Node(x.tape, _stable_sigmoid(x.value), _SIGMOID, x, None)
    return _stable_sigmoid(x)


def max0(x: Scalar) -> Scalar:
    if isinstance(x, Node):
        return Node(x.tape, x.value if x.value > 0.0 else 0.0, _MAX0, x, None)
    return x if x > 0.0 else 0.0


def square(x: Scalar) -> Scalar:
    if isinstance(x, Node):
        return Node(x.tape, x.value * x.value, _SQUARE, x, None)
    return x * x


def maximum_with(x: Scalar, floor: float) -> Scalar:
    """max(x, floor) for a constant floor, via the max0 kink."""
    return max0(x - floor) + floor


def lincomb(terms: Iterable[tuple[float, Scalar]], const: float = 0.0) -> Scalar:
    """Fused affine combination ``sum(coef * x) + const``.

    Terms whose operand is a plain float fold into the constant. With no Node
    operands the result is a float; otherwise a single tape record, which is
    what keeps long rollouts from drowning in add nodes.
    """
    coefs: list[float] = []
    nodes: list[Node] = []
    acc = float(const)
    value = 0.0
    for coef, x in terms:
        if isinstance(x, Node):
            coefs.append(coef)
            nodes.append(x)
            value += coef * x.value
        else:
            acc += coef * x
    if not nodes:
        return acc
    tape = nodes[0].tape
    for n in nodes:
        if n.tape is not tape:
            raise TapeError("operands of lincomb live on different tapes")
    return _affine(tape, value + acc, tuple(coefs), tuple(nodes), acc)


# -- backward pass -------------------------------------------------------


def backward(root: Node) -> None:
    """Reverse sweep seeding d(root)/d(root) = 1.

    Deposits adjoints on every node of the root's tape; read parameter
    gradients from the parameter nodes afterwards. Running backward twice on
    the same tape without :meth:`Tape.reset` is an error because adjoints
    accumulate in place.
    """
    if not isinstance(root, Node):
        raise TapeError("backward root must be a Node (is the loss a constant?)")
    tape = root.tape
    if tape.consumed:
        raise TapeError("backward already ran on this tape; call Tape.reset() first")
    tape.consumed = True
    root.grad = 1.0
    for node in reversed(tape.nodes):
        g = node.grad
        if g == 0.0:
            continue
        op = node.op
        if op == _LINCOMB:
            coefs = node.b[0]
            for coef, parent in zip(coefs, node.a):
                parent.grad += g * coef
        elif op == _ADD:
            node.a.grad += g
            node.b.grad += g
        elif op == _SUB:
            node.a.grad += g
            node.b.grad -= g
        elif op == _MUL:
            node.a.grad += g * node.b.value
            node.b.grad += g * node.a.value
        elif op == _DIV:
            inv = 1.0 / node.b.value
            node.a.grad += g * inv
            node.b.grad -= g * node.value * inv
        elif op == _EXP:
            node.a.grad += g * node.value
        elif op == _LOG1P:
            node.a.grad += g / (1.0 + node.a.value)
        elif op == _SIGMOID:
            node.a.grad += g * node.value * (1.0 - node.value)
        elif op == _MAX0:
            if node.a.value > 0.0:
                node.a.grad += g
        elif op == _SQUARE:
            node.a.grad += 2.0 * node.a.value * g
        # CONST and PARAM are leaves: nothing to propagate.


# -- parameters ----------------------------------------------------------


class ParameterStore:
    """Named scalar parameters with their current float values.

    Insertion order is the canonical parameter order everywhere (binding,
    gradient reports, serialization), which keeps runs reproducible.
    """

    def __init__(self) -> None:
        self._values: dict[str, float] = {}

    def add(self, name: str, value: float) -> None:
        if name in self._values:
            raise TapeError(f"parameter {name!r} already exists")
        self._values[name] = float(value)

    def get(self, name: str) -> float:
        return self._values[name]

    def set(self, name: str, value: float) -> None:
        if name not in self._values:
            raise TapeError(f"parameter {name!r} does not exist")
        self._values[name] = float(value)

    def names(self) -> list[str]:
        return list(self._values)

    def values(self) -> dict[str, float]:
        """Float snapshot usable directly by float-mode model code."""
        return dict(self._values)

    def load(self, values: Mapping[str, float]) -> None:
        for name, value in values.items():
            self.set(name, value)

    def bind(self, tape: Tape) -> dict[str, Node]:
        """One parameter node per entry, on the given tape."""
        return {name: tape.parameter(v) for name, v in self._values.items()}

    def __len__(self) -> int:
        return len(self._values)

    def __contains__(self, name: str) -> bool:
        return name in self._values


class GradientCheckReport:
    """Per-parameter analytic vs central-difference gradients."""

    def __init__(self, entries: list[dict], h: float, rel_tol: float, abs_floor: float):
        self.entries = entries
        self.h = h
        self.rel_tol = rel_tol
        self.abs_floor = abs_floor

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.entries)

    @property
    def max_rel_error(self) -> float:
        return max((e["rel_error"] for e in self.entries), default=0.0)

    def failures(self) -> list[dict]:
        return [e for e in self.entries if not e["passed"]]

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "rel_tol": self.rel_tol,
            "abs_floor": self.abs_floor,
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "parameters": self.entries,
        }


def gradient_check(
    store: ParameterStore,
    loss_fn: Callable[[Mapping[str, Scalar]], Scalar],
    h: float = 1e-5,
    rel_tol: float = 1e-4,
    abs_floor: float = 1e-8,
    names: Sequence[str] | None = None,
) -> GradientCheckReport:
    """Compare taped gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must accept a mapping from parameter name to either Nodes
    (tape mode) or floats (used here for the two-sided difference quotient).
    A parameter passes when ``|analytic - numeric|`` is within ``rel_tol``
    relative to the larger magnitude, with ``abs_floor`` as the absolute
    fallback for near-zero gradients.
    """
    tape = Tape()
    bound = store.bind(tape)
    root = loss_fn(bound)
    if not isinstance(root, Node):
        raise TapeError("gradient_check: loss did not depend on any parameter")
    backward(root)
    analytic = {name: bound[name].grad for name in store.names()}

    base = store.values()
    checked = list(names) if names is not None else store.names()
    entries = []
    for name in checked:
        probe = dict(base)
        probe[name] = base[name] + h
        f_plus = value_of(loss_fn(probe))
        probe[name] = base[name] - h
        f_minus = value_of(loss_fn(probe))
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[name]
        diff = abs(a - numeric)
        scale = max(abs(a), abs(numeric))
        rel = diff / scale if scale > 0.0 else 0.0
        passed = diff <= max(rel_tol * scale, abs_floor)
        entries.append(
            {
                "name": name,
                "analytic": a,
                "numeric": numeric,
                "rel_error": rel,
                "passed": passed,
            }
        )
    return GradientCheckReport(entries, h, rel_tol, abs_floor)
