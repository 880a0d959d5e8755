"""
Scalar reverse-mode differentiation.

A Tape is an append-only record of scalar nodes. Each node stores its value,
up to two parent ids and the local derivative with respect to each parent.
Var is the handle model code works with; it overloads arithmetic so the same
expressions run on a tape, on plain floats, or on numpy arrays.

The elementwise functions at the bottom dispatch on their argument: a Var
records a node, an ndarray is evaluated vectorized, anything else is a float.
"""

import math
import logging

import numpy as np
from scipy import special

from error_handling import StructuralError, ContractViolation

NO_PARENT = -1

# Leaf and arithmetic tags
TAG_LEAF = 'leaf'
TAG_CONST = 'const'


class Tape:
    """Append-only scalar computation record."""

    def __init__(self):
        self.values = []
        self.tags = []
        self._left = []
        self._right = []
        self._dleft = []
        self._dright = []
        self.leaves = []
        # adjoints folded into the prefix by fold()
        self._pending = []

    def __len__(self):
        return len(self.values)

    # ---------- recording ----------

    def record(self, tag, value, parents=(), local_grads=()):
        """
        Append a node and return its id.

        Args:
            tag: Operation tag
            value: Node value
            parents: Up to two ids already on the tape
            local_grads: d(node)/d(parent) for each parent

        Raises:
            StructuralError: parent id not on the tape, or malformed arguments
        """
        if len(parents) > 2 or len(parents) != len(local_grads):
            raise StructuralError(
                f"Node '{tag}' needs at most two parents with one local gradient each "
                f"(got {len(parents)} parents, {len(local_grads)} gradients)"
            )
        n = len(self.values)
        for p in parents:
            if not 0 <= p < n:
                raise StructuralError(f"Parent id {p} is not on the tape (length {n})")
        left = parents[0] if len(parents) > 0 else NO_PARENT
        right = parents[1] if len(parents) > 1 else NO_PARENT
        dleft = float(local_grads[0]) if len(parents) > 0 else 0.0
        dright = float(local_grads[1]) if len(parents) > 1 else 0.0
        self._push(tag, float(value), left, dleft, right, dright)
        return n

    def _push(self, tag, value, left=NO_PARENT, dleft=0.0, right=NO_PARENT, dright=0.0):
        idx = len(self.values)
        self.values.append(value)
        self.tags.append(tag)
        self._left.append(left)
        self._dleft.append(dleft)
        self._right.append(right)
        self._dright.append(dright)
        return Var(self, idx, value)

    def leaf(self, value):
        """Register a differentiable input."""
        var = self._push(TAG_LEAF, float(value))
        self.leaves.append(var.idx)
        return var

    def const(self, value):
        return self._push(TAG_CONST, float(value))

    def var(self, idx):
        if not 0 <= idx < len(self.values):
            raise StructuralError(f"Node id {idx} is not on the tape (length {len(self.values)})")
        return Var(self, idx, self.values[idx])

    def parents(self, idx):
        """Parent ids and local gradients of a node."""
        pairs = []
        if self._left[idx] != NO_PARENT:
            pairs.append((self._left[idx], self._dleft[idx]))
        if self._right[idx] != NO_PARENT:
            pairs.append((self._right[idx], self._dright[idx]))
        return pairs

    # ---------- reverse pass ----------

    def _check_node(self, node):
        if not isinstance(node, Var):
            raise StructuralError(f"Loss must be a tape node, got {type(node).__name__}")
        if node.tape is not self or not 0 <= node.idx < len(self.values):
            raise StructuralError(f"Loss node {node.idx} is not on this tape")

    def checkpoint(self):
        """
        Mark the current end of the tape as the start of a foldable segment.

        Returns:
            int: segment start id
        """
        n = len(self.values)
        if len(self._pending) < n:
            self._pending.extend([0.0] * (n - len(self._pending)))
        return n

    def fold(self, node, start, weight=1.0):
        """
        Back-propagate `weight * node` through the segment [start, end), keep the
        resulting adjoints of earlier nodes, and drop the segment from the tape.

        Folding the terms of a sum one segment at a time gives the same gradient
        as one backward pass over the whole sum, with memory bounded by a segment.
        """
        self._check_node(node)
        if len(self._pending) < start:
            raise StructuralError(f"Segment start {start} was not created by checkpoint()")
        if self.leaves and self.leaves[-1] >= start:
            raise StructuralError("Leaves cannot be registered inside a foldable segment")

        pending = self._pending
        if node.idx < start:
            pending[node.idx] += weight
            return

        adj = [0.0] * (len(self.values) - start)
        adj[node.idx - start] = weight
        left, right, dleft, dright = self._left, self._right, self._dleft, self._dright
        for i in range(node.idx, start - 1, -1):
            a = adj[i - start]
            if a == 0.0:
                continue
            p = left[i]
            if p != NO_PARENT:
                if p >= start:
                    adj[p - start] += a * dleft[i]
                else:
                    pending[p] += a * dleft[i]
                p = right[i]
                if p != NO_PARENT:
                    if p >= start:
                        adj[p - start] += a * dright[i]
                    else:
                        pending[p] += a * dright[i]
        self.truncate(start)

    def accumulate(self, node, adjoint):
        """
        Add an externally computed adjoint to a node; the next backward() carries it
        through the node's ancestors. Non-Var inputs are constants and are ignored.
        """
        if not isinstance(node, Var) or adjoint == 0.0:
            return
        self._check_node(node)
        self.checkpoint()
        self._pending[node.idx] += float(adjoint)

    def truncate(self, start):
        del self.values[start:]
        del self.tags[start:]
        del self._left[start:]
        del self._right[start:]
        del self._dleft[start:]
        del self._dright[start:]
        del self._pending[start:]

    def backward(self, loss=None):
        """
        Reverse pass from `loss` (plus anything folded earlier).

        Nodes are visited once each in strictly decreasing id order; only the
        adjoints of registered leaves are returned.

        Returns:
            np.ndarray: gradient over leaves, in registration order
        """
        n = len(self.values)
        adj = list(self._pending[:n]) + [0.0] * (n - min(len(self._pending), n))
        top = -1
        if any(adj):
            top = n - 1
        if loss is not None:
            self._check_node(loss)
            adj[loss.idx] += 1.0
            top = max(top, loss.idx)
        elif top < 0:
            raise StructuralError("Nothing to differentiate: no loss node and no folded segments")

        left, right, dleft, dright = self._left, self._right, self._dleft, self._dright
        for i in range(top, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            p = left[i]
            if p != NO_PARENT:
                adj[p] += a * dleft[i]
                p = right[i]
                if p != NO_PARENT:
                    adj[p] += a * dright[i]

        return np.array([adj[i] for i in self.leaves], dtype=np.float64)


class Var:
    """Handle to a tape node."""

    __slots__ = ('tape', 'idx', 'value')
    # keep numpy scalars from swallowing Var operands
    __array_ufunc__ = None

    def __init__(self, tape, idx, value):
        self.tape = tape
        self.idx = idx
        self.value = value

    def __repr__(self):
        return f"Var(id={self.idx}, value={self.value!r})"

    def __float__(self):
        return float(self.value)

    def _same_tape(self, other):
        if other.tape is not self.tape:
            raise StructuralError("Cannot combine nodes from different tapes")

    def __add__(self, other):
        if isinstance(other, Var):
            self._same_tape(other)
            return self.tape._push('add', self.value + other.value, self.idx, 1.0, other.idx, 1.0)
        return self.tape._push('add', self.value + other, self.idx, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            self._same_tape(other)
            return self.tape._push('sub', self.value - other.value, self.idx, 1.0, other.idx, -1.0)
        return self.tape._push('sub', self.value - other, self.idx, 1.0)

    def __rsub__(self, other):
        return self.tape._push('sub', other - self.value, self.idx, -1.0)

    def __mul__(self, other):
        if isinstance(other, Var):
            self._same_tape(other)
            return self.tape._push('mul', self.value * other.value, self.idx, other.value, other.idx, self.value)
        return self.tape._push('mul', self.value * other, self.idx, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            self._same_tape(other)
            inv = 1.0 / other.value
            return self.tape._push('div', self.value * inv, self.idx, inv,
                                   other.idx, -self.value * inv * inv)
        return self.tape._push('div', self.value / other, self.idx, 1.0 / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.value
        return self.tape._push('div', other * inv, self.idx, -other * inv * inv)

    def __neg__(self):
        return self.tape._push('neg', -self.value, self.idx, -1.0)

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise StructuralError("Only constant exponents are supported")
        return self.tape._push('pow', self.value ** exponent, self.idx,
                               exponent * self.value ** (exponent - 1))


def unary(tag, x, value, grad):
    """Record a one-parent node whose value and local derivative were computed by the caller."""
    return x.tape._push(tag, value, x.idx, grad)


def value_of(x):
    """Plain value of a Var, float or array."""
    return x.value if isinstance(x, Var) else x


# ==================== ELEMENTWISE FUNCTIONS ====================

_ASYMPTOTE = 30.0
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _sigmoid_scalar(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _softplus_scalar(x, beta):
    z = beta * x
    if z > _ASYMPTOTE:
        return x
    if z < -_ASYMPTOTE:
        return math.exp(z) / beta
    return math.log1p(math.exp(z)) / beta


def sigmoid(x):
    if isinstance(x, Var):
        s = _sigmoid_scalar(x.value)
        return unary('sigmoid', x, s, s * (1.0 - s))
    if isinstance(x, np.ndarray):
        return special.expit(x)
    return _sigmoid_scalar(float(x))


def softplus(x, beta=1.0):
    """(1/beta) * log(1 + exp(beta * x)), linear/zero asymptotes beyond |beta*x| > 30."""
    if isinstance(x, Var):
        return unary('softplus', x, _softplus_scalar(x.value, beta), _sigmoid_scalar(beta * x.value))
    if isinstance(x, np.ndarray):
        return np.logaddexp(0.0, beta * x) / beta
    return _softplus_scalar(float(x), beta)


def softplus_inverse(y, beta=1.0):
    """Raw value whose softplus is y (y > 0)."""
    if y <= 0:
        raise ContractViolation(f"softplus inverse needs a positive value, got {y}")
    z = beta * y
    if z > _ASYMPTOTE:
        return y
    return math.log(math.expm1(z)) / beta


def gelu(x):
    """Exact (erf) GELU."""
    if isinstance(x, Var):
        v = x.value
        cdf = 0.5 * (1.0 + math.erf(v / _SQRT2))
        pdf = _INV_SQRT_2PI * math.exp(-0.5 * v * v)
        return unary('gelu', x, v * cdf, cdf + v * pdf)
    if isinstance(x, np.ndarray):
        return 0.5 * x * (1.0 + special.erf(x / _SQRT2))
    x = float(x)
    return 0.5 * x * (1.0 + math.erf(x / _SQRT2))


def exp(x):
    if isinstance(x, Var):
        e = math.exp(x.value)
        return unary('exp', x, e, e)
    if isinstance(x, np.ndarray):
        return np.exp(x)
    return math.exp(float(x))


def log(x):
    if isinstance(x, Var):
        if x.value <= 0.0:
            raise ContractViolation(f"log of non-positive value {x.value}")
        return unary('log', x, math.log(x.value), 1.0 / x.value)
    if isinstance(x, np.ndarray):
        return np.log(x)
    x = float(x)
    if x <= 0.0:
        raise ContractViolation(f"log of non-positive value {x}")
    return math.log(x)


def absolute(x):
    """|x| with subgradient 0 at x = 0."""
    if isinstance(x, Var):
        v = x.value
        return unary('abs', x, abs(v), 1.0 if v > 0.0 else (-1.0 if v < 0.0 else 0.0))
    if isinstance(x, np.ndarray):
        return np.abs(x)
    return abs(float(x))


def elu_plus_one(x):
    if isinstance(x, Var):
        v = x.value
        if v > 0.0:
            return unary('elu1', x, v + 1.0, 1.0)
        e = math.exp(v)
        return unary('elu1', x, e, e)
    if isinstance(x, np.ndarray):
        return np.where(x > 0.0, x + 1.0, np.exp(np.minimum(x, 0.0)))
    x = float(x)
    return x + 1.0 if x > 0.0 else math.exp(x)


# ==================== GRADIENT CHECKING ====================

def finite_difference_gradient(fn, theta, h=1e-5, indices=None):
    """
    Central finite differences of a scalar function of a flat vector.

    Args:
        fn: Callable mapping a float64 vector to a float
        theta: Point of evaluation
        h: Step size
        indices: Optional subset of coordinates (others left at 0)
    """
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    coords = range(theta.size) if indices is None else indices
    for i in coords:
        plus = theta.copy()
        minus = theta.copy()
        plus[i] += h
        minus[i] -= h
        grad[i] = (fn(plus) - fn(minus)) / (2.0 * h)
    logging.debug(f"Finite-difference gradient over {len(list(coords))} coordinates (h={h})")
    return grad


def relative_error(a, b, floor=1e-8):
    """Coordinate-wise |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
