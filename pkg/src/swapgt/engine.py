"""A small reverse-mode autodiff layer over numpy float64 arrays.

Only the operations the model needs are provided. Every op builds a new
:class:`Tensor` holding a closure that pushes the output gradient back to
its parents; :meth:`Tensor.backward` runs the closures in reverse
topological order.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

MAX_NDIM = 3


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim > MAX_NDIM:
            raise ValueError(f"tensors have at most {MAX_NDIM} axes, got shape {data.shape}")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable tensor."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self._accumulate(np.broadcast_to(grad, self.shape))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # intermediates are not inspected after the pass
                    node.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents if req else (), _backward=backward if req else None)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear algebra

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError as exc:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return _make(a.data * c, (a,), backward)


def mul(a, b) -> Tensor:
    """Elementwise product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError as exc:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """``a @ b`` for 2-D ``b`` (shared weights) or matching batched 3-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    if b.ndim == 3 and (a.ndim != 3 or a.shape[0] != b.shape[0]):
        raise ValueError(f"matmul: batch mismatch {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.ndim == 2:
                a2 = a.data.reshape(-1, a.shape[-1])
                b._accumulate(a2.T @ g.reshape(-1, g.shape[-1]))
            else:
                b._accumulate(np.swapaxes(a.data, -1, -2) @ g)

    return _make(out_data, (a, b), backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)

    def backward(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    return _make(np.swapaxes(a.data, -1, -2), (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape

    def backward(g):
        a._accumulate(g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def getitem(a, index) -> Tensor:
    """Basic (slice / integer) indexing."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] += g
        a._accumulate(full)

    return _make(a.data[index], (a,), backward)


def take_rows(a, rows) -> Tensor:
    """Gather rows of a 2-D tensor; repeated rows get summed gradients."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    if a.ndim != 2 or rows.ndim != 1:
        raise ValueError("take_rows expects a 2-D tensor and a 1-D index")

    def backward(g):
        scatter = sp.csr_matrix(
            (np.ones(rows.size), (rows, np.arange(rows.size))), shape=(a.shape[0], rows.size)
        )
        a._accumulate(scatter @ g)

    return _make(a.data[rows], (a,), backward)


def concat(tensors, axis=-1) -> Tensor:
    """Concatenate along the last axis."""
    tensors = [as_tensor(t) for t in tensors]
    if axis not in (-1, tensors[0].ndim - 1):
        raise ValueError("concat supports the last axis only")
    lead = {t.shape[:-1] for t in tensors}
    if len(lead) != 1:
        raise ValueError(f"concat: leading shapes differ {sorted(lead)}")
    widths = [t.shape[-1] for t in tensors]
    cuts = np.cumsum(widths)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, cuts, axis=-1)):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=-1), tuple(tensors), backward)


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# nonlinearities and normalization

def row_softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[-1] == 0:
        raise ValueError("softmax over an empty row")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        a._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _make(y, (a,), backward)


LN_EPS = 1e-5


def layer_norm(x, gamma, beta, eps=LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then ``gamma * xhat + beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != gamma.shape:
        raise ValueError("layer_norm: scale/shift width must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    width = x.shape[-1]

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, width).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, width).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            x._accumulate(
                inv_std
                * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            )

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu_value(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_derivative(x):
    th = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)


def gelu(a) -> Tensor:
    """Tanh-approximation GELU."""
    a = as_tensor(a)

    def backward(g):
        # looked up at call time so tests can mutate it
        a._accumulate(g * gelu_derivative(a.data))

    return _make(gelu_value(a.data), (a,), backward)


def dropout(a, rate: float, rng=None, training=True, mask=None) -> Tensor:
    """Inverted dropout. Identity when ``training`` is false or ``rate == 0``.

    A precomputed boolean ``mask`` (True = keep) freezes the pattern.
    """
    a = as_tensor(a)
    if not training or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if mask is None:
        mask = rng.random(a.shape) >= rate
    factor = mask / (1.0 - rate)

    def backward(g):
        a._accumulate(g * factor)

    return _make(a.data * factor, (a,), backward)


def l2_normalize(a) -> Tensor:
    """Scale each vector along the last axis to unit norm; zero vectors stay zero."""
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    y = np.where(norm > 0, a.data / safe, 0.0)

    def backward(g):
        proj = (g * y).sum(axis=-1, keepdims=True)
        a._accumulate(np.where(norm > 0, (g - y * proj) / safe, 0.0))

    return _make(y, (a,), backward)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[label]``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError("softmax_cross_entropy expects (N, c) logits and N labels")
    N = logits.shape[0]
    if N == 0:
        raise ValueError("cross entropy over zero rows")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(N), labels]
    probs = np.exp(z - logsum[:, None])

    def backward(g):
        d = probs.copy()
        d[np.arange(N), labels] -= 1.0
        logits._accumulate(d * (float(g) / N))

    return _make(nll.mean(), (logits,), backward)


# ---------------------------------------------------------------------------
# parameters and gradient checking

class ParamStore:
    """Ordered named parameters plus free-form architecture metadata."""

    def __init__(self, meta=None):
        self._params = {}
        self.meta = dict(meta or {})

    def add(self, name, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError(f"parameter {name!r} is not finite")
        t = Tensor(value, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def num_values(self) -> int:
        return int(np.sum([t.data.size for t in self._params.values()]))

    def state(self) -> dict:
        """Deep copy of parameter arrays."""
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state(self, state):
        for k, t in self._params.items():
            if state[k].shape != t.shape:
                raise ValueError(f"shape mismatch for {k}")
            t.data = np.array(state[k], dtype=np.float64)

    def copy(self) -> "ParamStore":
        out = ParamStore(self.meta)
        for k, v in self.state().items():
            out.add(k, v)
        return out


def grad_errors(f, params: ParamStore, eps=1e-5) -> dict:
    """Per-parameter max relative error of analytic vs central-difference gradients.

    ``f()`` must build and return a scalar :class:`Tensor` from the current
    values in ``params``. Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    params.zero_grad()
    out = f()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("objective is not finite at the probe point")
    out.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy() for k, t in params.items()}

    errors = {}
    for name, t in params.items():
        worst = 0.0
        flat = t.data.reshape(-1)
        ana = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = f().item()
            flat[idx] = orig - eps
            down = f().item()
            flat[idx] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise FloatingPointError(f"objective not finite while probing {name}[{idx}]")
            num = (up - down) / (2.0 * eps)
            a = ana[idx]
            rel = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, rel)
        errors[name] = worst
    params.zero_grad()
    return errors


def grad_check(f, params: ParamStore, eps=1e-5) -> float:
    """Maximum relative gradient error over every coordinate of every parameter."""
    return max(grad_errors(f, params, eps).values())
