"""Dense float64 tensors with a tape-style reverse-mode autodiff graph.

Operations executed while a :class:`Graph` is active are appended to its
node list, so the list is topologically ordered by construction and
:func:`backward` is a single reverse sweep.  Outside a graph the same
functions just compute values, which is what inference uses.

    >>> w = Parameter(np.array([1.0, 2.0]), name="w")
    >>> with Graph() as g:
    ...     loss = total(w * w)
    >>> g.param_grads(loss)["w"]
    array([2., 4.])
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DimensionError, GradientError, VocabularyError

__all__ = [
    "DimensionError",
    "Graph",
    "GradientError",
    "ParamSet",
    "Parameter",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "embedding",
    "getitem",
    "grad_check",
    "linear",
    "log_softmax",
    "matmul",
    "mul",
    "reshape",
    "scale",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "tanh",
    "total",
]


class Tensor:
    __slots__ = ("data", "graph", "node")

    def __init__(self, data) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.graph: Graph | None = None
        self.node: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return total(self, axis)


class Parameter(Tensor):
    """Leaf tensor that receives a gradient when used inside a graph."""

    __slots__ = ("name", "bias")

    def __init__(self, data, name: str = "", bias: bool = False) -> None:
        super().__init__(data)
        self.name = name
        self.bias = bias


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("op", "inputs", "out", "vjp", "needs_grad")

    def __init__(self, op, inputs, out, vjp, needs_grad):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.vjp = vjp
        self.needs_grad = needs_grad


_ACTIVE: list["Graph"] = []


class Graph:
    """Append-only record of the operations in one forward pass."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self.params: dict[int, Parameter] = {}
        self._leaves: dict[int, int] = {}

    def __enter__(self) -> "Graph":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def node_id(self, t: Tensor) -> int:
        if t.graph is self:
            return t.node
        key = id(t)
        nid = self._leaves.get(key)
        if nid is None:
            is_param = isinstance(t, Parameter)
            nid = len(self.nodes)
            self.nodes.append(_Node("param" if is_param else "const", (), t, None, is_param))
            self._leaves[key] = nid
            if is_param:
                self.params[nid] = t
        return nid

    def backward(self, root: Tensor) -> dict[int, np.ndarray]:
        return backward(self, root)

    def param_grads(self, root: Tensor) -> dict[str, np.ndarray]:
        """Gradients keyed by parameter name."""
        grads = backward(self, root)
        return {self.params[nid].name: g for nid, g in grads.items()}


def _current() -> Graph | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _record(op: str, value: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(value)
    g = _current()
    if g is None:
        return out
    ids = tuple(g.node_id(t) for t in inputs)
    nodes = g.nodes
    needs = any(nodes[i].needs_grad for i in ids)
    nodes.append(_Node(op, ids, out, vjp if needs else None, needs))
    out.graph = g
    out.node = len(nodes) - 1
    return out


def backward(graph: Graph, root: Tensor) -> dict[int, np.ndarray]:
    """Gradient of a scalar ``root`` with respect to every parameter node.

    Contributions are summed in reverse node order; parameters the root does
    not depend on get a zero gradient.
    """
    if root.graph is not graph:
        raise GradientError("root tensor was not produced inside this graph")
    if root.data.size != 1:
        raise GradientError(f"backward needs a scalar root, got shape {root.shape}")
    nodes = graph.nodes
    grads: list[np.ndarray | None] = [None] * (root.node + 1)
    grads[root.node] = np.ones_like(root.data)
    for k in range(root.node, -1, -1):
        g = grads[k]
        if g is None:
            continue
        node = nodes[k]
        if node.vjp is None:
            continue
        for i, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not nodes[i].needs_grad:
                continue
            grads[i] = gi if grads[i] is None else grads[i] + gi
        if node.op != "param":
            grads[k] = None
    out = {}
    for nid, p in graph.params.items():
        g = grads[nid] if nid < len(grads) else None
        out[nid] = np.zeros_like(p.data) if g is None else g
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not conform") from None


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a.data, b.data)
    sa, sb = a.shape, b.shape
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a.data, b.data)
    sa, sb = a.shape, b.shape
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a.data, b.data)
    da, db = a.data, b.data
    return _record("mul", da * db, (a, b),
                   lambda g: (_unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _record("scale", a.data * c, (a,), lambda g: (g * c,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _record("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _record("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


# products ------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy semantics for operands of rank 1 to 3."""
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.ndim == 0 or B.ndim == 0 or A.shape[-1] != B.shape[0 if B.ndim == 1 else -2]:
        raise DimensionError(f"matmul: shapes {A.shape} and {B.shape} do not conform")
    try:
        out = A @ B
    except ValueError:
        raise DimensionError(f"matmul: shapes {A.shape} and {B.shape} do not conform") from None

    def vjp(g):
        if B.ndim == 1:
            ga = np.multiply.outer(g, B)
            gb = np.tensordot(A, g, axes=(tuple(range(A.ndim - 1)), tuple(range(g.ndim))))
        elif A.ndim == 1:
            ga = B @ g
            gb = np.multiply.outer(A, g)
        elif B.ndim == 2:
            ga = g @ B.T
            k, m = B.shape
            gb = A.reshape(-1, k).T @ g.reshape(-1, m)
        else:
            ga = _unbroadcast(g @ np.swapaxes(B, -1, -2), A.shape)
            gb = _unbroadcast(np.swapaxes(A, -1, -2) @ g, B.shape)
        return ga, gb

    return _record("matmul", out, (a, b), vjp)


def linear(x, w, b=None) -> Tensor:
    """Affine map ``x @ w.T + b`` applied to the last axis of ``x``.

    ``w`` is stored as (out, in) so a single vector input reads as the usual
    matrix-vector product ``w x + b``.
    """
    x, w = as_tensor(x), as_tensor(w)
    X, W = x.data, w.data
    if W.ndim != 2 or X.shape[-1] != W.shape[1]:
        raise DimensionError(f"linear: input {X.shape} does not conform to weight {W.shape}")
    out = X @ W.T
    inputs = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise DimensionError(f"linear: bias {b.shape} does not match weight {W.shape}")
        out = out + b.data
        inputs.append(b)
    n_in, n_out = W.shape[1], W.shape[0]

    def vjp(g):
        g2 = g.reshape(-1, n_out)
        gx = g @ W
        gw = g2.T @ X.reshape(-1, n_in)
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _record("linear", out, inputs, vjp)


# structure -----------------------------------------------------------------

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: shapes {[t.shape for t in ts]} do not conform") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _record("concat", out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise DimensionError(f"stack: shapes {[t.shape for t in ts]} differ") from None
    n = len(ts)
    return _record("stack", out, ts,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {old} as {shape}") from None
    return _record("reshape", out, (a,), lambda g: (g.reshape(old),))


def _is_fancy(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (np.ndarray, list)) for k in parts)


def getitem(a, key) -> Tensor:
    """Row selection, slicing and integer-array gather with scatter-add backward."""
    a = as_tensor(a)
    try:
        out = a.data[key]
    except IndexError as e:
        raise DimensionError(f"getitem: {e} (shape {a.shape})") from None
    shape = a.shape
    fancy = _is_fancy(key)

    def vjp(g):
        full = np.zeros(shape)
        if fancy:
            np.add.at(full, key, g)
        else:
            full[key] += g
        return (full,)

    return _record("getitem", np.array(out, dtype=np.float64), (a,), vjp)


def embedding(table, ids) -> Tensor:
    """Gather columns of a (dim, vocab) table; output shape is ``ids.shape + (dim,)``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    dim, vocab = table.shape
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise VocabularyError(f"embedding: id out of range for vocabulary of size {vocab}")
    out = table.data.T[ids]

    def vjp(g):
        full = np.zeros((vocab, dim))
        np.add.at(full, ids, g)
        return (full.T,)

    return _record("embedding", out, (table,), vjp)


# reductions and normalisation ---------------------------------------------

def total(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", out, (a,), vjp)


def softmax(a, mask=None) -> Tensor:
    """Softmax over the last axis; positions with ``mask == 0`` get weight exactly 0."""
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise GradientError("softmax: a row has every position masked")
        x = np.where(mask, x, -np.inf)
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record("softmax", y, (a,), vjp)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _record("log_softmax", out, (a,),
                   lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


# parameters ----------------------------------------------------------------

class ParamSet:
    """Named parameters in insertion order."""

    def __init__(self) -> None:
        self._params: OrderedDict[str, Parameter] = OrderedDict()

    def add(self, name: str, value, bias: bool = False) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(np.array(value, dtype=np.float64), name=name, bias=bias)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self) -> list[str]:
        return list(self._params)

    def size(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self._params.items()}

    def subset(self, names) -> "ParamSet":
        """A view sharing the named parameters (same objects, same order as given)."""
        out = ParamSet()
        for k in names:
            out._params[k] = self._params[k]
        return out

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for k, p in self._params.items():
            out.add(k, p.data.copy(), bias=p.bias)
        return out


def grad_check(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet,
               eps: float = 1e-5) -> float:
    """Largest relative error between backward() and central differences.

    Every scalar of every parameter is probed, so keep the model tiny.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    with Graph() as g:
        loss = loss_fn(params)
    analytic = g.param_grads(loss)
    worst = 0.0
    for name, p in params.items():
        a_grad = analytic.get(name, np.zeros_like(p.data))
        flat = p.data.reshape(-1)
        a_flat = a_grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = loss_fn(params).item()
            flat[i] = orig - eps
            fm = loss_fn(params).item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise GradientError(f"non-finite loss probing {name}[{i}]")
            num = (fp - fm) / (2.0 * eps)
            a = a_flat[i]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
