"""Reverse-mode automatic differentiation over numpy arrays.

A Node wraps a value grid and records the operation that produced it.
backward() walks the graph once in reverse topological order; gradients from
multiple uses of the same Node accumulate additively. Training normally runs
in float32; gradient checking should build float64 nodes.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class Node:
    """A value in the computation graph, with an optional gradient slot."""

    __slots__ = ("value", "grad", "requires_grad", "op", "_parents", "_backward", "op_state")

    def __init__(self, value, requires_grad=False, op="leaf", parents=(), backward=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        self.op_state = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter:
    """A named trainable Node.

    `decay` marks eligibility for decoupled weight decay; `zero_row` pins one
    row (the PAD embedding) to zero: it receives no gradient, no decay, and
    no update.
    """

    def __init__(self, name: str, value, decay: bool = True, zero_row: int | None = None):
        self.name = name
        self.node = Node(np.asarray(value), requires_grad=True, op="parameter")
        self.decay = decay
        self.zero_row = zero_row

    @property
    def value(self):
        return self.node.value

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.node.value.shape})"


def philox(seed) -> np.random.Generator:
    """Counter-based generator; identical draw sequences for identical seeds."""
    return np.random.Generator(np.random.Philox(seed))


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32):
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def as_node(x, dtype=None) -> Node:
    if isinstance(x, Node):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Node(arr, requires_grad=False, op="const")


def _needs_grad(*nodes) -> bool:
    return any(n.requires_grad for n in nodes)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast when producing it."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(parent: Node, grad: np.ndarray):
    if not parent.requires_grad:
        return
    grad = _unbroadcast(np.asarray(grad), parent.value.shape)
    if parent.grad is None:
        parent.grad = np.zeros_like(parent.value)
    parent.grad += grad.astype(parent.value.dtype, copy=False)


def backward(loss: Node):
    """Populate grads of every reachable requires_grad Node with d(loss)/d(node)."""
    if loss.value.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        value = a.value + b.value
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.value.shape} and {b.value.shape}") from None
    if not _needs_grad(a, b):
        return Node(value, op="add")

    def _bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return Node(value, requires_grad=True, op="add", parents=(a, b), backward=_bw)


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        value = a.value * b.value
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.value.shape} and {b.value.shape}") from None
    if not _needs_grad(a, b):
        return Node(value, op="mul")

    def _bw(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return Node(value, requires_grad=True, op="mul", parents=(a, b), backward=_bw)


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.value.shape} and {b.value.shape}")
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.value.shape} @ {b.value.shape}")
    value = a.value @ b.value
    if not _needs_grad(a, b):
        return Node(value, op="matmul")

    def _bw(g):
        _accumulate(a, g @ np.swapaxes(b.value, -1, -2))
        _accumulate(b, np.swapaxes(a.value, -1, -2) @ g)

    return Node(value, requires_grad=True, op="matmul", parents=(a, b), backward=_bw)


def embedding_lookup(table: Node, ids) -> Node:
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding_lookup: ids must be integers, got {ids.dtype}")
    if table.value.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.value.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
        raise ShapeError(
            f"embedding_lookup: id out of range for table with {table.value.shape[0]} rows"
        )
    value = table.value[ids]
    if not table.requires_grad:
        return Node(value, op="embedding_lookup")

    def _bw(g):
        dtable = np.zeros_like(table.value)
        np.add.at(dtable, ids, g)
        _accumulate(table, dtable)

    return Node(value, requires_grad=True, op="embedding_lookup", parents=(table,), backward=_bw)


def concat(nodes, axis: int) -> Node:
    nodes = [as_node(n) for n in nodes]
    try:
        value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = [n.value.shape for n in nodes]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    if not _needs_grad(*nodes):
        return Node(value, op="concat")
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum(sizes)[:-1]

    def _bw(g):
        for n, piece in zip(nodes, np.split(g, offsets, axis=axis)):
            _accumulate(n, piece)

    return Node(value, requires_grad=True, op="concat", parents=tuple(nodes), backward=_bw)


def reshape(a: Node, shape) -> Node:
    a = as_node(a)
    value = a.value.reshape(shape)
    if not a.requires_grad:
        return Node(value, op="reshape")

    def _bw(g):
        _accumulate(a, g.reshape(a.value.shape))

    return Node(value, requires_grad=True, op="reshape", parents=(a,), backward=_bw)


def swapaxes(a: Node, axis1: int, axis2: int) -> Node:
    a = as_node(a)
    value = np.swapaxes(a.value, axis1, axis2)
    if not a.requires_grad:
        return Node(value, op="swapaxes")

    def _bw(g):
        _accumulate(a, np.swapaxes(g, axis1, axis2))

    return Node(value, requires_grad=True, op="swapaxes", parents=(a,), backward=_bw)


def conv1d_valid(x: Node, filters: Node) -> Node:
    """Valid 1-D convolution of [batch, seq, in_dim] with [maps, width, in_dim].

    Output is [batch, seq - width + 1, maps]; no implicit zero extension.
    """
    x, filters = as_node(x), as_node(filters)
    if x.value.ndim != 3 or filters.value.ndim != 3:
        raise ShapeError(
            f"conv1d_valid: expected 3-D input and filters, got {x.value.shape} and {filters.value.shape}"
        )
    batch, seq, in_dim = x.value.shape
    maps, width, f_dim = filters.value.shape
    if f_dim != in_dim:
        raise ShapeError(f"conv1d_valid: feature dims differ, input {in_dim} vs filters {f_dim}")
    t_out = seq - width + 1
    if t_out <= 0:
        raise ShapeError(f"conv1d_valid: input length {seq} shorter than filter width {width}")
    windows = np.lib.stride_tricks.sliding_window_view(x.value, width, axis=1)
    # [batch, t_out, in_dim, width] -> [batch, t_out, width * in_dim]
    windows = np.ascontiguousarray(windows.transpose(0, 1, 3, 2)).reshape(batch, t_out, width * in_dim)
    flat_filters = filters.value.reshape(maps, width * in_dim)
    value = windows @ flat_filters.T
    if not _needs_grad(x, filters):
        return Node(value, op="conv1d_valid")

    def _bw(g):
        if filters.requires_grad:
            df = np.einsum("btc,btk->ck", g, windows).reshape(maps, width, in_dim)
            _accumulate(filters, df)
        if x.requires_grad:
            dwin = (g @ flat_filters).reshape(batch, t_out, width, in_dim)
            dx = np.zeros_like(x.value)
            for i in range(width):
                dx[:, i : i + t_out, :] += dwin[:, :, i, :]
            _accumulate(x, dx)

    return Node(value, requires_grad=True, op="conv1d_valid", parents=(x, filters), backward=_bw)


def relu(a: Node) -> Node:
    a = as_node(a)
    value = np.maximum(a.value, 0)
    if not a.requires_grad:
        return Node(value, op="relu")

    def _bw(g):
        _accumulate(a, g * (a.value > 0))

    return Node(value, requires_grad=True, op="relu", parents=(a,), backward=_bw)


def max_over_time(x: Node, valid_mask=None) -> Node:
    """Maximum over the time axis of [batch, time, channels].

    Positions where `valid_mask` is 0 are excluded. The winning index per
    (batch, channel) is recorded in op_state; ties break toward the lowest
    index, and the subgradient routes there alone.
    """
    x = as_node(x)
    if x.value.ndim != 3:
        raise ShapeError(f"max_over_time: expected [batch, time, channels], got {x.value.shape}")
    batch, time, channels = x.value.shape
    vals = x.value
    if valid_mask is not None:
        valid = np.asarray(valid_mask).astype(bool)
        if valid.shape != (batch, time):
            raise ShapeError(
                f"max_over_time: mask shape {valid.shape} does not match {(batch, time)}"
            )
        rows_ok = valid.any(axis=1)
        if not rows_ok.all():
            bad = int(np.flatnonzero(~rows_ok)[0])
            raise ShapeError(f"max_over_time: example {bad} has no valid positions")
        vals = np.where(valid[:, :, None], vals, -np.inf)
    argmax = vals.argmax(axis=1)  # [batch, channels]
    b_idx = np.arange(batch)[:, None]
    c_idx = np.arange(channels)[None, :]
    value = vals[b_idx, argmax, c_idx]
    out: Node
    if not x.requires_grad:
        out = Node(value, op="max_over_time")
        out.op_state = {"argmax": argmax}
        return out

    def _bw(g):
        dx = np.zeros_like(x.value)
        np.add.at(dx, (b_idx, argmax, c_idx), g)
        _accumulate(x, dx)

    out = Node(value, requires_grad=True, op="max_over_time", parents=(x,), backward=_bw)
    out.op_state = {"argmax": argmax}
    return out


def sum_(a: Node, axis=None, keepdims: bool = False) -> Node:
    a = as_node(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)
    if not a.requires_grad:
        return Node(value, op="sum")

    def _bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.value.shape))

    return Node(value, requires_grad=True, op="sum", parents=(a,), backward=_bw)


def mean(a: Node, axis=None, keepdims: bool = False) -> Node:
    a = as_node(a)
    value = a.value.mean(axis=axis, keepdims=keepdims)
    count = a.value.size if axis is None else a.value.shape[axis]
    if not a.requires_grad:
        return Node(value, op="mean")

    def _bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.value.shape) / count)

    return Node(value, requires_grad=True, op="mean", parents=(a,), backward=_bw)


def softmax(a: Node, axis: int = -1, additive_mask=None) -> Node:
    """Softmax along one axis, with an optional additive mask (e.g. large
    negative values on padded keys) applied before normalization."""
    a = as_node(a)
    scores = a.value if additive_mask is None else a.value + np.asarray(additive_mask, dtype=a.value.dtype)
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=axis, keepdims=True)
    if not a.requires_grad:
        return Node(value, op="softmax")

    def _bw(g):
        inner = (g * value).sum(axis=axis, keepdims=True)
        _accumulate(a, (g - inner) * value)

    return Node(value, requires_grad=True, op="softmax", parents=(a,), backward=_bw)


def softmax_cross_entropy(logits: Node, labels) -> Node:
    """Per-example cross-entropy of softmax(logits) against integer labels.

    logits is [batch, classes]; returns a [batch] Node.
    """
    logits = as_node(logits)
    labels = np.asarray(labels)
    if logits.value.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be 2-D, got {logits.value.shape}")
    batch, classes = logits.value.shape
    if labels.shape != (batch,):
        raise ShapeError(
            f"softmax_cross_entropy: labels shape {labels.shape} does not match batch {batch}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeError(f"softmax_cross_entropy: label out of range [0, {classes})")
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    value = lse - shifted[np.arange(batch), labels]
    if not logits.requires_grad:
        return Node(value, op="softmax_cross_entropy")

    def _bw(g):
        probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        probs[np.arange(batch), labels] -= 1.0
        _accumulate(logits, probs * np.asarray(g)[:, None])

    return Node(
        value, requires_grad=True, op="softmax_cross_entropy", parents=(logits,), backward=_bw
    )


def dropout(a: Node, p: float, train: bool, rng: np.random.Generator | None = None, mask=None) -> Node:
    """Inverted dropout: kept activations are scaled by 1/(1-p) so inference
    needs no rescaling. Identity when train is False or p == 0."""
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout: p must be in [0, 1), got {p}")
    a = as_node(a)
    if not train or p == 0.0:
        return a
    if mask is None:
        if rng is None:
            raise ValueError("dropout: training mode needs an rng or an explicit mask")
        mask = (rng.random(a.value.shape) >= p) / (1.0 - p)
    mask = np.asarray(mask, dtype=a.value.dtype)
    value = a.value * mask
    if not a.requires_grad:
        return Node(value, op="dropout")

    def _bw(g):
        _accumulate(a, g * mask)

    return Node(value, requires_grad=True, op="dropout", parents=(a,), backward=_bw)


def layer_norm(x: Node, gain: Node, bias: Node, eps: float = 1e-5) -> Node:
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = as_node(x), as_node(gain), as_node(bias)
    dim = x.value.shape[-1]
    if gain.value.shape != (dim,) or bias.value.shape != (dim,):
        raise ShapeError(
            f"layer_norm: gain/bias must have shape ({dim},), got {gain.value.shape} and {bias.value.shape}"
        )
    mu = x.value.mean(axis=-1, keepdims=True)
    var = ((x.value - mu) ** 2).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * istd
    value = xhat * gain.value + bias.value
    if not _needs_grad(x, gain, bias):
        return Node(value, op="layer_norm")

    def _bw(g):
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).reshape(-1, dim).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, np.asarray(g).reshape(-1, dim).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gain.value
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accumulate(x, (dxhat - m1 - xhat * m2) * istd)

    return Node(value, requires_grad=True, op="layer_norm", parents=(x, gain, bias), backward=_bw)


def linear(x: Node, weight: Node, bias: Node | None = None) -> Node:
    """Affine map over the last axis: x @ weight (+ bias)."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


_MASK_NEG = -1e9  # finite so fully-masked score rows softmax to uniform, not NaN


def scaled_dot_product_attention(
    query: Node, key: Node, value: Node, num_heads: int, key_mask=None
) -> Node:
    """Multi-head attention over already-projected [batch, seq, dim] inputs.

    `key_mask` is a [batch, seq] 0/1 grid; masked keys receive an additive
    -1e9 score, which underflows to exactly zero attention weight whenever
    any real key is present.
    """
    query, key, value = as_node(query), as_node(key), as_node(value)
    batch, seq, dim = query.value.shape
    if dim % num_heads != 0:
        raise ShapeError(f"attention: dim {dim} not divisible by {num_heads} heads")
    if key.value.shape != query.value.shape or value.value.shape != query.value.shape:
        raise ShapeError(
            f"attention: q/k/v shapes differ: {query.value.shape}, {key.value.shape}, {value.value.shape}"
        )
    head_dim = dim // num_heads

    def split_heads(n):
        return swapaxes(reshape(n, (batch, seq, num_heads, head_dim)), 1, 2)

    q = split_heads(query)
    k = split_heads(key)
    v = split_heads(value)
    scores = mul(matmul(q, swapaxes(k, -1, -2)), 1.0 / np.sqrt(head_dim))
    additive = None
    if key_mask is not None:
        key_mask = np.asarray(key_mask)
        additive = ((1.0 - key_mask) * _MASK_NEG)[:, None, None, :]
    weights = softmax(scores, axis=-1, additive_mask=additive)
    mixed = matmul(weights, v)
    return reshape(swapaxes(mixed, 1, 2), (batch, seq, dim))


# ---------------------------------------------------------------------------
# gradient checking


class GradCheckReport:
    def __init__(self, max_rel_err: float, tol: float):
        self.max_rel_err = max_rel_err
        self.tol = tol
        self.passed = max_rel_err <= tol

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return f"GradCheckReport(max_rel_err={self.max_rel_err:.3e}, tol={self.tol:.1e}, {status})"


def grad_check(f, *points, eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare f's analytic gradients against central finite differences.

    f takes one Node per point and returns a scalar Node. Points are promoted
    to float64. The error at each coordinate is |analytic - numeric| divided
    by max(1, |analytic|, |numeric|); the report carries the maximum.
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    values = [np.asarray(p, dtype=np.float64) for p in points]
    nodes = [Node(v.copy(), requires_grad=True) for v in values]
    out = f(*nodes)
    if out.value.size != 1:
        raise ShapeError(f"grad_check: f must be scalar-valued, got shape {out.value.shape}")
    backward(out)
    analytic = [
        n.grad.copy() if n.grad is not None else np.zeros_like(n.value) for n in nodes
    ]

    def eval_at(idx, coord, bump):
        probe = [v.copy() for v in values]
        probe[idx].flat[coord] += bump
        result = f(*[Node(v) for v in probe])
        return float(result.value.reshape(()))

    max_err = 0.0
    for i, v in enumerate(values):
        for coord in range(v.size):
            plus = eval_at(i, coord, eps)
            minus = eval_at(i, coord, -eps)
            numeric = (plus - minus) / (2.0 * eps)
            ana = float(analytic[i].flat[coord])
            err = abs(ana - numeric) / max(1.0, abs(ana), abs(numeric))
            max_err = max(max_err, err)
    return GradCheckReport(max_err, tol)
