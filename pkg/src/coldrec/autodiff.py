"""Reverse-mode automatic differentiation on dense float64 numpy arrays.

The engine is eager: each op computes its forward value at construction
time and remembers a closure that propagates adjoints to its inputs.
`backward` walks the graph in reverse topological order and accumulates
gradients additively, so a leaf used in several places receives the sum
of all contributions.
"""

import numpy as np

# Toggle for the per-op finiteness check. Kept on by default; the cost is
# negligible at the graph sizes this project works with.
CHECK_FINITE = True


class ShapeMismatchError(ValueError):
    """Raised when an op receives operands with incompatible shapes."""


class NonFiniteValueError(FloatingPointError):
    """Raised when an op produces NaN or infinity."""


class BackwardBeforeForwardError(RuntimeError):
    """Raised when backward is called on a node without a forward value."""


class Var:
    """One node of the compute graph: a value, its adjoint, and parents."""

    __slots__ = ("value", "grad", "parents", "_backward", "op")

    def __init__(self, value, parents=(), backward=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self._backward = backward
        self.op = op
        if CHECK_FINITE and not np.all(np.isfinite(self.value)):
            raise NonFiniteValueError(f"non-finite value produced by op '{op}'")

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    # Convenience operators; the named functions below do the real work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)


def leaf(value):
    return Var(value, op="leaf")


def _as_var(x):
    return x if isinstance(x, Var) else Var(x, op="const")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_shapes(a, b, op):
    try:
        np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ShapeMismatchError(
            f"op '{op}': cannot combine shapes {a.value.shape} and {b.value.shape}"
        ) from None


def add(a, b):
    a, b = _as_var(a), _as_var(b)
    _binary_shapes(a, b, "add")

    def bw(g, out):
        return (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape))

    return Var(a.value + b.value, (a, b), bw, op="add")


def sub(a, b):
    a, b = _as_var(a), _as_var(b)
    _binary_shapes(a, b, "sub")

    def bw(g, out):
        return (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape))

    return Var(a.value - b.value, (a, b), bw, op="sub")


def mul(a, b):
    a, b = _as_var(a), _as_var(b)
    _binary_shapes(a, b, "mul")

    def bw(g, out):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return Var(a.value * b.value, (a, b), bw, op="mul")


def neg(a):
    a = _as_var(a)
    return Var(-a.value, (a,), lambda g, out: (-g,), op="neg")


def scale(a, c):
    """Multiply by a python/numpy constant (not differentiated through)."""
    a = _as_var(a)
    c = float(c)
    return Var(a.value * c, (a,), lambda g, out: (g * c,), op="scale")


def matmul(a, b):
    a, b = _as_var(a), _as_var(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeMismatchError(
            f"op 'matmul': shapes {a.value.shape} and {b.value.shape}"
        )

    def bw(g, out):
        return (g @ b.value.T, a.value.T @ g)

    return Var(a.value @ b.value, (a, b), bw, op="matmul")


def linear(x, w):
    """x @ w.T for a (n, d_in) batch and (d_out, d_in) weight."""
    x, w = _as_var(x), _as_var(w)
    if x.value.ndim != 2 or w.value.ndim != 2 or x.value.shape[1] != w.value.shape[1]:
        raise ShapeMismatchError(
            f"op 'linear': shapes {x.value.shape} and {w.value.shape}"
        )

    def bw(g, out):
        return (g @ w.value, g.T @ x.value)

    return Var(x.value @ w.value.T, (x, w), bw, op="linear")


def gather(x, idx):
    """Select rows of x; adjoints scatter-add back to the source rows."""
    x = _as_var(x)
    idx = np.asarray(idx, dtype=np.intp)
    if x.value.ndim < 1:
        raise ShapeMismatchError("op 'gather': scalar input")
    if idx.size and (idx.min() < 0 or idx.max() >= x.value.shape[0]):
        raise IndexError("gather index out of range")

    def bw(g, out):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx, g)
        return (gx,)

    return Var(x.value[idx], (x,), bw, op="gather")


def segment_sum(x, seg, num_segments):
    """Sum rows of x into `num_segments` buckets given by seg ids."""
    x = _as_var(x)
    seg = np.asarray(seg, dtype=np.intp)
    if seg.shape[0] != x.value.shape[0]:
        raise ShapeMismatchError("op 'segment_sum': segment ids do not match rows")
    out = np.zeros((num_segments,) + x.value.shape[1:], dtype=np.float64)
    np.add.at(out, seg, x.value)

    def bw(g, out_):
        return (g[seg],)

    return Var(out, (x,), bw, op="segment_sum")


def segment_softmax(scores, seg, num_segments):
    """Softmax of a 1-D score vector normalized independently per segment.

    Groups may have any size >= 1; each group's outputs are nonnegative
    and sum to one.
    """
    s = _as_var(scores)
    seg = np.asarray(seg, dtype=np.intp)
    if s.value.ndim != 1 or seg.shape[0] != s.value.shape[0]:
        raise ShapeMismatchError("op 'segment_softmax': expected matching 1-D inputs")
    hi = np.full(num_segments, -np.inf)
    np.maximum.at(hi, seg, s.value)
    ex = np.exp(s.value - hi[seg])
    tot = np.zeros(num_segments)
    np.add.at(tot, seg, ex)
    y = ex / tot[seg]

    def bw(g, out):
        dot = np.zeros(num_segments)
        np.add.at(dot, seg, g * y)
        return (y * (g - dot[seg]),)

    return Var(y, (s,), bw, op="segment_softmax")


def tanh(a):
    a = _as_var(a)
    y = np.tanh(a.value)
    return Var(y, (a,), lambda g, out: (g * (1.0 - out.value ** 2),), op="tanh")


def sigmoid(a):
    a = _as_var(a)
    y = np.where(a.value >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.value))),
                 np.exp(-np.abs(a.value)) / (1.0 + np.exp(-np.abs(a.value))))

    def bw(g, out):
        return (g * out.value * (1.0 - out.value),)

    return Var(y, (a,), bw, op="sigmoid")


def log(a):
    a = _as_var(a)
    return Var(np.log(a.value), (a,), lambda g, out: (g / a.value,), op="log")


def exp(a):
    a = _as_var(a)
    return Var(np.exp(a.value), (a,), lambda g, out: (g * out.value,), op="exp")


def log_sigmoid(a):
    """Numerically stable ln(sigmoid(x)) = -softplus(-x)."""
    a = _as_var(a)
    y = -(np.log1p(np.exp(-np.abs(a.value))) + np.maximum(-a.value, 0.0))

    def bw(g, out):
        sig_neg = np.where(a.value >= 0,
                           np.exp(-np.abs(a.value)) / (1.0 + np.exp(-np.abs(a.value))),
                           1.0 / (1.0 + np.exp(-np.abs(a.value))))
        return (g * sig_neg,)

    return Var(y, (a,), bw, op="log_sigmoid")


def leaky_relu(a, slope=0.2):
    a = _as_var(a)
    y = np.where(a.value > 0, a.value, slope * a.value)

    def bw(g, out):
        return (g * np.where(a.value > 0, 1.0, slope),)

    return Var(y, (a,), bw, op="leaky_relu")


def concat(parts, axis=0):
    parts = [_as_var(p) for p in parts]
    if not parts:
        raise ShapeMismatchError("op 'concat': empty input list")
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g, out):
        return tuple(np.split(g, splits, axis=axis))

    return Var(np.concatenate([p.value for p in parts], axis=axis),
               tuple(parts), bw, op="concat")


def reshape(a, shape):
    a = _as_var(a)
    return Var(a.value.reshape(shape), (a,),
               lambda g, out: (g.reshape(a.value.shape),), op="reshape")


def asum(a, axis=None):
    a = _as_var(a)

    def bw(g, out):
        if axis is None:
            return (np.full_like(a.value, g),)
        return (np.expand_dims(g, axis) * np.ones_like(a.value),)

    return Var(a.value.sum(axis=axis), (a,), bw, op="sum")


def rowwise_inner(a, b):
    """Per-row inner product of two (n, d) batches -> (n,)."""
    return asum(mul(a, b), axis=1)


def relation_project(w, rel_ids, x):
    """Project each row x[i] by the matrix w[rel_ids[i]].

    w has shape (num_relations, d_out, d_in); x has shape (n, d_in).
    """
    w, x = _as_var(w), _as_var(x)
    rel_ids = np.asarray(rel_ids, dtype=np.intp)
    if w.value.ndim != 3 or x.value.ndim != 2 or w.value.shape[2] != x.value.shape[1]:
        raise ShapeMismatchError(
            f"op 'relation_project': shapes {w.value.shape} and {x.value.shape}"
        )
    sel = w.value[rel_ids]
    y = np.einsum("npd,nd->np", sel, x.value)

    def bw(g, out):
        gw = np.zeros_like(w.value)
        np.add.at(gw, rel_ids, np.einsum("np,nd->npd", g, x.value))
        gx = np.einsum("npd,np->nd", sel, g)
        return (gw, gx)

    return Var(y, (w, x), bw, op="relation_project")


def forward(root):
    """Return the cached forward value of the graph root.

    Values are computed eagerly at op construction; this re-checks the
    cache exists and is finite.
    """
    if root.value is None:
        raise BackwardBeforeForwardError("graph has no forward value")
    if CHECK_FINITE and not np.all(np.isfinite(root.value)):
        raise NonFiniteValueError(f"non-finite value cached at op '{root.op}'")
    return root.value


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    return order


def backward(root, seed=None):
    """Accumulate adjoints through the graph; returns the visited nodes.

    Leaves that do not participate keep a zero gradient. Gradients on all
    nodes reachable from `root` are reset first, so repeated calls do not
    mix adjoints from earlier passes.
    """
    if root.value is None:
        raise BackwardBeforeForwardError("backward called before forward")
    order = _topo(root)
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(order):
        if node._backward is None:
            continue
        gs = node._backward(node.grad, node)
        for parent, g in zip(node.parents, gs):
            parent.grad = parent.grad + g
    return order


def grad(root, leaves):
    """Run backward and return the gradient for each requested leaf.

    Leaves that do not participate in the graph get a zero gradient.
    """
    visited = {id(n) for n in backward(root)}
    return [lf.grad if id(lf) in visited else np.zeros_like(lf.value)
            for lf in leaves]


def grad_check(builder, leaves, epsilon=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `builder` maps a list of leaf Vars to a scalar-output root. The error
    per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    arrays = [np.array(x, dtype=np.float64) for x in leaves]
    vs = [leaf(a) for a in arrays]
    root = builder(*vs)
    if root.value.ndim != 0:
        raise ShapeMismatchError("grad_check requires a scalar-output builder")
    analytic = grad(root, vs)
    worst = 0.0
    for k, a in enumerate(arrays):
        flat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            hi = float(builder(*[leaf(x) for x in arrays]).value)
            flat[j] = orig - epsilon
            lo = float(builder(*[leaf(x) for x in arrays]).value)
            flat[j] = orig
            numeric = (hi - lo) / (2.0 * epsilon)
            ref = analytic[k].reshape(-1)[j]
            worst = max(worst, abs(ref - numeric) / max(1.0, abs(ref)))
    return worst
