"""Dense 2-D tensor engine with reverse-mode differentiation.

Every value is a float64 matrix. Column vectors carry a single example; a
matrix with ``B`` columns carries a minibatch of ``B`` examples side by side,
which is how the recurrent models amortise Python overhead. Primitives that
mix per-row and per-column quantities (``add_bias``, ``scale_cols``,
``broadcast_rows``) exist for that batching and reduce their gradients back
to the broadcast operand's shape.

A graph is built implicitly as primitives are applied and is consumed by a
single call to :func:`backward`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "GraphError",
    "RngStream",
    "GradCheckReport",
    "tensor",
    "parameter",
    "constant",
    "zeros",
    "matmul",
    "elementwise",
    "add",
    "sub",
    "hadamard",
    "scale",
    "sigmoid",
    "tanh",
    "log",
    "exp",
    "sqrt",
    "square",
    "reciprocal",
    "relu",
    "one_minus",
    "clip",
    "transpose",
    "add_bias",
    "scale_cols",
    "broadcast_rows",
    "sum_all",
    "sum_rows",
    "concat_rows",
    "concat_cols",
    "take_cols",
    "embed",
    "log_softmax",
    "pick",
    "backward",
    "grad_check",
    "stable_sigmoid",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for a primitive."""


class DomainError(ValueError):
    """An entry lies outside a primitive's mathematical domain."""


class GraphError(RuntimeError):
    """Misuse of the computation graph (non-scalar root, reused graph)."""


class Tensor:
    """A node of the computation graph holding a 2-D float64 value.

    Leaves created with ``requires_grad=True`` are parameters; every other
    node records the primitive (``op``) that produced it and its parents.
    """

    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "_backward", "_consumed", "name")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        name: str | None = None,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
    ):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got array of shape {arr.shape}")
        self.value = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self._backward = backward_fn
        self._consumed = False
        self.name = name

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def data(self) -> np.ndarray:
        """Entries in row-major order."""
        return self.value.reshape(-1)

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.rows}x{self.cols}")
        return float(self.value[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor({self.rows}x{self.cols}, op={self.op}{label})"


def tensor(value, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=requires_grad, name=name)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def constant(value) -> Tensor:
    return Tensor(value)


def zeros(rows: int, cols: int = 1) -> Tensor:
    return Tensor(np.zeros((rows, cols)))


def _node(value: np.ndarray, op: str, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(value, requires_grad=True, op=op, parents=parents, backward_fn=backward_fn)
    return Tensor(value, op=op)


def _same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shapes {a.rows}x{a.cols} and {b.rows}x{b.cols} differ")


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions of {a.rows}x{a.cols} and {b.rows}x{b.cols} do not match")
    av, bv = a.value, b.value

    def bw(g):
        return g @ bv.T, av.T @ g

    return _node(av @ bv, "matmul", (a, b), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _node(a.value + b.value, "add", (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _node(a.value - b.value, "sub", (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    return _node(av * bv, "hadamard", (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.value * c, "scale", (a,), lambda g: (g * c,))


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function evaluated without overflowing ``exp``."""
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    s = stable_sigmoid(a.value)
    return _node(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.value)
    return _node(t, "tanh", (a,), lambda g: (g * (1.0 - t * t),))


def log(a: Tensor) -> Tensor:
    av = a.value
    if np.any(av <= 0):
        raise DomainError(f"log: non-positive entry {av.min()!r}")
    return _node(np.log(av), "log", (a,), lambda g: (g / av,))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.value)
    return _node(e, "exp", (a,), lambda g: (g * e,))


def sqrt(a: Tensor) -> Tensor:
    av = a.value
    if np.any(av < 0):
        raise DomainError(f"sqrt: negative entry {av.min()!r}")
    r = np.sqrt(av)
    return _node(r, "sqrt", (a,), lambda g: (g * 0.5 / r,))


def square(a: Tensor) -> Tensor:
    av = a.value
    return _node(av * av, "square", (a,), lambda g: (2.0 * g * av,))


def reciprocal(a: Tensor) -> Tensor:
    av = a.value
    if np.any(av == 0):
        raise DomainError("reciprocal: zero entry")
    r = 1.0 / av
    return _node(r, "reciprocal", (a,), lambda g: (-g * r * r,))


def relu(a: Tensor) -> Tensor:
    pos = a.value > 0
    return _node(np.where(pos, a.value, 0.0), "relu", (a,), lambda g: (g * pos,))


def one_minus(a: Tensor) -> Tensor:
    return _node(1.0 - a.value, "one_minus", (a,), lambda g: (-g,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp entries to ``[lo, hi]``; gradient passes only where unclamped."""
    av = a.value
    inside = (av >= lo) & (av <= hi)
    return _node(np.clip(av, lo, hi), "clip", (a,), lambda g: (g * inside,))


_ELEMENTWISE = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "hadamard": hadamard,
    "add": add,
    "sub": sub,
    "scale": scale,
    "log": log,
    "exp": exp,
    "sqrt": sqrt,
    "square": square,
    "reciprocal": reciprocal,
    "relu": relu,
    "one_minus": one_minus,
}


def elementwise(kind: str, *args) -> Tensor:
    """Dispatch an entrywise primitive by name, e.g. ``elementwise("tanh", x)``."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*args)


def transpose(a: Tensor) -> Tensor:
    return _node(a.value.T.copy(), "transpose", (a,), lambda g: (g.T,))


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """``a + b`` where the column ``b`` (m x 1) is repeated across ``a``'s columns."""
    if b.cols != 1 or b.rows != a.rows:
        raise ShapeError(f"add_bias: bias {b.rows}x{b.cols} does not fit {a.rows}x{a.cols}")
    return _node(a.value + b.value, "add_bias", (a, b), lambda g: (g, g.sum(axis=1, keepdims=True)))


def scale_cols(a: Tensor, r: Tensor) -> Tensor:
    """Multiply column ``j`` of ``a`` by the scalar ``r[0, j]``."""
    if r.rows != 1 or r.cols != a.cols:
        raise ShapeError(f"scale_cols: row {r.rows}x{r.cols} does not fit {a.rows}x{a.cols}")
    av, rv = a.value, r.value

    def bw(g):
        return g * rv, (g * av).sum(axis=0, keepdims=True)

    return _node(av * rv, "scale_cols", (a, r), bw)


def broadcast_rows(r: Tensor, m: int) -> Tensor:
    """Repeat a 1 x n row ``m`` times."""
    if r.rows != 1:
        raise ShapeError(f"broadcast_rows: expected a row, got {r.rows}x{r.cols}")
    return _node(np.repeat(r.value, m, axis=0), "broadcast_rows", (r,), lambda g: (g.sum(axis=0, keepdims=True),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(np.array([[a.value.sum()]]), "sum_all", (a,), lambda g: (np.full(shape, g[0, 0]),))


def sum_rows(a: Tensor) -> Tensor:
    """Sum down each column, giving a 1 x n row."""
    m = a.rows
    return _node(a.value.sum(axis=0, keepdims=True), "sum_rows", (a,), lambda g: (np.repeat(g, m, axis=0),))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack tensors vertically; all parts must share a column count."""
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_rows: empty part list")
    if len(parts) == 1:
        return parts[0]
    ncols = parts[0].cols
    for p in parts:
        if p.cols != ncols:
            raise ShapeError(f"concat_rows: column counts differ ({p.cols} vs {ncols})")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def bw(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _node(np.vstack([p.value for p in parts]), "concat_rows", parts, bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_cols: empty part list")
    if len(parts) == 1:
        return parts[0]
    nrows = parts[0].rows
    for p in parts:
        if p.rows != nrows:
            raise ShapeError(f"concat_cols: row counts differ ({p.rows} vs {nrows})")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def bw(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _node(np.hstack([p.value for p in parts]), "concat_cols", parts, bw)


def take_cols(a: Tensor, idx: Sequence[int]) -> Tensor:
    """Gather columns (with repetition allowed); backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.cols):
        raise IndexError(f"take_cols: index out of range for {a.cols} columns")
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out.T, idx, g.T)
        return (out,)

    return _node(a.value[:, idx], "take_cols", (a,), bw)


def embed(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Look up rows of a V x d table; returns d x len(ids), one column per id."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.rows):
        raise IndexError(f"embed: token id out of range for vocabulary of {table.rows}")
    shape = table.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, ids, g.T)
        return (out,)

    return _node(table.value[ids].T.copy(), "embed", (table,), bw)


def log_softmax(a: Tensor) -> Tensor:
    """Column-wise log-softmax."""
    av = a.value
    shifted = av - av.max(axis=0, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=0, keepdims=True),)

    return _node(out, "log_softmax", (a,), bw)


def pick(a: Tensor, idx: Sequence[int]) -> Tensor:
    """Row ``a[idx[j], j]`` for every column ``j``; returns 1 x n."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.shape != (a.cols,):
        raise ShapeError(f"pick: need {a.cols} indices, got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise IndexError(f"pick: row index out of range for {a.rows} rows")
    cols = np.arange(a.cols)
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        out[idx, cols] = g[0]
        return (out,)

    return _node(a.value[idx, cols][None, :], "pick", (a,), bw)


# ---------------------------------------------------------------------------
# Reverse pass
# ---------------------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into ``.grad`` of every node reachable from ``root``.

    Leaf gradients accumulate additively, so parameters shared across
    timesteps or graphs sum their contributions; call ``zero_grad`` between
    optimizer steps. A graph is single-use: a second call on the same root
    raises :class:`GraphError`.
    """
    if root.shape != (1, 1):
        raise GraphError(f"backward needs a scalar root, got {root.rows}x{root.cols}")
    if root._consumed:
        raise GraphError("graph already consumed by a previous backward pass; rebuild it")
    if not root.requires_grad:
        root._consumed = True
        return
    order = _topological(root)
    interior = {id(n) for n in order if n._backward is not None}
    for n in order:
        if id(n) in interior:
            n.grad = None
    root.grad = np.ones((1, 1))
    for node in reversed(order):
        g = node.grad
        if node._backward is None or g is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(pg, dtype=np.float64, copy=True)
            else:
                parent.grad += pg
        node._backward = None
    root._consumed = True


# ---------------------------------------------------------------------------
# Finite-difference checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    checked: int
    failures: list[tuple[str, tuple[int, int], float, float, float]] = field(default_factory=list)
    floor: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_err={self.max_rel_error:.3e} tol={self.tolerance:.0e} entries={self.checked}"


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Iterable[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` with central differences.

    ``f`` must rebuild its graph on every call and be deterministic. The
    relative error of an entry is ``|a - n| / max(|a|, |n|, floor)``. The
    floor is raised to ``10 * eps_machine * max(|f|, 1) / (eps * tol)``, the
    gradient magnitude below which rounding in ``f`` alone would exceed a
    tenth of the tolerance, so entries the difference quotient cannot resolve
    are compared absolutely. ``max_entries`` caps how many entries per
    parameter are probed (chosen with a seeded generator).
    """
    if not eps > 0:
        raise ValueError(f"grad_check: step must be positive, got {eps!r}")
    if isinstance(params, Mapping):
        named = list(params.items())
    else:
        named, seen = [], set()
        for i, p in enumerate(params):
            # cells reuse short names like W_z, so disambiguate by position
            name = p.name if p.name and p.name not in seen else f"{p.name or 'param'}#{i}"
            seen.add(name)
            named.append((name, p))
    for _, p in named:
        p.zero_grad()
    root = f()
    f0 = root.item()
    backward(root)
    floor = max(floor, 10.0 * np.finfo(np.float64).eps * max(abs(f0), 1.0) / (eps * tol))
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros(p.shape)) for name, p in named}

    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    failures = []
    for name, p in named:
        flat = p.value.reshape(-1)
        positions = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            positions = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for k in positions:
            orig = flat[k]
            flat[k] = orig + eps
            up = f().item()
            flat[k] = orig - eps
            down = f().item()
            flat[k] = orig
            numeric = (up - down) / (2.0 * eps)
            a = analytic[name].reshape(-1)[k]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            checked += 1
            if rel > worst:
                worst = rel
            if rel > tol:
                failures.append((name, divmod(int(k), p.cols), float(a), float(numeric), float(rel)))
    for _, p in named:
        p.zero_grad()
    if math.isnan(worst):
        worst = math.inf
    return GradCheckReport(max_rel_error=worst, tolerance=tol, checked=checked, failures=failures, floor=floor)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class RngStream:
    """Seeded PCG64 stream; equal seeds give equal draws on every platform."""

    algorithm = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, shape: tuple[int, ...]) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def random(self, shape: tuple[int, ...]) -> np.ndarray:
        return self._gen.random(size=shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self, key: int) -> "RngStream":
        """Independent child stream derived from ``(seed, key)``."""
        child = RngStream.__new__(RngStream)
        child.seed = self.seed
        seq = np.random.SeedSequence(self.seed, spawn_key=(int(key),))
        child._gen = np.random.Generator(np.random.PCG64(seq))
        return child
