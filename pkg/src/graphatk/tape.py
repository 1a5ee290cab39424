"""Reverse-mode automatic differentiation on an append-only tape of dense 2-D arrays.

The tape records every primitive operation (matrix product, transpose,
elementwise arithmetic, row softmax, clamped elementwise functions,
reductions, broadcasts, row gathers) together with its inputs and cached
output.  Backward rules are themselves expressed with the same primitive
catalogue, so a gradient produced by :func:`grad` with ``create_graph=True``
is an ordinary tape node and can be differentiated again.  That property is
what lets a caller unroll a training loop on the tape -- parameter updates
built from emitted gradients -- and then differentiate the final loss
through every update step in a single reverse sweep.

Two precisions are supported.  ``f64`` is the deterministic mode: identical
seeds give bit-identical tapes and gradients.  ``f32`` halves memory and is
excluded from bit-exactness guarantees.

Clamps: ``log``, ``sqrt`` and ``recip`` operate on ``max(x, EPS)`` with
``EPS = 1e-12`` so that relaxed adjacency values and saturated softmax
probabilities never produce non-finite entries.  Their derivatives are the
exact derivatives of the clamped forms (zero below the clamp).
"""

from __future__ import annotations

import hashlib

import numpy as np

EPS = 1e-12


class ShapeError(ValueError):
    """Raised when a primitive is recorded with incompatible operand shapes."""


class NonFiniteError(ArithmeticError):
    """Raised when a primitive produces NaN or Inf output."""


# ---------------------------------------------------------------------------
# forward kernels (shared by recording and by the evaluating backward sweep)
# ---------------------------------------------------------------------------

def _k_softmax(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _k_log(x):
    return np.log(np.maximum(x, EPS))


def _k_sqrt(x):
    return np.sqrt(np.maximum(x, EPS))


def _k_recip(x):
    return 1.0 / np.maximum(x, EPS)


class Tape:
    """Append-only record of primitive operations.

    Nodes are stored in four parallel lists (operation name, parent ids,
    cached value, per-op metadata).  Append order is a topological order,
    which the backward sweep relies on.
    """

    def __init__(self, precision: str = "f64", check_finite: bool = True):
        if precision not in ("f64", "f32"):
            raise ValueError(f"precision must be 'f64' or 'f32', got {precision!r}")
        self.precision = precision
        self.dtype = np.float64 if precision == "f64" else np.float32
        self.check_finite = check_finite
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.vals: list[np.ndarray] = []
        self.meta: list = []
        self.leaves: set[int] = set()
        self._const_cache: dict = {}
        self._transpose_cache: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.ops)

    # -- node creation ------------------------------------------------------

    def _append(self, op: str, parents: tuple[int, ...], value: np.ndarray, meta=None) -> "Var":
        if value.ndim != 2:
            raise ShapeError(f"{op}: tape holds 2-D arrays only, got shape {value.shape}")
        if self.check_finite and not np.isfinite(value).all():
            raise NonFiniteError(f"primitive {op!r} produced non-finite output")
        self.ops.append(op)
        self.parents.append(parents)
        self.vals.append(value)
        self.meta.append(meta)
        return Var(self, len(self.ops) - 1)

    def _coerce(self, value) -> np.ndarray:
        arr = np.asarray(value, dtype=self.dtype)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ShapeError(f"expected a 2-D array, got shape {arr.shape}")
        return arr

    def input(self, value, diff: bool = True) -> "Var":
        """Place an input tensor on the tape; ``diff=True`` marks it a leaf."""
        v = self._append("input", (), self._coerce(value))
        if diff:
            self.leaves.add(v.i)
        return v

    def constant(self, value, key=None) -> "Var":
        """Place a non-differentiable constant; ``key`` enables caching."""
        if key is not None and key in self._const_cache:
            return Var(self, self._const_cache[key])
        v = self._append("const", (), self._coerce(value))
        if key is not None:
            self._const_cache[key] = v.i
        return v

    def digest(self) -> str:
        """SHA-256 over every op name and cached value; used for bit-exactness checks."""
        h = hashlib.sha256()
        for op, val in zip(self.ops, self.vals):
            h.update(op.encode())
            h.update(val.tobytes())
        return h.hexdigest()

    # -- recorded primitives -------------------------------------------------

    def _binary_same_shape(self, op: str, a: "Var", b: "Var", kernel) -> "Var":
        va, vb = self.vals[a.i], self.vals[b.i]
        if va.shape != vb.shape:
            raise ShapeError(f"{op}: shapes {va.shape} and {vb.shape} differ")
        return self._append(op, (a.i, b.i), kernel(va, vb))

    def matmul(self, a: "Var", b: "Var") -> "Var":
        va, vb = self.vals[a.i], self.vals[b.i]
        if va.shape[1] != vb.shape[0]:
            raise ShapeError(f"matmul: inner dims {va.shape} @ {vb.shape}")
        return self._append("matmul", (a.i, b.i), va @ vb)

    def transpose(self, a: "Var") -> "Var":
        # The backward sweep transposes the same operand (e.g. the normalized
        # adjacency) once per unrolled step; memoize to avoid duplicate nodes.
        cached = self._transpose_cache.get(a.i)
        if cached is not None:
            return Var(self, cached)
        v = self._append("transpose", (a.i,), np.ascontiguousarray(self.vals[a.i].T))
        self._transpose_cache[a.i] = v.i
        return v

    def add(self, a: "Var", b: "Var") -> "Var":
        return self._binary_same_shape("add", a, b, np.add)

    def sub(self, a: "Var", b: "Var") -> "Var":
        return self._binary_same_shape("sub", a, b, np.subtract)

    def mul(self, a: "Var", b: "Var") -> "Var":
        return self._binary_same_shape("mul", a, b, np.multiply)

    def smul(self, a: "Var", c: float) -> "Var":
        c = float(c)
        return self._append("smul", (a.i,), self.vals[a.i] * c, meta=c)

    def softmax(self, a: "Var") -> "Var":
        return self._append("softmax", (a.i,), _k_softmax(self.vals[a.i]))

    def log(self, a: "Var") -> "Var":
        return self._append("log", (a.i,), _k_log(self.vals[a.i]))

    def exp(self, a: "Var") -> "Var":
        return self._append("exp", (a.i,), np.exp(self.vals[a.i]))

    def sqrt(self, a: "Var") -> "Var":
        return self._append("sqrt", (a.i,), _k_sqrt(self.vals[a.i]))

    def maxc(self, a: "Var", c: float) -> "Var":
        c = float(c)
        return self._append("maxc", (a.i,), np.maximum(self.vals[a.i], c), meta=c)

    def recip(self, a: "Var") -> "Var":
        return self._append("recip", (a.i,), _k_recip(self.vals[a.i]))

    def sum_all(self, a: "Var") -> "Var":
        return self._append("sum_all", (a.i,), self.vals[a.i].sum().reshape(1, 1))

    def sum_rows(self, a: "Var") -> "Var":
        return self._append("sum_rows", (a.i,), self.vals[a.i].sum(axis=1, keepdims=True))

    def sum_cols(self, a: "Var") -> "Var":
        return self._append("sum_cols", (a.i,), self.vals[a.i].sum(axis=0, keepdims=True))

    def tile_rows(self, a: "Var", n: int) -> "Var":
        v = self.vals[a.i]
        if v.shape[0] != 1:
            raise ShapeError(f"tile_rows expects a 1-row operand, got {v.shape}")
        return self._append("tile_rows", (a.i,), np.repeat(v, n, axis=0), meta=int(n))

    def tile_cols(self, a: "Var", m: int) -> "Var":
        v = self.vals[a.i]
        if v.shape[1] != 1:
            raise ShapeError(f"tile_cols expects a 1-column operand, got {v.shape}")
        return self._append("tile_cols", (a.i,), np.repeat(v, m, axis=1), meta=int(m))

    def gather(self, a: "Var", idx) -> "Var":
        idx = np.asarray(idx, dtype=np.int64).ravel()
        v = self.vals[a.i]
        if idx.size == 0:
            raise ShapeError("gather: empty index set")
        if idx.min() < 0 or idx.max() >= v.shape[0]:
            raise ShapeError(f"gather: index out of range for {v.shape[0]} rows")
        return self._append("gather", (a.i,), v[idx], meta=idx)

    def _selection_t(self, idx: np.ndarray, n: int) -> np.ndarray:
        """Transposed 0/1 selection matrix for gather's backward, cached per index set."""
        key = ("sel", n, idx.tobytes())
        cached = self._const_cache.get(key)
        if isinstance(cached, np.ndarray):
            return cached
        st = np.zeros((n, idx.size), dtype=self.dtype)
        st[idx, np.arange(idx.size)] = 1.0
        self._const_cache[key] = st
        return st


class Var:
    """Handle to one tape node; supports numpy-style operator composition."""

    __slots__ = ("tape", "i")

    def __init__(self, tape: Tape, i: int):
        self.tape = tape
        self.i = i

    @property
    def value(self) -> np.ndarray:
        return self.tape.vals[self.i]

    @property
    def shape(self) -> tuple[int, int]:
        return self.tape.vals[self.i].shape

    @property
    def T(self) -> "Var":
        return self.tape.transpose(self)

    def __repr__(self):
        return f"Var(op={self.tape.ops[self.i]!r}, i={self.i}, shape={self.shape})"

    def __matmul__(self, other: "Var") -> "Var":
        return self.tape.matmul(self, other)

    def __add__(self, other: "Var") -> "Var":
        return self.tape.add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return self.tape.sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape.mul(self, other)
        return self.tape.smul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Var":
        return self.tape.smul(self, -1.0)

    def __truediv__(self, c: float) -> "Var":
        return self.tape.smul(self, 1.0 / float(c))

    def sum(self, axis: int | None = None) -> "Var":
        if axis is None:
            return self.tape.sum_all(self)
        if axis == 0:
            return self.tape.sum_cols(self)
        if axis == 1:
            return self.tape.sum_rows(self)
        raise ValueError(f"axis must be None, 0 or 1, got {axis}")

    def mean(self, axis: int | None = None) -> "Var":
        n, m = self.shape
        count = {None: n * m, 0: n, 1: m}[axis]
        return self.sum(axis) / count

    def log(self) -> "Var":
        return self.tape.log(self)

    def exp(self) -> "Var":
        return self.tape.exp(self)

    def sqrt(self) -> "Var":
        return self.tape.sqrt(self)

    def clip_min(self, c: float) -> "Var":
        return self.tape.maxc(self, c)

    def recip(self) -> "Var":
        return self.tape.recip(self)

    def detach(self) -> "Var":
        """Copy this node's value back onto the tape as a constant."""
        return self.tape.constant(self.value.copy())


# -- derived compositions ----------------------------------------------------

def softmax_rows(x: Var) -> Var:
    return x.tape.softmax(x)


def gather_rows(x: Var, idx) -> Var:
    return x.tape.gather(x, idx)


def tile_rows(x: Var, n: int) -> Var:
    return x.tape.tile_rows(x, n)


def tile_cols(x: Var, m: int) -> Var:
    return x.tape.tile_cols(x, m)


def outer(a: Var, b: Var) -> Var:
    """Outer product of two column vectors, recorded as a @ b^T."""
    if a.shape[1] != 1 or b.shape[1] != 1:
        raise ShapeError(f"outer expects column vectors, got {a.shape}, {b.shape}")
    return a @ b.T


def normalize_rows(x: Var) -> Var:
    """Scale each row to unit L2 norm (clamped at sqrt(EPS) for zero rows)."""
    norms = (x * x).sum(axis=1).sqrt()
    return x * tile_cols(norms.recip(), x.shape[1])


# ---------------------------------------------------------------------------
# backward sweep
# ---------------------------------------------------------------------------
#
# Each VJP rule is written once against a small backend interface.  The
# emitting backend records new primitives on the tape (gradients stay
# differentiable); the evaluating backend runs the same kernels on plain
# arrays and frees adjoints as soon as their node has been processed, which
# bounds memory during the final meta-gradient sweep.  Both backends share
# the forward kernels, so their results agree bit-for-bit in f64.


class _EmitBackend:
    def __init__(self, tape: Tape):
        self.tape = tape

    def handle(self, i: int) -> Var:
        return Var(self.tape, i)

    def const(self, arr: np.ndarray, key=None) -> Var:
        return self.tape.constant(arr, key=key)

    def matmul(self, a, b):
        return self.tape.matmul(a, b)

    def transpose(self, a):
        return self.tape.transpose(a)

    def add(self, a, b):
        return self.tape.add(a, b)

    def mul(self, a, b):
        return self.tape.mul(a, b)

    def smul(self, a, c):
        return self.tape.smul(a, c)

    def recip(self, a):
        return self.tape.recip(a)

    def sum_rows(self, a):
        return self.tape.sum_rows(a)

    def sum_cols(self, a):
        return self.tape.sum_cols(a)

    def tile_rows(self, a, n):
        return self.tape.tile_rows(a, n)

    def tile_cols(self, a, m):
        return self.tape.tile_cols(a, m)

    def finish(self, h):
        return h


class _EvalBackend:
    def __init__(self, tape: Tape):
        self.tape = tape

    def handle(self, i: int) -> np.ndarray:
        return self.tape.vals[i]

    def const(self, arr: np.ndarray, key=None) -> np.ndarray:
        return arr

    def matmul(self, a, b):
        return a @ b

    def transpose(self, a):
        return a.T  # view; consumed immediately by matmul/copy-free ops

    def add(self, a, b):
        return np.add(a, b)

    def mul(self, a, b):
        return np.multiply(a, b)

    def smul(self, a, c):
        return a * float(c)

    def recip(self, a):
        return _k_recip(a)

    def sum_rows(self, a):
        return a.sum(axis=1, keepdims=True)

    def sum_cols(self, a):
        return a.sum(axis=0, keepdims=True)

    def tile_rows(self, a, n):
        return np.repeat(a, n, axis=0)

    def tile_cols(self, a, m):
        return np.repeat(a, m, axis=1)

    def finish(self, h):
        return h


def _vjp(B, tape: Tape, i: int, g, wanted):
    """Adjoint contributions of node ``i`` to the parents in ``wanted``.

    Only requested positions are computed, so the sweep never materializes
    adjoints for operands off the differentiation path (e.g. the adjacency
    side of per-step propagation matmuls during inner parameter gradients).
    """
    op = tape.ops[i]
    par = tape.parents[i]
    meta = tape.meta[i]
    dt = tape.dtype
    out = {}

    if op == "matmul":
        if 0 in wanted:
            out[0] = B.matmul(g, B.transpose(B.handle(par[1])))
        if 1 in wanted:
            out[1] = B.matmul(B.transpose(B.handle(par[0])), g)
    elif op == "transpose":
        out[0] = B.transpose(g)
    elif op == "add":
        if 0 in wanted:
            out[0] = g
        if 1 in wanted:
            out[1] = g
    elif op == "sub":
        if 0 in wanted:
            out[0] = g
        if 1 in wanted:
            out[1] = B.smul(g, -1.0)
    elif op == "mul":
        if 0 in wanted:
            out[0] = B.mul(g, B.handle(par[1]))
        if 1 in wanted:
            out[1] = B.mul(g, B.handle(par[0]))
    elif op == "smul":
        out[0] = B.smul(g, meta)
    elif op == "softmax":
        s = B.handle(i)
        inner = B.sum_rows(B.mul(g, s))
        shifted = B.add(g, B.smul(B.tile_cols(inner, tape.vals[i].shape[1]), -1.0))
        out[0] = B.mul(s, shifted)
    elif op == "log":
        mask = B.const((tape.vals[par[0]] > EPS).astype(dt))
        out[0] = B.mul(B.mul(g, mask), B.recip(B.handle(par[0])))
    elif op == "exp":
        out[0] = B.mul(g, B.handle(i))
    elif op == "sqrt":
        mask = B.const((tape.vals[par[0]] > EPS).astype(dt))
        out[0] = B.mul(B.mul(g, mask), B.recip(B.smul(B.handle(i), 2.0)))
    elif op == "maxc":
        mask = B.const((tape.vals[par[0]] > meta).astype(dt))
        out[0] = B.mul(g, mask)
    elif op == "recip":
        y = B.handle(i)
        mask = B.const((tape.vals[par[0]] > EPS).astype(dt))
        out[0] = B.smul(B.mul(B.mul(g, mask), B.mul(y, y)), -1.0)
    elif op == "sum_all":
        n, m = tape.vals[par[0]].shape
        out[0] = B.tile_cols(B.tile_rows(g, n), m)
    elif op == "sum_rows":
        out[0] = B.tile_cols(g, tape.vals[par[0]].shape[1])
    elif op == "sum_cols":
        out[0] = B.tile_rows(g, tape.vals[par[0]].shape[0])
    elif op == "tile_rows":
        out[0] = B.sum_cols(g)
    elif op == "tile_cols":
        out[0] = B.sum_rows(g)
    elif op == "gather":
        n_rows = tape.vals[par[0]].shape[0]
        st = tape._selection_t(meta, n_rows)
        out[0] = B.matmul(B.const(st, key=("selnode", n_rows, meta.tobytes())), g)
    else:
        raise AssertionError(f"no backward rule for primitive {op!r}")
    return out


def grad(output: Var, wrt, create_graph: bool = True):
    """Reverse-mode gradient of a 1x1 ``output`` with respect to ``wrt`` nodes.

    With ``create_graph=True`` the returned gradients are tape nodes built
    from catalogue primitives and can be differentiated again.  With
    ``create_graph=False`` the sweep evaluates adjoints as plain arrays,
    freeing them eagerly; the result is a numpy array (memory-bounded path
    for final gradients).  A ``wrt`` node unreachable from ``output`` yields
    a zero tensor of matching shape.
    """
    tape = output.tape
    single = isinstance(wrt, Var)
    wrt_list = [wrt] if single else list(wrt)
    if output.shape != (1, 1):
        raise ShapeError(f"grad expects a 1x1 output, got {output.shape}")
    for w in wrt_list:
        if w.tape is not tape:
            raise ValueError("output and wrt live on different tapes")

    out_id = output.i
    # Node ids increase parent -> child, so nothing below the earliest wrt
    # node can depend on it; the whole sweep works on [start, out_id].
    start = min(w.i for w in wrt_list)
    if start > out_id:
        z = [np.zeros(tape.vals[w.i].shape, dtype=tape.dtype) for w in wrt_list]
        res = [tape.constant(v) if create_graph else v for v in z]
        return res[0] if single else res

    width = out_id - start + 1
    # nodes that depend on some wrt node
    fwd = np.zeros(width, dtype=bool)
    for w in wrt_list:
        fwd[w.i - start] = True
    for i in range(start, out_id + 1):
        if not fwd[i - start]:
            for p in tape.parents[i]:
                if p >= start and fwd[p - start]:
                    fwd[i - start] = True
                    break
    # nodes the output depends on
    back = np.zeros(width, dtype=bool)
    back[out_id - start] = True
    stack = [out_id]
    while stack:
        i = stack.pop()
        for p in tape.parents[i]:
            if p >= start and not back[p - start]:
                back[p - start] = True
                stack.append(p)
    need = fwd & back

    B = _EmitBackend(tape) if create_graph else _EvalBackend(tape)
    adj: dict = {}
    if need[out_id - start]:
        adj[out_id] = B.const(np.ones((1, 1), dtype=tape.dtype))
    wrt_ids = {w.i for w in wrt_list}
    for i in range(out_id, start - 1, -1):
        if i not in adj:
            continue
        g = adj[i] if create_graph else adj.pop(i)
        if i in wrt_ids:
            adj[i] = g  # final accumulated adjoint for a requested node
        parents = tape.parents[i]
        if not parents:
            continue
        wanted = tuple(
            pos for pos, p in enumerate(parents) if p >= start and need[p - start]
        )
        if not wanted:
            continue
        contribs = _vjp(B, tape, i, g, wanted)
        for pos, c in contribs.items():
            p = parents[pos]
            adj[p] = B.add(adj[p], c) if p in adj else c

    results = []
    for w in wrt_list:
        if w.i in adj:
            results.append(B.finish(adj[w.i]))
        else:
            z = np.zeros(tape.vals[w.i].shape, dtype=tape.dtype)
            results.append(tape.constant(z) if create_graph else z)
    return results[0] if single else results


def finite_difference_check(build, x0, eps: float = 1e-5) -> float:
    """Compare reverse-mode and central-difference gradients entry by entry.

    ``build(tape, leaf)`` must construct a scalar loss from a leaf created
    on a fresh tape; it is re-invoked for every probe, so any randomness
    inside must be seeded.  Returns the maximum relative error with
    denominator guard ``max(|analytic|, |numeric|, 1e-12)``.  f64 only.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    tape = Tape("f64")
    leaf = tape.input(x0)
    out = build(tape, leaf)
    analytic = grad(out, leaf, create_graph=False)

    def f(x):
        t = Tape("f64")
        v = build(t, t.input(x))
        if v.shape != (1, 1):
            raise ShapeError("finite_difference_check expects a scalar-valued build")
        return float(v.value[0, 0])

    worst = 0.0
    for idx in np.ndindex(*x0.shape):
        xp = x0.copy()
        xp[idx] += eps
        xm = x0.copy()
        xm[idx] -= eps
        numeric = (f(xp) - f(xm)) / (2.0 * eps)
        a = float(analytic[idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst
