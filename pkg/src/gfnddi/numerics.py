"""Small reverse-mode autodiff engine on top of numpy float64 arrays.

Values live in :class:`Tensor`. Operations executed while a :class:`Tape` is
active are recorded in creation order (which is already a topological order),
and :meth:`Tape.gradient` walks the record backwards.

Broadcasting is deliberately limited: the only mixed-shape case allowed is
adding a row-vector bias to a matrix, plus python scalars as constants.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np

from .errors import ContractError

LOG_FLOOR = 1e-300

_ACTIVE_TAPES: List["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


class Tape:
    """Records operations for one backward pass.

    Usage::

        with Tape() as tape:
            loss = f(params)
        grads = tape.gradient(loss, params)
    """

    def __init__(self):
        self.records = []  # (output, inputs, vjp)

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPES.remove(self)
        return False

    def record(self, out: Tensor, inputs, vjp):
        self.records.append((out, inputs, vjp))

    def gradient(self, output: Tensor, wrt):
        """Gradient of scalar ``output`` w.r.t. each tensor in ``wrt``.

        ``wrt`` may be a mapping name -> Tensor (returns a dict) or a sequence
        (returns a list). Leaves not reached get zeros.
        """
        if output.data.size != 1:
            raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
        adj: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for out, inputs, vjp in reversed(self.records):
            g = adj.get(id(out))
            if g is None:
                continue
            for x, gx in zip(inputs, vjp(g)):
                if gx is None or not x.requires_grad:
                    continue
                prev = adj.get(id(x))
                adj[id(x)] = gx if prev is None else prev + gx

        def _grad(t):
            g = adj.get(id(t))
            return np.zeros_like(t.data) if g is None else np.array(g, dtype=np.float64).reshape(t.shape)

        if isinstance(wrt, Mapping):
            return {k: _grad(t) for k, t in wrt.items()}
        return [_grad(t) for t in wrt]


def backward(tape: Tape, output: Tensor, wrt):
    return tape.gradient(output, wrt)


def _emit(data, inputs, vjp) -> Tensor:
    needs = any(x.requires_grad for x in inputs)
    out = Tensor(data, requires_grad=needs and bool(_ACTIVE_TAPES))
    if out.requires_grad:
        for tape in _ACTIVE_TAPES:
            tape.record(out, inputs, vjp)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape or b.data.ndim == 0:
        pass
    elif a.data.ndim == 0:
        return add(b, a)
    elif a.data.ndim == 2 and b.shape in ((a.shape[1],), (1, a.shape[1])):
        pass  # row-vector bias
    else:
        raise ContractError(f"add: incompatible shapes {a.shape} and {b.shape}")
    b_shape = b.shape

    def vjp(g):
        gb = g if g.shape == b_shape else g.sum(axis=0).reshape(b_shape) if b.data.ndim else g.sum()
        return g, gb

    return _emit(a.data + b.data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def sub(a, b) -> Tensor:
    return add(a, neg(_as_tensor(b)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if b.data.ndim == 0 and a.data.ndim != 0:
        pass
    elif a.data.ndim == 0 and b.data.ndim != 0:
        return mul(b, a)
    elif a.shape != b.shape:
        raise ContractError(f"mul: shapes must match, got {a.shape} and {b.shape}")

    def vjp(g):
        ga = g * b.data
        gb = g * a.data
        if b.data.ndim == 0 and a.data.ndim != 0:
            gb = gb.sum()
        return ga, gb

    return _emit(a.data * b.data, (a, b), vjp)


def square(a: Tensor) -> Tensor:
    return _emit(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return _emit(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ContractError("transpose expects a matrix")
    return _emit(a.data.T.copy(), (a,), lambda g: (g.T,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _emit(y, (a,), lambda g: (g * y,))


def log(a: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """log(max(x, floor)); the gradient is zero where the floor is active."""
    x = a.data
    live = x > floor
    y = np.log(np.where(live, x, floor))
    return _emit(y, (a,), lambda g: (np.where(live, g / np.where(live, x, 1.0), 0.0),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def _check_matrix(a: Tensor, op: str):
    if a.data.ndim != 2:
        raise ContractError(f"{op} expects a matrix, got shape {a.shape}")


def softmax_rows(a: Tensor) -> Tensor:
    _check_matrix(a, "softmax_rows")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    return _emit(y, (a,), lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),))


def log_softmax_rows(a: Tensor) -> Tensor:
    _check_matrix(a, "log_softmax_rows")
    z = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _emit(y, (a,), lambda g: (g - p * g.sum(axis=1, keepdims=True),))


def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]

    def vjp(g):
        out = np.zeros((n,) + g.shape[1:])
        np.add.at(out, index, g)
        return (out,)

    return _emit(a.data[index], (a,), vjp)


def scatter_rows(a: Tensor, index, n_rows: int, weights=None) -> Tensor:
    """out[index[k]] += weights[k] * a[k]; ``weights`` is a constant vector."""
    _check_matrix(a, "scatter_rows")
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != a.shape[0]:
        raise ContractError("scatter_rows: one index per input row required")
    w = np.ones(a.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    out = np.zeros((n_rows, a.shape[1]))
    np.add.at(out, index, a.data * w[:, None])
    return _emit(out, (a,), lambda g: (g[index] * w[:, None],))


def pick(a: Tensor, cols) -> Tensor:
    """Row-wise selection ``a[k, cols[k]]``."""
    _check_matrix(a, "pick")
    cols = np.asarray(cols, dtype=np.int64)
    if cols.shape != (a.shape[0],):
        raise ContractError("pick: one column per row required")
    rows = np.arange(a.shape[0])

    def vjp(g):
        out = np.zeros_like(a.data)
        out[rows, cols] = g
        return (out,)

    return _emit(a.data[rows, cols], (a,), vjp)


def concat_cols(*parts: Tensor) -> Tensor:
    for p in parts:
        _check_matrix(p, "concat_cols")
    widths = [p.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]
    return _emit(np.concatenate([p.data for p in parts], axis=1), parts,
                 lambda g: tuple(np.split(g, splits, axis=1)))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    shape = a.shape
    if axis is None:
        return _emit(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, shape),))
    return _emit(a.data.sum(axis=axis), (a,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape),))


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: Dict[str, float]
    flagged: List[tuple] = field(default_factory=list)  # (param, flat index, analytic, numeric)

    @property
    def ok(self) -> bool:
        return not self.flagged


def relative_error(analytic, numeric, floor: float = 1e-6):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def finite_difference_check(f: Callable[[], Tensor], params: Mapping[str, Tensor],
                            h: float = 1e-5, tol: float = 1e-4,
                            analytic: Optional[Mapping[str, np.ndarray]] = None,
                            floor: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of ``f()`` with central differences.

    ``f`` must read the current values of ``params`` each call. ``analytic``
    overrides the tape gradients (used to test that a bad gradient is caught).
    """
    if h <= 0:
        raise ContractError("h must be positive")
    if analytic is None:
        with Tape() as tape:
            out = f()
        analytic = tape.gradient(out, params)
    per_param, flagged, worst = {}, [], 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.empty_like(flat)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            fp = f().item()
            flat[k] = orig - h
            fm = f().item()
            flat[k] = orig
            numeric[k] = (fp - fm) / (2.0 * h)
        a = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        err = relative_error(a, numeric, floor)
        per_param[name] = float(err.max()) if err.size else 0.0
        worst = max(worst, per_param[name])
        for k in np.flatnonzero(err > tol):
            flagged.append((name, int(k), float(a[k]), float(numeric[k])))
    return GradCheckReport(worst, per_param, flagged)


# ---------------------------------------------------------------------------
# optimisers
# ---------------------------------------------------------------------------

class SGD:
    def __init__(self, params: Mapping[str, Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: Mapping[str, np.ndarray]):
        for name, p in self.params.items():
            p.data -= self.lr * grads[name]


class Adam:
    def __init__(self, params: Mapping[str, Tensor], lr: float, betas=(0.9, 0.999),
                 eps: float = 1e-8, lr_overrides: Optional[Mapping[str, float]] = None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.lr_overrides = dict(lr_overrides or {})
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: Mapping[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            lr = self.lr_overrides.get(name, self.lr)
            p.data -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def make_optimizer(kind: str, params, lr: float, **kw):
    if kind == "sgd":
        return SGD(params, lr)
    if kind == "adam":
        return Adam(params, lr, **kw)
    raise ContractError(f"unknown optimizer {kind!r}")


def make_rng(seed, *stream: int) -> np.random.Generator:
    """Seeded PCG64 generator; ``stream`` ids give independent substreams."""
    return np.random.default_rng([int(seed), *map(int, stream)])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
# <prefix>.bin holds the arrays back to back as little-endian float64 in
# manifest order; <prefix>.json lists {"name", "shape", "offset"} per array
# (offset counted in float64 elements) plus free-form metadata.

def save_arrays(prefix, arrays: Mapping[str, np.ndarray], meta: Optional[dict] = None) -> List[Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    entries, offset, chunks = [], 0, []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(np.ascontiguousarray(arr).tobytes())
    bin_path = prefix.with_suffix(".bin")
    json_path = prefix.with_suffix(".json")
    bin_path.write_bytes(b"".join(chunks))
    json_path.write_text(json.dumps({"dtype": "<f8", "arrays": entries, "meta": meta or {}},
                                    indent=2, sort_keys=True) + "\n")
    return [bin_path, json_path]


def load_arrays(prefix):
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    flat = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    out = {}
    for e in manifest["arrays"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        out[e["name"]] = flat[e["offset"]:e["offset"] + n].reshape(e["shape"]).astype(np.float64)
    return out, manifest.get("meta", {})


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))

