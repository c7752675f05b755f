"""Dense float64 tensors with a define-by-run reverse-mode gradient tape.

Every op computes eagerly on numpy arrays. While a Tape is active (used as a
context manager), ops append a record holding the operand tensors and a
closure that maps the output gradient to operand gradients. A backward pass
walks the records once, in reverse, and deposits gradients into Parameters.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes do not conform for the requested operation."""


class ContractError(RuntimeError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


_tensor_ids = itertools.count()
_active_tape: "Tape | None" = None


class Tensor:
    """Row-major float64 array with an identity the tape can reference."""

    __slots__ = ("data", "id", "param")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.id = next(_tensor_ids)
        self.param = None  # set when this tensor is a Parameter's value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _non_scalar(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, id={self.id})"


def _non_scalar(t: Tensor):
    raise ContractError(f"expected a scalar tensor, got shape {t.shape}")


class Tape:
    """Ordered record of executed ops for one forward pass.

    Records are appended in execution order, so every operand id precedes its
    result id; backward() visits each record exactly once, in reverse.
    """

    def __init__(self):
        self._records: list[tuple[int, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise ContractError("a Tape is already active; tapes do not nest")
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active_tape
        _active_tape = None
        return False

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self):
        return tuple((out_id, tuple(t.id for t in inputs)) for out_id, inputs, _ in self._records)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every Parameter reached by the tape.

    Intermediate gradients are held only while needed and released as the
    sweep passes their producing record.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    param_leaves: dict[int, "Parameter"] = {}
    if loss.param is not None:
        param_leaves[loss.id] = loss.param
    for out_id, inputs, vjp in reversed(tape._records):
        g_out = grads.pop(out_id, None)
        if g_out is None:
            continue  # this result never influenced the loss
        for operand, g_in in zip(inputs, vjp(g_out)):
            if g_in is None:
                continue
            held = grads.get(operand.id)
            grads[operand.id] = g_in if held is None else held + g_in
            if operand.param is not None:
                param_leaves[operand.id] = operand.param
    for tid, param in param_leaves.items():
        g = grads.get(tid)
        if g is not None:
            param.grad.data += g
            param._fresh_grad = True


class Parameter:
    """Named learnable tensor plus its gradient accumulator."""

    def __init__(self, name: str, value):
        self.name = name
        self.value = Tensor(value)
        self.value.param = self
        self.grad = Tensor(np.zeros_like(self.value.data))
        self._fresh_grad = False

    def zero_grad(self) -> None:
        self.grad.data[...] = 0.0
        self._fresh_grad = False

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class ParameterStore:
    """Insertion-ordered collection of uniquely named Parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise ValueError(f"duplicate parameter name {param.name!r}")
        self._params[param.name] = param
        return param

    def new(self, name: str, value) -> Parameter:
        return self.add(Parameter(name, value))

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: p.value.data.copy() for name, p in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self._params.items():
            if name not in arrays:
                raise KeyError(f"missing value for parameter {name!r}")
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != p.value.data.shape:
                raise ShapeMismatch(
                    f"parameter {name!r}: stored shape {src.shape} != model shape {p.value.data.shape}"
                )
            p.value.data[...] = src

    def zero_grads(self) -> None:
        for p in self:
            p.zero_grad()


class AdamState:
    """Adam optimizer state: step count and per-parameter moment estimates."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(store: ParameterStore, state: AdamState) -> None:
    """One bias-corrected Adam update over the whole store; zeroes grads after.

    A step issued before any backward pass is a no-op with a warning.
    """
    if not any(p._fresh_grad for p in store):
        warnings.warn("adam_step called before any backward pass; skipping update")
        return
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for p in store:
        g = p.grad.data
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(g)
        v = state.v.get(p.name)
        if v is None:
            v = state.v[p.name] = np.zeros_like(g)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value.data -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        p.zero_grad()


# ---------------------------------------------------------------------------
# Forward ops. Each op validates shapes, computes eagerly, and (if a tape is
# active) records a closure that maps the output gradient to operand
# gradients (None marks a non-differentiable operand slot).
# ---------------------------------------------------------------------------

def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    if _active_tape is not None:
        _active_tape._records.append((out.id, inputs, vjp))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape} are not aligned 2-D matrices")
    out = Tensor(a.data @ b.data)

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), vjp)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("add", a, b)
    out = Tensor(a.data + b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("sub", a, b)
    out = Tensor(a.data - b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("mul", a, b)
    out = Tensor(a.data * b.data)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    out = Tensor(np.maximum(a.data, 0.0))  # np.maximum propagates NaN; np.where would hide it
    return _record(out, (a,), lambda g: (g * mask,))


def softmax_rows(a) -> Tensor:
    """Row-wise softmax of a 2-D tensor, shifted by the row max for stability."""
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatch(f"softmax_rows: need a 2-D tensor, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _record(out, (a,), vjp)


def softplus(a) -> Tensor:
    """log(1 + e^x), evaluated as max(x, 0) + log1p(e^-|x|) to stay finite."""
    a = _as_tensor(a)
    x = a.data
    out = Tensor(np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))))

    def vjp(g):
        ex = np.exp(-np.abs(x))
        sig = np.where(x >= 0.0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
        return (g * sig,)

    return _record(out, (a,), vjp)


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log: input has non-positive entries")
    out = Tensor(np.log(a.data))
    return _record(out, (a,), lambda g: (g / a.data,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.exp(a.data))
    return _record(out, (a,), lambda g: (g * out.data,))


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose: need a 2-D tensor, got shape {a.shape}")
    out = Tensor(a.data.T.copy())
    return _record(out, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def stack_rows(tensors) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("stack_rows: empty input list")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeMismatch(f"stack_rows: shapes {shape} and {t.shape} differ")
    out = Tensor(np.stack([t.data for t in tensors], axis=0))

    def vjp(g):
        return tuple(g[i] for i in range(len(tensors)))

    return _record(out, tuple(tensors), vjp)


def concat_rows(tensors) -> Tensor:
    """Concatenate 2-D tensors with equal column counts along axis 0."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat_rows: empty input list")
    cols = tensors[0].shape[-1]
    for t in tensors:
        if t.ndim != 2 or t.shape[1] != cols:
            raise ShapeMismatch(f"concat_rows: expected (*, {cols}) blocks, got {t.shape}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=0))
    splits = np.cumsum([t.shape[0] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=0))

    return _record(out, tuple(tensors), vjp)


def _check_indices(op: str, indices: np.ndarray, limit: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatch(f"{op}: indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= limit):
        raise IndexError(f"{op}: index out of range [0, {limit})")
    return idx


def gather_rows(a, indices) -> Tensor:
    a = _as_tensor(a)
    idx = _check_indices("gather_rows", indices, a.shape[0])
    out = Tensor(a.data[idx])

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record(out, (a,), vjp)


def scatter_add_rows(a, indices, size: int) -> Tensor:
    """Rows of `a` summed into a zero tensor of `size` rows at `indices`."""
    a = _as_tensor(a)
    idx = _check_indices("scatter_add_rows", indices, size)
    if idx.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"scatter_add_rows: {a.shape[0]} rows but {idx.shape[0]} indices")
    out_data = np.zeros((size,) + a.shape[1:])
    np.add.at(out_data, idx, a.data)
    out = Tensor(out_data)
    return _record(out, (a,), lambda g: (g[idx],))


def row_sum_segments(a, segment_ids, num_segments: int | None = None) -> Tensor:
    """Sum rows of `a` grouped by segment id; one output row per segment."""
    a = _as_tensor(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape != (a.shape[0],):
        raise ShapeMismatch(f"row_sum_segments: {a.shape[0]} rows but segment_ids shape {seg.shape}")
    n_seg = int(seg.max()) + 1 if num_segments is None and seg.size else (num_segments or 0)
    seg = _check_indices("row_sum_segments", seg, n_seg)
    out_data = np.zeros((n_seg,) + a.shape[1:])
    np.add.at(out_data, seg, a.data)
    out = Tensor(out_data)
    return _record(out, (a,), lambda g: (g[seg],))


def sum(a) -> Tensor:  # noqa: A001 - mirrors the public op vocabulary
    a = _as_tensor(a)
    out = Tensor(a.data.sum())
    return _record(out, (a,), lambda g: (np.full(a.shape, float(g)),))


def mean(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.data.mean())
    n = a.size
    return _record(out, (a,), lambda g: (np.full(a.shape, float(g) / n),))
