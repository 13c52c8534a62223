"""Dense tensor arithmetic with reverse-mode differentiation.

Small closure-taped autograd over numpy arrays: each operation records its
parents and a vector-Jacobian callback, ``Tensor.backward()`` walks the tape
in reverse topological order. Scalars are float32 by default; a global switch
(``precision``) selects float64 for finite-difference verification.
"""

from __future__ import annotations

import contextlib
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GradientCheckError, ShapeError

_PRECISION_DTYPES = {"standard": np.float32, "high": np.float64}

_state = threading.local()


def _get(attr, default):
    return getattr(_state, attr, default)


def set_precision(mode: str) -> None:
    """Select the scalar width for newly created tensors: 'standard' (32-bit) or 'high' (64-bit)."""
    if mode not in _PRECISION_DTYPES:
        raise ConfigError(f"unknown precision mode {mode!r}; expected 'standard' or 'high'")
    _state.precision = mode


def get_precision() -> str:
    return _get("precision", "standard")


def default_dtype():
    return _PRECISION_DTYPES[get_precision()]


@contextlib.contextmanager
def precision(mode: str):
    """Temporarily switch the default scalar precision."""
    previous = get_precision()
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(previous)


@contextlib.contextmanager
def no_grad():
    """Disable tape construction inside the block (pure value computation)."""
    previous = _get("grad_enabled", True)
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return _get("grad_enabled", True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Dense multi-axis array of scalars, row-major, with an optional gradient tape.

    Values are immutable once constructed (in-place mutation of ``data`` is
    reserved for the optimizer, which owns its parameters exclusively).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._vjp = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _wrap(data: np.ndarray, parents, vjp) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, grad={self.requires_grad})"

    # -- elementwise arithmetic ------------------------------------------------

    def __add__(self, other):
        other = Tensor._lift(other)
        a, b = self, other
        return Tensor._wrap(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other)
        a, b = self, other
        return Tensor._wrap(
            a.data - b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        )

    def __rsub__(self, other):
        return Tensor._lift(other).__sub__(self)

    def __mul__(self, other):
        other = Tensor._lift(other)
        a, b = self, other
        return Tensor._wrap(
            a.data * b.data,
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        a, b = self, other
        return Tensor._wrap(
            a.data / b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
        )

    def __rtruediv__(self, other):
        return Tensor._lift(other).__truediv__(self)

    def __neg__(self):
        return Tensor._wrap(-self.data, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape manipulation ------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self
        return Tensor._wrap(
            src.data.reshape(shape), (src,), lambda g: (g.reshape(src.shape),)
        )

    @property
    def mT(self) -> "Tensor":
        """Transpose of the last two axes."""
        if self.ndim < 2:
            raise ShapeError(f"mT needs at least 2 axes, got shape {self.shape}")
        src = self
        return Tensor._wrap(
            np.swapaxes(src.data, -1, -2), (src,), lambda g: (np.swapaxes(g, -1, -2),)
        )

    def broadcast_to(self, shape) -> "Tensor":
        src = self
        shape = tuple(shape)
        return Tensor._wrap(
            np.broadcast_to(src.data, shape), (src,), lambda g: (_unbroadcast(g, src.shape),)
        )

    def __getitem__(self, index) -> "Tensor":
        src = self

        def vjp(g):
            buf = np.zeros_like(src.data)
            np.add.at(buf, index, g)
            return (buf,)

        return Tensor._wrap(src.data[index], (src,), vjp)

    # -- reductions ---------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src = self

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, src.shape).astype(src.data.dtype, copy=False),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src.shape),)

        return Tensor._wrap(src.data.sum(axis=axis, keepdims=keepdims), (src,), vjp)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        src = self
        count = src.size if axis is None else src.shape[axis]

        def vjp(g):
            g = g / count
            if axis is None:
                return (np.broadcast_to(g, src.shape).astype(src.data.dtype, copy=False),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src.shape),)

        return Tensor._wrap(src.data.mean(axis=axis, keepdims=keepdims), (src,), vjp)

    # -- elementwise nonlinearities ---------------------------------------------------

    def relu(self) -> "Tensor":
        src = self
        return Tensor._wrap(
            np.maximum(src.data, 0), (src,), lambda g: (g * (src.data > 0),)
        )

    def log(self) -> "Tensor":
        src = self
        return Tensor._wrap(np.log(src.data), (src,), lambda g: (g / src.data,))

    def sqrt(self) -> "Tensor":
        src = self
        out_data = np.sqrt(src.data)

        def vjp(g):
            # derivative is unbounded at 0; emit 0 there so eps-clamped norms
            # of zero vectors stay finite end to end
            denom = 2.0 * out_data
            return (np.divide(g, denom, out=np.zeros_like(g), where=denom > 0),)

        return Tensor._wrap(out_data, (src,), vjp)

    def clamp_min(self, floor: float) -> "Tensor":
        src = self
        return Tensor._wrap(
            np.maximum(src.data, floor), (src,), lambda g: (g * (src.data > floor),)
        )

    # -- reverse pass -------------------------------------------------------------------

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into .grad over the whole tape.

        `self` must be a scalar unless `grad` supplies the seed cotangent.
        """
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def concat(parts, axis: int = 0) -> Tensor:
    """Concatenate tensors along `axis`."""
    parts = [Tensor._lift(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return Tensor._wrap(np.concatenate([p.data for p in parts], axis=axis), parts, vjp)


def matmul(a, b) -> Tensor:
    """Matrix product with stacked leading axes (numpy semantics, no 1-D operands)."""
    a, b = Tensor._lift(a), Tensor._lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return (ga, gb)

    return Tensor._wrap(a.data @ b.data, (a, b), vjp)


def relu(x) -> Tensor:
    return Tensor._lift(x).relu()


def row_softmax(x) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction for stability."""
    x = Tensor._lift(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return ((g - (g * p).sum(axis=-1, keepdims=True)) * p,)

    return Tensor._wrap(p, (x,), vjp)


def cosine_similarity(u, v, eps: float = 1e-8) -> Tensor:
    """(u . v) / (max(|u|, eps) * max(|v|, eps)) for 1-D inputs."""
    u, v = Tensor._lift(u), Tensor._lift(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"cosine_similarity needs equal-length vectors, got {u.shape} and {v.shape}")
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    nu = (u * u).sum().sqrt().clamp_min(eps)
    nv = (v * v).sum().sqrt().clamp_min(eps)
    return (u * v).sum() / (nu * nv)


def cross_entropy(p, label: int, eps: float = 1e-8) -> Tensor:
    """-ln(p[label]) for a probability vector p, clamped below at eps."""
    p = Tensor._lift(p)
    if p.ndim != 1:
        raise ShapeError(f"cross_entropy expects a probability vector, got shape {p.shape}")
    n = p.shape[0]
    if not isinstance(label, (int, np.integer)) or not 0 <= int(label) < n:
        raise IndexError(f"label {label!r} out of range for {n} classes")
    total = float(p.data.sum())
    if abs(total - 1.0) > 1e-6 or p.data.min() < -1e-6:
        raise ConfigError(f"cross_entropy input is not a probability vector (sum={total})")
    return -(p[int(label)].clamp_min(eps).log())


# -- parameters -----------------------------------------------------------------------


@dataclass
class Parameter:
    """Named learnable tensor; `.grad` is populated by a backward pass."""

    name: str
    value: Tensor

    @property
    def grad(self):
        return self.value.grad

    @property
    def shape(self) -> tuple:
        return self.value.shape


class ParameterStore:
    """Ordered name -> Parameter map with a seeded RNG for initialization."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._params: dict[str, Parameter] = {}

    def add_uniform(self, name: str, shape: tuple, bound: float) -> Parameter:
        """Create a parameter drawn uniformly from [-bound, bound]."""
        data = self._rng.uniform(-bound, bound, size=shape).astype(default_dtype())
        return self.add_existing(name, data)

    def add_zeros(self, name: str, shape: tuple) -> Parameter:
        return self.add_existing(name, np.zeros(shape, dtype=default_dtype()))

    def add_existing(self, name: str, value) -> Parameter:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True)
        param = Parameter(name, t)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.value.grad = None

    def total_size(self) -> int:
        return sum(p.value.size for p in self._params.values())


# -- gradient verification ----------------------------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central finite differences."""

    passed: bool
    max_rel_error: float
    tol: float
    eps: float
    worst_param: str
    worst_index: tuple
    per_param: dict = field(default_factory=dict)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradient check {status}: max rel error {self.max_rel_error:.3e} "
            f"(tol {self.tol:.1e}, eps {self.eps:.1e}) at {self.worst_param}{list(self.worst_index)}"
        )


def gradient_check(f, store: ParameterStore, eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare the tape gradient of scalar `f()` against central differences.

    Perturbs every entry of every parameter in `store` by +/-eps and checks
    |analytic - fd| / max(|analytic|, |fd|, floor) <= tol, where the floor is
    the central-difference roundoff resolution (|f| * machine_eps / eps, with
    headroom of 10/tol) so that gradients too small for finite differences to
    certify are compared at that resolution instead of blowing up the ratio.
    Requires the high-precision scalar mode so the differences are meaningful.
    """
    if get_precision() != "high":
        raise ConfigError("gradient_check must run in high-precision mode; wrap in precision('high')")
    store.zero_grads()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise GradientCheckError("loss is non-finite at the unperturbed point")
    machine_eps = float(np.finfo(loss.data.dtype).eps)
    floor = max(1e-6, abs(float(loss.data)) * machine_eps / eps * 10.0 / tol)
    loss.backward()
    analytic = {
        p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value.data))
        for p in store
    }

    max_err = 0.0
    worst = ("", ())
    per_param = {}
    for p in store:
        w = p.value.data
        g = analytic[p.name]
        worst_here = 0.0
        for idx in np.ndindex(*w.shape) if w.shape else [()]:
            original = w[idx]
            with no_grad():
                w[idx] = original + eps
                f_plus = float(f().data)
                w[idx] = original - eps
                f_minus = float(f().data)
            w[idx] = original
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise GradientCheckError(f"non-finite loss while probing parameter {p.name!r} at {idx}")
            fd = (f_plus - f_minus) / (2.0 * eps)
            a = float(g[idx])
            err = abs(a - fd) / max(abs(a), abs(fd), floor)
            if err > worst_here:
                worst_here = err
            if err > max_err:
                max_err = err
                worst = (p.name, idx)
        per_param[p.name] = worst_here
    return GradCheckReport(
        passed=max_err <= tol,
        max_rel_error=max_err,
        tol=tol,
        eps=eps,
        worst_param=worst[0],
        worst_index=worst[1],
        per_param=per_param,
    )
