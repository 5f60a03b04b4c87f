"""Dense tensors with a reverse-mode gradient tape, on top of numpy.

Every backward rule is written in terms of differentiable ``Tensor`` operations,
so gradients can themselves be differentiated (``grad(..., create_graph=True)``).
The gradient penalty of the discriminator depends on that.
"""
from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError, DimensionError

_state = {"dtype": np.dtype(np.float32), "grad": True}


def default_dtype() -> np.dtype:
    return _state["dtype"]


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported dtype {dtype}")
    _state["dtype"] = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    old = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def _grad_mode(enabled: bool):
    old = _state["grad"]
    _state["grad"] = enabled
    try:
        yield
    finally:
        _state["grad"] = old


def no_grad():
    """Context manager that stops operations from being recorded."""
    return _grad_mode(False)


def is_grad_enabled() -> bool:
    return _state["grad"]


class Tensor:
    """An n-dimensional array that remembers how it was computed."""

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or _state["dtype"])
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._ctx: Function | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, ctx: "Function | None" = None) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t._ctx = ctx
        t.requires_grad = ctx is not None
        return t

    # -- introspection ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            _not_scalar(self)
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- autodiff --------------------------------------------------------
    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(t) into ``t.grad`` for every tracked tensor on the tape."""
        if grad is None:
            if self.data.size != 1:
                _not_scalar(self)
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=self.dtype).reshape(self.shape)
        grads = _backprop(self, Tensor._wrap(seed), create_graph=False)
        for node, g in grads.values():
            if node.grad is None:
                node.grad = g.data
            else:
                node.grad = node.grad + g.data

    def zero_grad(self) -> None:
        self.grad = None

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        return Add()(self, _lift(other, self))

    def __radd__(self, other):
        return Add()(_lift(other, self), self)

    def __sub__(self, other):
        return Sub()(self, _lift(other, self))

    def __rsub__(self, other):
        return Sub()(_lift(other, self), self)

    def __mul__(self, other):
        return Mul()(self, _lift(other, self))

    def __rmul__(self, other):
        return Mul()(_lift(other, self), self)

    def __truediv__(self, other):
        return Div()(self, _lift(other, self))

    def __rtruediv__(self, other):
        return Div()(_lift(other, self), self)

    def __neg__(self):
        return Neg()(self)

    def __pow__(self, p: float):
        return Pow(float(p))(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other, self))

    def __getitem__(self, idx):
        return GetItem(idx)(self)

    def exp(self):
        return Exp()(self)

    def log(self):
        return Log()(self)

    def tanh(self):
        return Tanh()(self)

    def sqrt(self):
        return Pow(0.5)(self)

    def abs(self):
        return self * Tensor._wrap(np.sign(self.data))

    def clamp(self, lo: float, hi: float):
        inside = (self.data >= lo) & (self.data <= hi)
        return where(inside, self, Tensor._wrap(np.clip(self.data, lo, hi)))

    def sum(self, axis=None, keepdims: bool = False):
        return Sum(axis, keepdims)(self)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else int(np.prod([self.shape[a] for a in _axes(axis)]))
        return self.sum(axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape(shape)(self)

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose(axes)(self)

    @property
    def T(self):
        return self.transpose()

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def flip(self, axis: int):
        return Flip(axis)(self)

    def broadcast_to(self, shape):
        shape = tuple(shape)
        if shape == self.shape:
            return self
        return BroadcastTo(shape)(self)

    def sum_to(self, shape):
        shape = tuple(shape)
        if shape == self.shape:
            return self
        return SumTo(shape)(self)

    # comparisons return plain boolean arrays; they never join the tape
    def __gt__(self, other):
        return self.data > _raw(other)

    def __lt__(self, other):
        return self.data < _raw(other)

    def __ge__(self, other):
        return self.data >= _raw(other)

    def __le__(self, other):
        return self.data <= _raw(other)


def _not_scalar(t: Tensor):
    raise ContractError(f"expected a scalar tensor, got shape {t.shape}")


def _raw(x):
    return x.data if isinstance(x, Tensor) else x


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.asarray(x, dtype=like.dtype))


def _axes(axis) -> tuple[int, ...]:
    return (axis,) if isinstance(axis, int) else tuple(axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x, dtype=None) -> Tensor:
    return Tensor._wrap(np.asarray(x, dtype=dtype or _state["dtype"]))


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


class GradTape:
    """The tracked operations reachable from ``output``, in topological order.

    ``nodes`` lists every tensor once, with inputs before the tensors computed
    from them; replaying it backwards visits each node after all its consumers.
    """

    def __init__(self, output: Tensor):
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            t, done = stack.pop()
            if done:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t._ctx is not None:
                for inp in t._ctx.inputs:
                    if inp.requires_grad and id(inp) not in seen:
                        stack.append((inp, False))
        self.nodes = order

    def __len__(self) -> int:
        return len(self.nodes)


def _backprop(output: Tensor, seed: Tensor, create_graph: bool) -> dict[int, tuple[Tensor, Tensor]]:
    tape = GradTape(output)
    pending: dict[int, Tensor] = {id(output): seed}
    done: dict[int, tuple[Tensor, Tensor]] = {}
    with _grad_mode(create_graph):
        for node in reversed(tape.nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            done[id(node)] = (node, g)
            ctx = node._ctx
            if ctx is None:
                continue
            for inp, gi in zip(ctx.inputs, ctx.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise DimensionError(
                        f"{type(ctx).__name__} produced grad {gi.shape} for input {inp.shape}")
                prev = pending.get(id(inp))
                pending[id(inp)] = gi if prev is None else prev + gi
    return done


def grad(output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of scalar ``output`` w.r.t. ``inputs`` without touching ``.grad``.

    With ``create_graph`` the returned tensors are themselves on the tape.
    """
    if output.data.size != 1:
        _not_scalar(output)
    if not output.requires_grad:
        return [Tensor._wrap(np.zeros_like(t.data)) for t in inputs]
    done = _backprop(output, Tensor._wrap(np.ones_like(output.data)), create_graph)
    out = []
    for t in inputs:
        hit = done.get(id(t))
        out.append(hit[1] if hit is not None else Tensor._wrap(np.zeros_like(t.data)))
    return out


# ---------------------------------------------------------------------------
# functions
# ---------------------------------------------------------------------------


class Function:
    """One recorded operation. Subclasses define ``forward`` on arrays and
    ``backward`` on Tensors (returning one gradient or None per input)."""

    inputs: tuple[Tensor, ...]
    needs: tuple[bool, ...]

    def __call__(self, *inputs: Tensor) -> Tensor:
        self.inputs = inputs
        self.needs = tuple(t.requires_grad for t in inputs)
        out = self.forward(*(t.data for t in inputs))
        track = _state["grad"] and any(self.needs)
        return Tensor._wrap(out, self if track else None)

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: Tensor) -> tuple:
        raise NotImplementedError


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"shapes {a.shape} and {b.shape} do not broadcast") from exc


class Add(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        return a + b

    def backward(self, g):
        a, b = self.inputs
        return (g.sum_to(a.shape) if self.needs[0] else None,
                g.sum_to(b.shape) if self.needs[1] else None)


class Sub(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        return a - b

    def backward(self, g):
        a, b = self.inputs
        return (g.sum_to(a.shape) if self.needs[0] else None,
                (-g).sum_to(b.shape) if self.needs[1] else None)


class Mul(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        return a * b

    def backward(self, g):
        a, b = self.inputs
        return ((g * b).sum_to(a.shape) if self.needs[0] else None,
                (g * a).sum_to(b.shape) if self.needs[1] else None)


class Div(Function):
    def forward(self, a, b):
        _check_broadcast(a, b)
        return a / b

    def backward(self, g):
        a, b = self.inputs
        ga = (g / b).sum_to(a.shape) if self.needs[0] else None
        gb = (-(g * a) / (b * b)).sum_to(b.shape) if self.needs[1] else None
        return ga, gb


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, g):
        return (-g,)


class Pow(Function):
    def __init__(self, p: float):
        self.p = p

    def forward(self, a):
        return a ** self.p

    def backward(self, g):
        (a,) = self.inputs
        if self.p == 1.0:
            return (g,)
        if self.p == 2.0:
            return (g * a * 2.0,)
        return (g * (a ** (self.p - 1.0)) * self.p,)


class Exp(Function):
    def forward(self, a):
        return np.exp(a)

    def backward(self, g):
        return (g * self.inputs[0].exp(),)


class Log(Function):
    def forward(self, a):
        return np.log(a)

    def backward(self, g):
        return (g / self.inputs[0],)


class Tanh(Function):
    def forward(self, a):
        return np.tanh(a)

    def backward(self, g):
        t = self.inputs[0].tanh()
        return (g * (1.0 - t * t),)


class Where(Function):
    """Select from ``a`` where ``cond`` holds, else from ``b``; ``cond`` is a constant mask."""

    def __init__(self, cond: np.ndarray):
        self.cond = np.asarray(cond, dtype=bool)

    def forward(self, a, b):
        _check_broadcast(a, b)
        return np.where(self.cond, a, b)

    def backward(self, g):
        a, b = self.inputs
        mask = Tensor._wrap(self.cond.astype(g.dtype))
        ga = (g * mask).sum_to(a.shape) if self.needs[0] else None
        gb = (g * (1.0 - mask)).sum_to(b.shape) if self.needs[1] else None
        return ga, gb


def where(cond, a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b if isinstance(b, Tensor) else constant(0.0))
    b = _lift(b, a)
    return Where(cond)(a, b)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise DimensionError("matmul needs operands of rank >= 2")
        if a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
        return a @ b

    def backward(self, g):
        a, b = self.inputs
        ga = (g @ b.swapaxes(-1, -2)).sum_to(a.shape) if self.needs[0] else None
        gb = (a.swapaxes(-1, -2) @ g).sum_to(b.shape) if self.needs[1] else None
        return ga, gb


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul()(a, b)


class Sum(Function):
    def __init__(self, axis=None, keepdims: bool = False):
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, a):
        return np.asarray(a.sum(axis=self.axis, keepdims=self.keepdims))

    def backward(self, g):
        shape = self.inputs[0].shape
        if self.axis is not None and not self.keepdims:
            kept = list(shape)
            for ax in _axes(self.axis):
                kept[ax] = 1
            g = g.reshape(tuple(kept))
        elif self.axis is None:
            g = g.reshape((1,) * len(shape))
        return (g.broadcast_to(shape),)


class BroadcastTo(Function):
    def __init__(self, shape):
        self.shape = shape

    def forward(self, a):
        try:
            return np.ascontiguousarray(np.broadcast_to(a, self.shape))
        except ValueError as exc:
            raise DimensionError(f"cannot broadcast {a.shape} to {self.shape}") from exc

    def backward(self, g):
        return (g.sum_to(self.inputs[0].shape),)


class SumTo(Function):
    """Reduce a broadcast result back to ``shape`` (adjoint of BroadcastTo)."""

    def __init__(self, shape):
        self.shape = shape

    def forward(self, a):
        lead = a.ndim - len(self.shape)
        axes = tuple(range(lead)) + tuple(
            i + lead for i, s in enumerate(self.shape) if s == 1 and a.shape[i + lead] != 1)
        out = a.sum(axis=axes, keepdims=True) if axes else a
        if lead:
            out = out.reshape(out.shape[lead:])
        return np.asarray(out).reshape(self.shape)

    def backward(self, g):
        return (g.broadcast_to(self.inputs[0].shape),)


class Reshape(Function):
    def __init__(self, shape):
        self.shape = shape

    def forward(self, a):
        try:
            return a.reshape(self.shape)
        except ValueError as exc:
            raise DimensionError(f"cannot reshape {a.shape} to {self.shape}") from exc

    def backward(self, g):
        return (g.reshape(self.inputs[0].shape),)


class Transpose(Function):
    def __init__(self, axes):
        self.axes = tuple(axes)

    def forward(self, a):
        return a.transpose(self.axes)

    def backward(self, g):
        return (g.transpose(tuple(np.argsort(self.axes))),)


class Flip(Function):
    def __init__(self, axis: int):
        self.axis = axis

    def forward(self, a):
        return np.flip(a, self.axis)

    def backward(self, g):
        return (g.flip(self.axis),)


def _is_basic(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


class GetItem(Function):
    def __init__(self, idx):
        self.idx = idx

    def forward(self, a):
        return a[self.idx]

    def backward(self, g):
        return (ScatterInto(self.idx, self.inputs[0].shape)(g),)


class ScatterInto(Function):
    """Place ``g`` at ``idx`` inside a zero array of ``shape`` (adjoint of GetItem)."""

    def __init__(self, idx, shape):
        self.idx = idx
        self.shape = shape

    def forward(self, g):
        out = np.zeros(self.shape, dtype=g.dtype)
        if _is_basic(self.idx):
            out[self.idx] += g
        else:
            np.add.at(out, self.idx, g)
        return out

    def backward(self, g):
        return (g[self.idx],)


class Concat(Function):
    def __init__(self, axis: int):
        self.axis = axis

    def forward(self, *arrays):
        try:
            return np.concatenate(arrays, axis=self.axis)
        except ValueError as exc:
            raise DimensionError(str(exc)) from exc

    def backward(self, g):
        grads, start = [], 0
        ax = self.axis % g.ndim
        for t, need in zip(self.inputs, self.needs):
            stop = start + t.shape[ax]
            if need:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(start, stop)
                grads.append(g[tuple(sl)])
            else:
                grads.append(None)
            start = stop
        return tuple(grads)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return Concat(axis)(*tensors)


# ---------------------------------------------------------------------------
# convolution support: patch extraction and its adjoint
# ---------------------------------------------------------------------------


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    # patches are laid out (kh, kw, C) so the channel axis stays contiguous
    b, c, h, w = x.shape
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise DimensionError(f"kernel {k} does not fit input {h}x{w} with padding {pad}")
    xt = x.transpose(0, 2, 3, 1)
    if pad:
        buf = np.zeros((b, h + 2 * pad, w + 2 * pad, c), dtype=x.dtype)
        buf[:, pad:pad + h, pad:pad + w, :] = xt
        xt = buf
    else:
        xt = np.ascontiguousarray(xt)
    sb, sh, sw, sc = xt.strides
    view = as_strided(xt, (b, ho, wo, k, k, c), (sb, sh * stride, sw * stride, sh, sw, sc),
                      writeable=False)
    return view.reshape(b * ho * wo, k * k * c)


def _col2im(cols: np.ndarray, xshape, k: int, stride: int, pad: int) -> np.ndarray:
    b, c, h, w = xshape
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    cols = cols.reshape(b, ho, wo, k, k, c)
    out = np.zeros((b, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += cols[:, :, :, i, j, :]
    if pad:
        out = out[:, pad:pad + h, pad:pad + w, :]
    return out.transpose(0, 3, 1, 2)


class Im2Col(Function):
    """[B, C, H, W] -> [B*Ho*Wo, k*k*C] sliding patches (zero padded)."""

    def __init__(self, k: int, stride: int, pad: int):
        self.k, self.stride, self.pad = k, stride, pad

    def forward(self, x):
        if x.ndim != 4:
            raise DimensionError(f"expected [B, C, H, W], got {x.shape}")
        return _im2col(x, self.k, self.stride, self.pad)

    def backward(self, g):
        return (Col2Im(self.inputs[0].shape, self.k, self.stride, self.pad)(g),)


class Col2Im(Function):
    def __init__(self, xshape, k: int, stride: int, pad: int):
        self.xshape, self.k, self.stride, self.pad = tuple(xshape), k, stride, pad

    def forward(self, cols):
        return _col2im(cols, self.xshape, self.k, self.stride, self.pad)

    def backward(self, g):
        return (Im2Col(self.k, self.stride, self.pad)(g),)


def _conv_composite(x: Tensor, weight: Tensor, stride: int, padding: int) -> Tensor:
    o, c, k, _ = weight.shape
    b, _, h, w = x.shape
    ho, wo = conv_out_size(h, k, stride, padding), conv_out_size(w, k, stride, padding)
    cols = Im2Col(k, stride, padding)(x)
    out = cols @ weight.transpose(0, 2, 3, 1).reshape(o, k * k * c).T
    return out.reshape(b, ho, wo, o).transpose(0, 3, 1, 2)


class Conv2dFn(Function):
    """Bias-free 2-D cross-correlation as a single tape entry.

    First-order backward runs on arrays: the input gradient is accumulated as
    one GEMM per kernel offset. When a differentiable graph is requested the
    backward is rebuilt from Im2Col/MatMul so it can be differentiated again.
    """

    def __init__(self, stride: int, padding: int):
        self.stride, self.padding = stride, padding

    def forward(self, x, w):
        o, c, k, _ = w.shape
        b, _, h, wd = x.shape
        self.ho = conv_out_size(h, k, self.stride, self.padding)
        self.wo = conv_out_size(wd, k, self.stride, self.padding)
        self.cols = _im2col(x, k, self.stride, self.padding)
        self.wmat = w.transpose(0, 2, 3, 1).reshape(o, k * k * c)
        out = self.cols @ self.wmat.T
        return out.reshape(b, self.ho, self.wo, o).transpose(0, 3, 1, 2)

    def backward(self, g):
        x, w = self.inputs
        o, c, k, _ = w.shape
        b, _, h, wd = x.shape
        s, p = self.stride, self.padding
        if is_grad_enabled():
            g2 = g.transpose(0, 2, 3, 1).reshape(b * self.ho * self.wo, o)
            gx = gw = None
            if self.needs[0]:
                wmat = w.transpose(0, 2, 3, 1).reshape(o, k * k * c)
                gx = Col2Im(x.shape, k, s, p)(g2 @ wmat)
            if self.needs[1]:
                cols = Im2Col(k, s, p)(x)
                gw = (cols.T @ g2).reshape(k, k, c, o).transpose(3, 2, 0, 1)
            return gx, gw
        g2 = g.data.transpose(0, 2, 3, 1).reshape(b * self.ho * self.wo, o)
        gx = gw = None
        if self.needs[1]:
            gw = Tensor._wrap(
                (self.cols.T @ g2).reshape(k, k, c, o).transpose(3, 2, 0, 1))
        if self.needs[0]:
            out = np.zeros((b, h + 2 * p, wd + 2 * p, c), dtype=g2.dtype)
            wk = np.ascontiguousarray(w.data.transpose(2, 3, 0, 1))  # [k, k, O, C]
            ho, wo = self.ho, self.wo
            for i in range(k):
                for j in range(k):
                    part = (g2 @ wk[i, j]).reshape(b, ho, wo, c)
                    out[:, i:i + s * ho:s, j:j + s * wo:s, :] += part
            if p:
                out = out[:, p:p + h, p:p + wd, :]
            gx = Tensor._wrap(out.transpose(0, 3, 1, 2))
        return gx, gw


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. x: [B, C, H, W], weight: [O, C, k, k]."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError("conv2d expects 4-D input and weight")
    o, c, kh, kw = weight.shape
    if x.shape[1] != c:
        raise DimensionError(f"conv2d: input has {x.shape[1]} channels, weight expects {c}")
    if kh != kw:
        raise DimensionError("only square kernels are supported")
    if conv_out_size(x.shape[2], kh, stride, padding) < 1:
        raise DimensionError(f"kernel {kh} does not fit input {x.shape[2:]} with padding {padding}")
    out = Conv2dFn(stride, padding)(x, weight)
    if bias is not None:
        out = out + bias.reshape(1, o, 1, 1)
    return out


# ---------------------------------------------------------------------------
# composite activations
# ---------------------------------------------------------------------------


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return where(x.data > 0, x, x * slope)


def prelu(x: Tensor, a: Tensor) -> Tensor:
    """max(0, x) + a * min(0, x); ``a`` broadcasts over x (per channel on axis 1)."""
    if a.size > 1 and x.ndim >= 2:
        a = a.reshape((1, a.size) + (1,) * (x.ndim - 2))
    return where(x.data > 0, x, x * a)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    return x.clamp(lo, hi)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = Tensor._wrap(x.data.max(axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def safe_norm(x: Tensor, axis) -> Tensor:
    """Euclidean norm whose gradient is 0 (not NaN) where the norm vanishes."""
    sq = (x * x).sum(axis=axis)
    pos = sq.data > 0
    safe = where(pos, sq, 1.0)
    return where(pos, safe.sqrt(), 0.0)


def elementwise(op: str, x: Tensor, y: Tensor | None = None, **kw) -> Tensor:
    """Dispatch by name: add, sub, mul, tanh, prelu, leaky_relu, clamp."""
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "tanh":
        return x.tanh()
    if op == "prelu":
        return prelu(x, y)
    if op == "leaky_relu":
        return leaky_relu(x, kw.get("slope", 0.2))
    if op == "clamp":
        return x.clamp(kw.get("lo", -1.0), kw.get("hi", 1.0))
    raise ContractError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------


def numeric_grad(fn, arrays: Sequence[np.ndarray], step: float = 1e-3,
                 coords: dict[int, np.ndarray] | None = None) -> list[np.ndarray]:
    """Central differences of scalar ``fn(*arrays)`` w.r.t. each array (mutated in place).

    ``coords`` optionally restricts array ``i`` to a subset of flat indices; the
    other entries of its result are left at zero.
    """
    out = []
    for i, arr in enumerate(arrays):
        g = np.zeros_like(arr, dtype=np.float64)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        idxs = coords.get(i, range(flat.size)) if coords else range(flat.size)
        for j in idxs:
            orig = flat[j]
            flat[j] = orig + step
            fp = float(fn(*arrays))
            flat[j] = orig - step
            fm = float(fn(*arrays))
            flat[j] = orig
            gflat[j] = (fp - fm) / (2 * step)
        out.append(g)
    return out


def fd_relative_error(auto: np.ndarray, fd: np.ndarray) -> float:
    """max |auto - fd| / max(1, |fd|) over entries."""
    auto = np.asarray(auto, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    return float(np.max(np.abs(auto - fd) / np.maximum(1.0, np.abs(fd)))) if fd.size else 0.0
