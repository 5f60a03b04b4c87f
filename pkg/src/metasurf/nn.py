"""Layers, the Adam optimizer and the binary checkpoint format."""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DimensionError, FormatError


class Parameter(Tensor):
    """A trainable leaf. Stays a parameter even while ``requires_grad`` is off."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Minimal container: parameters are attributes holding tracked Tensors,
    buffers live in ``self._buffers`` (numpy arrays)."""

    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, value in getattr(self, "_buffers", {}).items():
            yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict((n, p.data) for n, p in self.named_parameters())
        out.update((n, b) for n, b in self.named_buffers())
        return out

    def load_state_dict(self, state: dict) -> None:
        params = dict(self.named_parameters())
        buffers = {}
        for prefix, mod in self._modules_with_prefix():
            for name in getattr(mod, "_buffers", {}):
                buffers[prefix + name] = (mod, name)
        expected = set(params) | set(buffers)
        missing = expected - set(state)
        if missing:
            raise FormatError(f"checkpoint is missing {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} != model {p.shape}")
            p.data = arr.astype(p.dtype).copy()
        for name, (mod, key) in buffers.items():
            arr = np.asarray(state[name])
            if arr.shape != mod._buffers[key].shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} mismatch")
            mod._buffers[key] = arr.astype(mod._buffers[key].dtype).copy()

    def _modules_with_prefix(self, prefix: str = ""):
        yield prefix, self
        for name, child in self._children():
            yield from child._modules_with_prefix(f"{prefix}{name}.")

    def train(self, mode: bool = True) -> "Module":
        for _, mod in self._modules_with_prefix():
            mod.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place (e.g. to float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for _, mod in self._modules_with_prefix():
            for k, v in getattr(mod, "_buffers", {}).items():
                mod._buffers[k] = v.astype(dtype)
        return self


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Parameter:
    bound = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape))


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = _uniform(rng, (n_out, n_in), n_in)
        self.bias = _uniform(rng, (n_out,), n_in) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[1]:
            raise DimensionError(f"Linear expects last dim {self.weight.shape[1]}, got {x.shape}")
        y = x @ self.weight.T
        return y + self.bias if self.bias is not None else y


class Conv2d(Module):
    def __init__(self, in_c: int, out_c: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None):
        fan_in = in_c * k * k
        self.weight = _uniform(rng, (out_c, in_c, k, k), fan_in)
        self.bias = _uniform(rng, (out_c,), fan_in)
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def output_size(self, n: int) -> int:
        return ad.conv_out_size(n, self.weight.shape[2], self.stride, self.padding)

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.eps = eps
        self.momentum = momentum
        dt = ad.default_dtype()
        self._buffers = {"running_mean": np.zeros(channels, dtype=dt),
                         "running_var": np.ones(channels, dtype=dt)}

    def normalize(self, x: Tensor) -> Tensor:
        """The pre-affine normalized activations (running statistics untouched)."""
        c = x.shape[1]
        if self.training:
            mean = x.mean(axis=(0, 2, 3), keepdims=True)
            centered = x - mean
            var = (centered * centered).mean(axis=(0, 2, 3), keepdims=True)
            return centered / (var + self.eps).sqrt()
        mean = ad.constant(self._buffers["running_mean"].reshape(1, c, 1, 1), dtype=x.dtype)
        var = ad.constant(self._buffers["running_var"].reshape(1, c, 1, 1), dtype=x.dtype)
        return (x - mean) / (var + self.eps).sqrt()

    def _update_running(self, mean: np.ndarray, var: np.ndarray, shape) -> None:
        n = shape[0] * shape[2] * shape[3]
        m = self.momentum
        rm, rv = self._buffers["running_mean"], self._buffers["running_var"]
        unbiased = var.reshape(-1) * (n / max(n - 1, 1))
        self._buffers["running_mean"] = ((1 - m) * rm + m * mean.reshape(-1)).astype(rm.dtype)
        self._buffers["running_var"] = ((1 - m) * rv + m * unbiased).astype(rv.dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.gamma.shape[0]:
            raise DimensionError(f"BatchNorm2d({self.gamma.shape[0]}) got {x.shape}")
        c = x.shape[1]
        if self.training:
            fn = _BatchNormTrain(self.eps)
            out = fn(x, self.gamma, self.beta)
            self._update_running(fn.mean, fn.var, x.shape)
            return out
        inv = (ad.constant(self._buffers["running_var"], dtype=x.dtype) + self.eps) ** -0.5
        scale = self.gamma * inv
        shift = self.beta - scale * ad.constant(self._buffers["running_mean"], dtype=x.dtype)
        return x * scale.reshape(1, c, 1, 1) + shift.reshape(1, c, 1, 1)


class _BatchNormTrain(ad.Function):
    """Batch-statistics normalization + affine as one tape entry.

    The backward pass uses the closed form on arrays unless a differentiable
    graph is being built, in which case it re-derives the gradient from
    composite Tensor operations.
    """

    def __init__(self, eps: float):
        self.eps = eps

    def forward(self, x, gamma, beta):
        c = x.shape[1]
        self.mean = x.mean(axis=(0, 2, 3), keepdims=True)
        centered = x - self.mean
        self.var = (centered * centered).mean(axis=(0, 2, 3), keepdims=True)
        self.inv = 1.0 / np.sqrt(self.var + self.eps)
        self.xhat = centered * self.inv
        return self.xhat * gamma.reshape(1, c, 1, 1) + beta.reshape(1, c, 1, 1)

    def backward(self, g):
        x, gamma, beta = self.inputs
        c = x.shape[1]
        if ad.is_grad_enabled():
            xt = x if x.requires_grad else x.detach()
            mean = xt.mean(axis=(0, 2, 3), keepdims=True)
            centered = xt - mean
            var = (centered * centered).mean(axis=(0, 2, 3), keepdims=True)
            xhat = centered / (var + self.eps).sqrt()
            gx = None
            if self.needs[0]:
                gm = g.mean(axis=(0, 2, 3), keepdims=True)
                gxm = (g * xhat).mean(axis=(0, 2, 3), keepdims=True)
                scale = gamma.reshape(1, c, 1, 1) / (var + self.eps).sqrt()
                gx = scale * (g - gm - xhat * gxm)
            gg = (g * xhat).sum(axis=(0, 2, 3)) if self.needs[1] else None
            gb = g.sum(axis=(0, 2, 3)) if self.needs[2] else None
            return gx, gg, gb
        gd = g.data
        gx = gg = gb = None
        if self.needs[0]:
            gm = gd.mean(axis=(0, 2, 3), keepdims=True)
            gxm = (gd * self.xhat).mean(axis=(0, 2, 3), keepdims=True)
            scale = gamma.data.reshape(1, c, 1, 1) * self.inv
            gx = Tensor._wrap(scale * (gd - gm - self.xhat * gxm))
        if self.needs[1]:
            gg = Tensor._wrap((gd * self.xhat).sum(axis=(0, 2, 3)))
        if self.needs[2]:
            gb = Tensor._wrap(gd.sum(axis=(0, 2, 3)))
        return gx, gg, gb


class PReLU(Module):
    def __init__(self, num_parameters: int = 1, init: float = 0.25):
        self.weight = Parameter(np.full(num_parameters, init))

    def forward(self, x: Tensor) -> Tensor:
        return ad.prelu(x, self.weight)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """[B, C*r*r, H, W] -> [B, C, H*r, W*r] with out[b, c, h*r+i, w*r+j] = x[b, c*r*r + i*r + j, h, w]."""
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects [B, C, H, W], got {x.shape}")
    b, cr2, h, w = x.shape
    if cr2 % (r * r):
        raise DimensionError(f"{cr2} channels not divisible by r^2={r * r}")
    c = cr2 // (r * r)
    y = x.reshape(b, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return y.reshape(b, c, h * r, w * r)


class ResidualBlock(Module):
    """x + BN(conv(PReLU(BN(conv(x)))))."""

    def __init__(self, channels: int, rng: np.random.Generator, k: int = 3):
        self.conv1 = Conv2d(channels, channels, k, rng)
        self.bn1 = BatchNorm2d(channels)
        self.act = PReLU()
        self.conv2 = Conv2d(channels, channels, k, rng)
        self.bn2 = BatchNorm2d(channels)
        self.channels = channels

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise DimensionError(f"ResidualBlock({self.channels}) got input {x.shape}")
        h = self.act(self.bn1(self.conv1(x)))
        return x + self.bn2(self.conv2(h))


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention; weights use the [out, in] convention.

    For a single token the output reduces to ``Wo @ Wv @ x``.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if heads < 1 or dim % heads:
            raise ConfigError(f"embed dim {dim} is not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.wq = _uniform(rng, (dim, dim), dim)
        self.wk = _uniform(rng, (dim, dim), dim)
        self.wv = _uniform(rng, (dim, dim), dim)
        self.wo = _uniform(rng, (dim, dim), dim)
        self.last_weights: np.ndarray | None = None

    def forward(self, seq: Tensor) -> Tensor:
        squeeze = seq.ndim == 2
        if squeeze:
            seq = seq.reshape(1, *seq.shape)
        b, n, d = seq.shape
        if d != self.dim:
            raise DimensionError(f"attention dim {self.dim} got tokens of size {d}")
        h, dh = self.heads, d // self.heads

        def split(w):
            return (seq @ w.T).reshape(b, n, h, dh).transpose(0, 2, 1, 3)

        q, k, v = split(self.wq), split(self.wk), split(self.wv)
        att = ad.softmax((q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh)), axis=-1)
        self.last_weights = att.data
        out = (att @ v).transpose(0, 2, 1, 3).reshape(b, n, d) @ self.wo.T
        return out.reshape(n, d) if squeeze else out


def attention_forward(mha: MultiHeadAttention, seq: Tensor) -> Tensor:
    return mha(seq)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def adam_step(params: list[Tensor], grads: list, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params``."""
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ContractError("Adam state was built for a different parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != p.shape:
            raise ContractError(f"grad shape {g.shape} != param shape {p.shape}")
        m = state.m[i] = b1 * state.m[i] + (1 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1 - b2) * (g * g)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.dtype)


class Adam:
    """Adam over a fixed parameter list, reading gradients from ``p.grad``."""

    def __init__(self, params, lr: float = 2e-4, betas=(0.5, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# checkpoint format: b"MSNN" + 0x01, then per tensor
#   u32 name length, name (utf-8), u32 rank, rank x u32 dims, float32 values (all LE)
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"MSNN"
CKPT_VERSION = 1


def save_checkpoint(path, tensors: "OrderedDict[str, np.ndarray] | dict") -> None:
    chunks = [CKPT_MAGIC, bytes([CKPT_VERSION])]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(np.asarray(arr.shape, dtype="<u4").tobytes())
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    buf = Path(path).read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not an MSNN checkpoint")
    if len(buf) < 5 or buf[4] != CKPT_VERSION:
        version = buf[4] if len(buf) > 4 else None
        raise FormatError(f"{path}: unsupported checkpoint version {version} (expected {CKPT_VERSION})")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    pos = 5
    try:
        while pos < len(buf):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = tuple(int(d) for d in np.frombuffer(buf, dtype="<u4", count=rank, offset=pos))
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            vals = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
            out[name] = vals.reshape(dims).astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    return out
