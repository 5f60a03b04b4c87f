"""Forward surrogate: residual CNN backbone + token attention -> 100-point response."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, ModelStateError
from .metrics import acc_ave, evaluate_designs, mae_ave, r2
from .nn import Adam, BatchNorm2d, Conv2d, Linear, Module, MultiHeadAttention, Parameter, PReLU, ResidualBlock
from .oracle import N_FREQ

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FResNetConfig:
    image_size: int = 32
    channels: tuple[int, ...] = (16, 32, 64, 64)
    heads: int = 4
    token_dim: int = 64
    out_dim: int = N_FREQ

    @property
    def feature_size(self) -> int:
        return self.image_size // 2 ** (len(self.channels) - 1)

    @property
    def n_tokens(self) -> int:
        return self.feature_size ** 2


class Stage(Module):
    """Optional stride-2 transition conv followed by one residual block."""

    def __init__(self, in_c: int, out_c: int, downsample: bool, rng):
        self.down = None
        if downsample or in_c != out_c:
            self.down = Conv2d(in_c, out_c, 3, rng, stride=2 if downsample else 1)
            self.bn = BatchNorm2d(out_c)
            self.act = PReLU()
        self.block = ResidualBlock(out_c, rng)

    def forward(self, x: Tensor) -> Tensor:
        if self.down is not None:
            x = self.act(self.bn(self.down(x)))
        return self.block(x)


class FResNet(Module):
    def __init__(self, cfg: FResNetConfig = FResNetConfig(), seed: int = 0):
        if cfg.image_size % 2 ** (len(cfg.channels) - 1):
            raise ConfigError("image size must halve cleanly at every downsampling stage")
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        c0 = cfg.channels[0]
        self.stem = Conv2d(1, c0, 3, rng)
        self.stem_bn = BatchNorm2d(c0)
        self.stem_act = PReLU()
        stages, prev = [], c0
        for i, c in enumerate(cfg.channels):
            stages.append(Stage(prev, c, downsample=i < len(cfg.channels) - 1, rng=rng))
            prev = c
        self.stages = stages
        self.flatten_proj = Linear(prev, cfg.token_dim, rng)
        self.pos_embed = Parameter(rng.normal(0.0, 0.02, size=(cfg.n_tokens + 1, cfg.token_dim)))
        self.attention = MultiHeadAttention(cfg.token_dim, cfg.heads, rng)
        self.head = Linear(cfg.token_dim, cfg.out_dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        """x: [B, 1, n, n] codes as reals -> [B, out_dim] unclamped prediction."""
        if self.head is None:
            raise ModelStateError("surrogate has no output head")
        n = self.cfg.image_size
        if x.ndim == 3:
            x = x.reshape(x.shape[0], 1, n, n)
        if x.ndim != 4 or x.shape[1:] != (1, n, n):
            raise DimensionError(f"surrogate expects [B, 1, {n}, {n}], got {x.shape}")
        h = self.stem_act(self.stem_bn(self.stem(x)))
        for stage in self.stages:
            h = stage(h)
        b, c, fh, fw = h.shape
        tokens = self.flatten_proj(h.reshape(b, c, fh * fw).transpose(0, 2, 1))
        cls = tokens.mean(axis=1, keepdims=True)
        seq = ad.concat([cls, tokens], axis=1) + self.pos_embed
        out = self.attention(seq)
        return self.head(out[:, 0, :])


def as_input(patterns, dtype=None) -> Tensor:
    p = np.asarray(patterns)
    if p.ndim == 2:
        p = p[None]
    return ad.constant(p[:, None, :, :], dtype=dtype)


def predict(model: FResNet, patterns, batch: int = 256) -> np.ndarray:
    """Eval-mode predictions as a float64 array [N, out_dim]."""
    was = model.training
    model.eval()
    p = np.asarray(patterns)
    single = p.ndim == 2
    if single:
        p = p[None]
    outs = []
    with ad.no_grad():
        for i in range(0, len(p), batch):
            outs.append(model(as_input(p[i:i + batch])).data.astype(np.float64))
    model.train(was)
    out = np.concatenate(outs) if outs else np.zeros((0, model.cfg.out_dim))
    return out[0] if single else out


def l1_loss(pred: Tensor, target) -> Tensor:
    t = target if isinstance(target, Tensor) else ad.constant(target, dtype=pred.dtype)
    return (pred - t).abs().mean()


@dataclass
class SurrogateTrainReport:
    train_l1: list[float] = field(default_factory=list)
    test_l1: list[float] = field(default_factory=list)
    step_l1: list[float] = field(default_factory=list)
    mae_ave: float = float("nan")
    acc_ave: float = float("nan")
    r2: float = float("nan")
    baseline_mae: float = float("nan")


def train_surrogate(train_patterns, train_responses, test_patterns, test_responses, *,
                    epochs: int = 30, batch: int = 64, lr: float = 2e-4,
                    betas=(0.5, 0.999), seed: int = 0,
                    cfg: FResNetConfig = FResNetConfig(),
                    max_steps: int | None = None) -> tuple[FResNet, SurrogateTrainReport]:
    """Adam on the mean absolute error; deterministic given ``seed``."""
    train_patterns = np.asarray(train_patterns)
    train_responses = np.asarray(train_responses, dtype=np.float64)
    if len(train_patterns) == 0 or len(test_patterns) == 0:
        raise ConfigError("train and test sets must be nonempty")
    if epochs < 1 or batch < 1:
        raise ConfigError("epochs and batch must be positive")
    model = FResNet(cfg, seed=seed)
    # start the head at the mean training response so early steps fit the residual
    model.head.weight.data *= 0.1
    model.head.bias.data = train_responses.mean(axis=0).astype(model.head.bias.dtype)
    opt = Adam(model.parameters(), lr=lr, betas=betas)
    rng = np.random.default_rng(seed + 1)
    rep = SurrogateTrainReport()
    steps = 0
    n = len(train_patterns)
    for epoch in range(epochs):
        model.train()
        order = rng.permutation(n)
        total, count = 0.0, 0
        for i in range(0, n, batch):
            idx = order[i:i + batch]
            opt.zero_grad()
            loss = l1_loss(model(as_input(train_patterns[idx])), train_responses[idx])
            loss.backward()
            opt.step()
            val = loss.item()
            if not np.isfinite(val):
                raise FloatingPointError(f"surrogate loss became {val} at step {steps}")
            rep.step_l1.append(val)
            total += val * len(idx)
            count += len(idx)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        rep.train_l1.append(total / count)
        pred = predict(model, test_patterns)
        rep.test_l1.append(float(np.abs(pred - np.asarray(test_responses)).mean()))
        log.info("surrogate epoch %d train L1 %.5f test L1 %.5f", epoch, rep.train_l1[-1], rep.test_l1[-1])
        if max_steps is not None and steps >= max_steps:
            break
    evals = evaluate_designs(test_responses, predict(model, test_patterns))
    rep.mae_ave = mae_ave(evals)
    rep.acc_ave = acc_ave(rep.mae_ave)
    rep.r2 = r2(evals)[0]
    rep.baseline_mae = float(np.abs(np.asarray(test_responses) - train_responses.mean(axis=0)).mean())
    return model, rep
