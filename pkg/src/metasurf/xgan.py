"""Conditional generator/discriminator pair steered by a frozen surrogate.

The generator maps (response, noise) to a 16x16 quadrant, symmetrizes and
rounds it to ternary codes, then mirrors it into a full 32x32 pattern. The
adversarial terms are Sinkhorn costs between the discriminator's output vector
and a label; the surrogate term is the L1 gap between the requested response
and the surrogate's prediction for the generated pattern.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .nn import Adam, BatchNorm2d, Conv2d, Linear, Module, PReLU, ResidualBlock, pixel_shuffle
from .oracle import N_FREQ, simulate
from .pattern import round_ternary
from .sinkhorn import SinkhornConfig, sinkhorn_to_target
from .surrogate import FResNet, as_input, l1_loss

log = logging.getLogger(__name__)


class StraightThroughRound(ad.Function):
    """Exact ternary rounding forward, identity backward."""

    def forward(self, x):
        return round_ternary(x)

    def backward(self, g):
        return (g,)


def mirror_tensor(q: Tensor) -> Tensor:
    """[..., n, n] quadrant -> [..., 2n, 2n] with mirrored copies (differentiable)."""
    top = ad.concat([q, q.flip(-1)], axis=-1)
    return ad.concat([top, top.flip(-2)], axis=-2)


@dataclass(frozen=True)
class GeneratorConfig:
    response_dim: int = N_FREQ
    noise_dim: int = 10
    channels: int = 128
    base_size: int = 8
    upscale: int = 2

    @property
    def quadrant(self) -> int:
        return self.base_size * self.upscale

    @property
    def pattern_size(self) -> int:
        return 2 * self.quadrant


@dataclass(frozen=True)
class DiscriminatorConfig:
    image_size: int = 32
    channels: tuple[int, ...] = (16, 32)
    head_channels: int = 8
    out_dim: int = 16


@dataclass
class GeneratorOutput:
    pattern: Tensor  # [B, 1, 2q, 2q] ternary
    soft: Tensor  # same layout, before rounding


class Generator(Module):
    def __init__(self, cfg: GeneratorConfig = GeneratorConfig(), seed: int = 0,
                 round_mode: str = "ste"):
        if cfg.channels % cfg.upscale ** 2:
            raise ConfigError("generator channels must be divisible by upscale^2")
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.round_mode = round_mode
        c, s = cfg.channels, cfg.base_size
        self.fc = Linear(cfg.response_dim + cfg.noise_dim, c * s * s, rng)
        self.fc_act = PReLU()
        self.up_conv = Conv2d(c, c, 3, rng)
        self.up_bn = BatchNorm2d(c)
        self.up_act = PReLU()
        r = c // cfg.upscale ** 2
        self.res = ResidualBlock(r, rng)
        self.out_conv = Conv2d(r, 1, 3, rng)

    def forward(self, c: Tensor, z: Tensor) -> GeneratorOutput:
        cfg = self.cfg
        if c.ndim != 2 or c.shape[1] != cfg.response_dim:
            raise ContractError(f"responses must be [B, {cfg.response_dim}], got {c.shape}")
        if z.ndim != 2 or z.shape != (c.shape[0], cfg.noise_dim):
            raise ContractError(f"noise must be [B, {cfg.noise_dim}], got {z.shape}")
        b = c.shape[0]
        h = self.fc_act(self.fc(ad.concat([c, z], axis=1)))
        h = h.reshape(b, cfg.channels, cfg.base_size, cfg.base_size)
        h = self.up_act(pixel_shuffle(self.up_bn(self.up_conv(h)), cfg.upscale))
        h = self.out_conv(self.res(h)).tanh()
        q = h.reshape(b, cfg.quadrant, cfg.quadrant)
        sym = (q + q.swapaxes(-1, -2)) * 0.5
        soft = (sym + 1.0) * 0.5
        hard = StraightThroughRound()(soft) if self.round_mode == "ste" else soft
        n = cfg.pattern_size
        return GeneratorOutput(mirror_tensor(hard).reshape(b, 1, n, n),
                               mirror_tensor(soft).reshape(b, 1, n, n))

    def sample(self, responses, noise) -> np.ndarray:
        """Eval-mode patterns [B, 32, 32] (float64) for numpy inputs."""
        responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
        noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
        if responses.shape[1] != self.cfg.response_dim:
            raise ContractError(f"response must have length {self.cfg.response_dim}")
        was = self.training
        self.eval()
        with ad.no_grad():
            out = self(ad.constant(responses), ad.constant(noise)).pattern.data
        self.train(was)
        return out[:, 0].astype(np.float64)


def generate(G: Generator, c, z) -> np.ndarray:
    """One pattern for response ``c`` and noise ``z``."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or len(c) != G.cfg.response_dim:
        raise ContractError(f"response must have length {G.cfg.response_dim}, got shape {c.shape}")
    return G.sample(c[None], np.asarray(z, dtype=np.float64)[None])[0]


class Discriminator(Module):
    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        convs, prev = [], 1
        for ch in cfg.channels:
            convs.append(Conv2d(prev, ch, 3, rng, stride=2))
            convs.append(Conv2d(ch, ch, 3, rng, stride=1))
            prev = ch
        self.convs = convs
        self.head_conv = Conv2d(prev, cfg.head_channels, 3, rng)
        side = cfg.image_size // 2 ** len(cfg.channels)
        self.fc = Linear(cfg.head_channels * side * side, cfg.out_dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        """[B, 1, n, n] -> [B, out_dim]."""
        h = x
        for conv in self.convs:
            h = ad.leaky_relu(conv(h), 0.2)
        h = self.head_conv(h)
        return self.fc(h.reshape(h.shape[0], int(np.prod(h.shape[1:]))))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Labels:
    real: float = -1.0
    fake: float = 1.0
    generator: float = 1.0


def generator_loss(x_g: Tensor, c, D: Module, S: FResNet, lam: float = 1.0,
                   sink: SinkhornConfig = SinkhornConfig(), labels: Labels = Labels()):
    """Returns (total, adversarial, l1) with total = adversarial + lam * l1."""
    adv = sinkhorn_to_target(D(x_g), labels.generator, sink)
    pred = S(x_g)
    l1 = l1_loss(pred, c)
    return adv + l1 * lam, adv, l1


def gradient_penalty(x_r, x_g, D: Module, u=None, rng: np.random.Generator | None = None) -> Tensor:
    """mean_b (||d s(x_p) / d x_p||_2 - 1)^2 at x_p = u x_r + (1 - u) x_g, s = mean of D's outputs."""
    xr = x_r.data if isinstance(x_r, Tensor) else np.asarray(x_r)
    xg = x_g.data if isinstance(x_g, Tensor) else np.asarray(x_g)
    if xr.shape != xg.shape:
        raise ContractError(f"real batch {xr.shape} and generated batch {xg.shape} differ")
    b = xr.shape[0]
    if u is None:
        u = (rng or np.random.default_rng()).uniform(size=b)
    u = np.asarray(u, dtype=xr.dtype).reshape((b,) + (1,) * (xr.ndim - 1))
    xp = Tensor(u * xr + (1.0 - u) * xg, requires_grad=True, dtype=xr.dtype)
    s = D(xp).mean(axis=1)
    (gx,) = ad.grad(s.sum(), [xp], create_graph=True)
    norms = ad.safe_norm(gx.reshape(b, -1), axis=1)
    dev = norms - 1.0
    return (dev * dev).mean()


def discriminator_loss(x_r, x_g, D: Module, gamma: float = 10.0, x_g_soft=None, u=None,
                       rng: np.random.Generator | None = None,
                       sink: SinkhornConfig = SinkhornConfig(), labels: Labels = Labels()):
    """Returns (total, real_term, fake_term, penalty)."""
    x_r = x_r if isinstance(x_r, Tensor) else ad.constant(x_r)
    x_g = x_g if isinstance(x_g, Tensor) else ad.constant(x_g)
    if x_r.shape[0] != x_g.shape[0]:
        raise ContractError(f"batch sizes differ: {x_r.shape[0]} real vs {x_g.shape[0]} generated")
    real = sinkhorn_to_target(D(x_r), labels.real, sink)
    fake = sinkhorn_to_target(D(x_g.detach()), labels.fake, sink)
    total = real + fake
    if gamma:
        soft = x_g if x_g_soft is None else x_g_soft
        pen = gradient_penalty(x_r, soft, D, u=u, rng=rng)
        total = total + pen * gamma
    else:
        pen = ad.constant(0.0)
    return total, real, fake, pen


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class XganTrainConfig:
    lam: float = 1.0
    gamma: float = 10.0
    n_critic: int = 6
    batch: int = 64
    steps: int = 2000
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    labels: Labels = field(default_factory=Labels)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def __post_init__(self):
        if self.n_critic < 1:
            raise ConfigError("n_critic must be >= 1")
        if self.lam < 0 or self.gamma < 0:
            raise ConfigError("lambda and gamma must be nonnegative")
        if self.batch < 1 or self.steps < 1:
            raise ConfigError("batch and steps must be positive")


@dataclass
class XganReport:
    step: list[int] = field(default_factory=list)
    loss_g: list[float] = field(default_factory=list)
    loss_d: list[float] = field(default_factory=list)
    sinkhorn_g: list[float] = field(default_factory=list)
    l1_term: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    seconds: float = 0.0

    COLUMNS = ("step", "L_G", "L_D", "sinkhorn_G", "l1_term", "penalty")

    def rows(self):
        return zip(self.step, self.loss_g, self.loss_d, self.sinkhorn_g, self.l1_term, self.penalty)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _trainable(module: Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad = flag


def train_xgan(patterns, responses, S: FResNet | None, cfg: XganTrainConfig = XganTrainConfig(),
               G: Generator | None = None, D: Discriminator | None = None,
               on_step=None) -> tuple[Generator, Discriminator, XganReport]:
    """Alternate ``n_critic`` discriminator batches with one generator batch."""
    if S is None:
        raise ConfigError("a pretrained surrogate is required")
    patterns = np.asarray(patterns)
    responses = np.asarray(responses)
    if len(patterns) == 0 or len(patterns) != len(responses):
        raise ConfigError("need a nonempty labeled dataset")
    G = G or Generator(cfg.generator, seed=cfg.seed)
    D = D or Discriminator(cfg.discriminator, seed=cfg.seed + 1)
    opt_g = Adam(G.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_d = Adam(D.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    rng = np.random.default_rng(cfg.seed + 2)
    rep = XganReport()
    n, nz = len(patterns), cfg.generator.noise_dim
    S.eval()
    _trainable(S, False)
    G.train()
    t0 = time.perf_counter()
    try:
        for step in range(cfg.steps):
            # discriminator: G frozen, fakes detached
            _trainable(G, False)
            _trainable(D, True)
            d_losses, pens = [], []
            for _ in range(cfg.n_critic):
                real = patterns[rng.integers(0, n, cfg.batch)]
                cond = responses[rng.integers(0, n, cfg.batch)]
                z = rng.standard_normal((cfg.batch, nz))
                with ad.no_grad():
                    out = G(ad.constant(cond), ad.constant(z))
                u = rng.uniform(size=cfg.batch)
                opt_d.zero_grad()
                loss_d, _, _, pen = discriminator_loss(
                    as_input(real), out.pattern, D, cfg.gamma, x_g_soft=out.soft, u=u,
                    sink=cfg.sinkhorn, labels=cfg.labels)
                loss_d.backward()
                opt_d.step()
                d_losses.append(loss_d.item())
                pens.append(pen.item())
            # generator: D and S frozen
            _trainable(D, False)
            _trainable(G, True)
            cond = responses[rng.integers(0, n, cfg.batch)]
            z = rng.standard_normal((cfg.batch, nz))
            opt_g.zero_grad()
            out = G(ad.constant(cond), ad.constant(z))
            loss_g, adv, l1 = generator_loss(out.pattern, cond, D, S, cfg.lam, cfg.sinkhorn, cfg.labels)
            loss_g.backward()
            opt_g.step()
            rep.step.append(step)
            rep.loss_g.append(loss_g.item())
            rep.loss_d.append(float(np.mean(d_losses)))
            rep.sinkhorn_g.append(adv.item())
            rep.l1_term.append(l1.item())
            rep.penalty.append(float(np.mean(pens)))
            if not (np.isfinite(rep.loss_g[-1]) and np.isfinite(rep.loss_d[-1])):
                raise FloatingPointError(f"non-finite loss at generator step {step}")
            if step % 100 == 0:
                log.info("xgan step %d L_G %.4f L_D %.4f l1 %.4f pen %.4f", step, rep.loss_g[-1],
                         rep.loss_d[-1], rep.l1_term[-1], rep.penalty[-1])
            if on_step is not None:
                on_step(step, G, D)
    finally:
        _trainable(G, True)
        _trainable(D, True)
        _trainable(S, True)
    rep.seconds = time.perf_counter() - t0
    return G, D, rep


# ---------------------------------------------------------------------------
# design inference
# ---------------------------------------------------------------------------


@dataclass
class DesignResult:
    pattern: np.ndarray
    mae: float
    attempts: int


def _noise(seed: int, attempt: int, dim: int) -> np.ndarray:
    return np.random.default_rng(seed + attempt).standard_normal(dim)


def design(c_target, G: Generator, oracle=simulate, tau: float = 0.1, max_attempts: int = 64,
           seed: int = 0) -> DesignResult:
    """Sample until the oracle MAE drops below ``tau``; otherwise keep the best of ``max_attempts``."""
    c_target = np.asarray(c_target, dtype=np.float64)
    best = None
    for k in range(max_attempts):
        p = generate(G, c_target, _noise(seed, k, G.cfg.noise_dim))
        mae = float(np.abs(oracle(p) - c_target).mean())
        if best is None or mae < best.mae:
            best = DesignResult(p, mae, k + 1)
        if mae < tau:
            break
    best.attempts = k + 1
    return best


def design_many(targets, G: Generator, oracle=simulate, tau: float = 0.1, max_attempts: int = 64,
                seed: int = 0, chunk: int = 512) -> list[DesignResult]:
    """``design`` for many targets with batched generation.

    Attempt ``k`` of every target uses the same noise as ``design`` with the
    same seed, and results are selected with the same first-below-tau rule.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    m = len(targets)
    z = np.stack([_noise(seed, k, G.cfg.noise_dim) for k in range(max_attempts)])
    cond = np.repeat(targets, max_attempts, axis=0)
    noise = np.tile(z, (m, 1))
    pats = np.concatenate([G.sample(cond[i:i + chunk], noise[i:i + chunk])
                           for i in range(0, len(cond), chunk)])
    pats = pats.reshape(m, max_attempts, *pats.shape[1:])
    maes = np.abs(oracle(pats.reshape(-1, *pats.shape[2:])).reshape(m, max_attempts, -1)
                  - targets[:, None, :]).mean(axis=-1)
    out = []
    for i in range(m):
        hits = np.nonzero(maes[i] < tau)[0]
        if len(hits):
            k = int(hits[0])
            j = int(np.argmin(maes[i, :k + 1]))
            out.append(DesignResult(pats[i, j], float(maes[i, j]), k + 1))
        else:
            j = int(np.argmin(maes[i]))
            out.append(DesignResult(pats[i, j], float(maes[i, j]), max_attempts))
    return out
