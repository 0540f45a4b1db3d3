"""Conditional adversarial losses, the alternating training schedule and inference."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .networks import (
    DiscriminatorSpec,
    GeneratorSpec,
    discriminator_backward,
    discriminator_forward,
    generator_backward,
    generator_forward,
    init_discriminator,
    init_generator,
)
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

D_CLAMP = 1e-7
VARIANTS = ("non_saturating", "minimax_literal")


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 1
    batch_size: int = 6
    warmup_epochs: int = 4
    warmup_base: int = 6
    lam: float = 10.0
    seed: int = 0
    g_adv_variant: str = "non_saturating"
    l2_reduction: str = "mean"
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    max_g_steps: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.g_adv_variant not in VARIANTS:
            raise ValueError(f"g_adv_variant must be one of {VARIANTS}")
        if self.l2_reduction not in ("sum", "mean"):
            raise ValueError("l2_reduction must be 'sum' or 'mean'")

    def d_steps(self, epoch):
        """Discriminator steps per generator step in 1-based ``epoch``."""
        if epoch <= self.warmup_epochs:
            return max(1, self.warmup_base - epoch)
        return 1

    def to_dict(self):
        return asdict(self)


@dataclass
class LossParts:
    loss_d: float
    loss_g: float
    adv: float
    l2: float


def _clamp(prob):
    return np.clip(prob, D_CLAMP, 1 - D_CLAMP), (prob > D_CLAMP) & (prob < 1 - D_CLAMP)


def _l2(y, g_out, lam, reduction):
    diff = g_out.astype(np.float64) - y
    b = y.shape[0]
    norm = b if reduction == "sum" else y.size
    return lam * float(np.sum(diff * diff)) / norm, (2 * lam / norm) * diff


def _adv_g(p_fake, variant):
    pc, live = _clamp(p_fake)
    b = p_fake.shape[0]
    if variant == "non_saturating":
        return float(-np.mean(np.log(pc))), np.where(live, -1.0 / (b * pc), 0.0)
    return float(np.mean(np.log(1 - pc))), np.where(live, -1.0 / (b * (1 - pc)), 0.0)


def _loss_d(p_real, p_fake):
    rc, rlive = _clamp(p_real)
    fc, flive = _clamp(p_fake)
    b = p_real.shape[0]
    loss = float(-np.mean(np.log(rc)) - np.mean(np.log(1 - fc)))
    d_real = np.where(rlive, -1.0 / (b * rc), 0.0)
    d_fake = np.where(flive, 1.0 / (b * (1 - fc)), 0.0)
    return loss, d_real, d_fake


def cgan_losses(x, y, mask, gen, disc, lam=10.0, variant="non_saturating", reduction="mean", train=True, rng=None):
    """Discriminator and generator objectives on one batch (values only)."""
    g_out, _ = generator_forward(x, mask, gen, train, rng)
    p_real, _ = discriminator_forward(x, y, disc, train)
    p_fake, _ = discriminator_forward(x, g_out, disc, train)
    loss_d, _, _ = _loss_d(p_real, p_fake)
    adv, _ = _adv_g(p_fake, variant)
    l2, _ = _l2(y, g_out, lam, reduction)
    return LossParts(loss_d, adv + l2, adv, l2)


def discriminator_grads(x, y, mask, gen, disc, train=True, rng=None):
    g_out, _ = generator_forward(x, mask, gen, train, rng)
    p_real, c_real = discriminator_forward(x, y, disc, train)
    p_fake, c_fake = discriminator_forward(x, g_out, disc, train)
    loss, d_real, d_fake = _loss_d(p_real, p_fake)
    dt = p_real.dtype
    g_real, _ = discriminator_backward(d_real.astype(dt), c_real, disc)
    g_fake, _ = discriminator_backward(d_fake.astype(dt), c_fake, disc)
    return loss, {k: g_real[k] + g_fake[k] for k in g_real}


def generator_grads(x, y, mask, gen, disc, lam=10.0, variant="non_saturating", reduction="mean", train=True, rng=None):
    g_out, g_cache = generator_forward(x, mask, gen, train, rng)
    p_fake, d_cache = discriminator_forward(x, g_out, disc, train)
    adv, d_adv = _adv_g(p_fake, variant)
    l2, d_l2 = _l2(y, g_out, lam, reduction)
    _, d_cand = discriminator_backward(d_adv.astype(p_fake.dtype), d_cache, disc)
    d_out = (d_l2 + d_cand).astype(g_out.dtype)
    grads = generator_backward(d_out, g_cache, gen)
    return LossParts(float("nan"), adv + l2, adv, l2), grads


@dataclass
class LossLog:
    rows: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iter", "loss_d", "loss_g_adv", "loss_g_l2"])
            for r in self.rows:
                w.writerow([r["iter"], repr(r["loss_d"]), repr(r["loss_g_adv"]), repr(r["loss_g_l2"])])


@dataclass
class TrainResult:
    generator: object
    discriminator: object
    log: LossLog
    schedule: TrainSchedule
    iterations: int


def _as_batch(a, dtype):
    a = np.asarray(a)
    if a.ndim == 3:
        a = a[:, None]
    return a.astype(dtype, copy=False)


def train(x, y, mask, schedule=TrainSchedule(), gspec=GeneratorSpec(), dspec=DiscriminatorSpec(), init=None):
    """Alternate discriminator and generator Adam steps over shuffled mini-batches.

    ``x``, ``y`` and ``mask`` are stacks of (masked input, reference, mask)
    sinograms shaped (n, H, W) or (n, 1, H, W). ``init`` optionally provides
    a (generator, discriminator) pair to continue from.
    """
    x = _as_batch(x, np.float32)
    y = _as_batch(y, np.float32)
    mask = _as_batch(mask, bool)
    n = x.shape[0]
    if not (x.shape == y.shape == mask.shape):
        raise ValueError("x, y and mask stacks must share a shape")
    if n < schedule.batch_size:
        raise ValueError(f"dataset of {n} is smaller than batch size {schedule.batch_size}")
    ss = np.random.SeedSequence(schedule.seed)
    init_rng, shuffle_rng, drop_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    hw = x.shape[2:]
    if init is None:
        gen = init_generator(gspec, hw, init_rng)
        disc = init_discriminator(dspec, hw, init_rng)
    else:
        gen, disc = init[0].copy(), init[1].copy()
    g_opt = AdamState(schedule.lr, schedule.beta1, schedule.beta2)
    d_opt = AdamState(schedule.lr, schedule.beta1, schedule.beta2)
    loss_log = LossLog()
    it = 0
    bs = schedule.batch_size
    for epoch in range(1, schedule.epochs + 1):
        n_d = schedule.d_steps(epoch)
        order = shuffle_rng.permutation(n)
        for start in range(0, n, bs):
            idx = np.sort(order[start : start + bs])
            loss_d = float("nan")
            for step in range(n_d):
                d_idx = idx if step == 0 else np.sort(shuffle_rng.choice(n, size=bs, replace=False))
                loss_d, d_grads = discriminator_grads(x[d_idx], y[d_idx], mask[d_idx], gen, disc, True, drop_rng)
                if not np.isfinite(loss_d):
                    raise TrainingError(f"non-finite discriminator loss at iteration {it}")
                adam_step(disc.params, d_grads, d_opt)
            parts, g_grads = generator_grads(
                x[idx], y[idx], mask[idx], gen, disc, schedule.lam, schedule.g_adv_variant, schedule.l2_reduction, True, drop_rng
            )
            if not np.isfinite(loss_d) or not np.isfinite(parts.loss_g):
                raise TrainingError(f"non-finite loss at iteration {it} (loss_d={loss_d}, loss_g={parts.loss_g})")
            adam_step(gen.params, g_grads, g_opt)
            loss_log.append(
                iter=it, loss_d=loss_d, loss_g_adv=parts.adv, loss_g_l2=parts.l2, epoch=epoch, d_steps=n_d
            )
            it += 1
            if schedule.max_g_steps is not None and it >= schedule.max_g_steps:
                return TrainResult(gen, disc, loss_log, schedule, it)
        log.info("epoch %d: loss_d=%.4f adv=%.4f l2=%.4f", epoch, loss_d, parts.adv, parts.l2)
    return TrainResult(gen, disc, loss_log, schedule, it)


def infer(x, mask, gen):
    """Eval-mode completion of one sinogram (H, W) or a stack (B, 1, H, W)."""
    x = np.asarray(x)
    single = x.ndim == 2
    xb = _as_batch(x[None] if single else x, np.float32)
    mb = _as_batch(np.asarray(mask)[None] if single else mask, bool)
    if xb.shape != mb.shape:
        raise ValueError(f"mask shape {mb.shape} does not match input {xb.shape}")
    out, _ = generator_forward(xb, mb, gen, train=False)
    return out[0, 0] if single else out
