"""DDPM machinery: schedules, forward noising, training step, EMA, sampler.

Per-step randomness (timesteps, noise, condition dropout) is derived
statelessly from (master seed, step index), so training can resume from a
checkpoint bit-exactly without persisting generator state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .model import ConditionalDenoiser
from .rng import Rng


class NumericError(RuntimeError):
    pass


@dataclass
class NoiseSchedule:
    """Tables indexed 0..T; index 0 is the boundary alpha_bar = 1."""

    T: int
    kind: str
    alpha_bar: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    posterior_var: np.ndarray

    def sqrt_ab(self, t: np.ndarray) -> np.ndarray:
        return np.sqrt(self.alpha_bar[t])

    def sqrt_1mab(self, t: np.ndarray) -> np.ndarray:
        return np.sqrt(1.0 - self.alpha_bar[t])


def make_schedule(T: int, kind: str = "cosine") -> NoiseSchedule:
    if T < 2:
        raise ValueError("schedule needs at least 2 steps")
    if kind == "cosine":
        s = 0.008
        t = np.arange(T + 1, dtype=np.float64)
        f = np.cos(((t / T + s) / (1.0 + s)) * (np.pi / 2.0)) ** 2
        alpha_bar = f / f[0]
        raw_beta = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
        betas = np.zeros(T + 1)
        betas[1:] = np.minimum(raw_beta, 0.999)
        alphas = 1.0 - betas
        # Keep the closed-form alpha_bar exactly up to the first clipped beta;
        # continue with the product recursion afterwards.
        clipped = False
        for k in range(1, T + 1):
            if clipped or raw_beta[k - 1] > 0.999:
                clipped = True
                alpha_bar[k] = alpha_bar[k - 1] * alphas[k]
    elif kind == "linear":
        betas = np.zeros(T + 1)
        betas[1:] = np.linspace(1e-4, 0.02, T)
        alphas = 1.0 - betas
        alpha_bar = np.cumprod(alphas)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    posterior_var = np.zeros(T + 1)
    posterior_var[1:] = (1.0 - alpha_bar[0:T]) / (1.0 - alpha_bar[1 : T + 1]) * betas[1:]
    sched = NoiseSchedule(
        T=T, kind=kind, alpha_bar=alpha_bar, alphas=alphas, betas=betas,
        posterior_var=posterior_var,
    )
    assert np.all(np.diff(alpha_bar) < 0), "alpha_bar must be strictly decreasing"
    return sched


def normalize_label(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.min() < 0.0 or y.max() > 1.0:
        raise ValueError("label out of [0,1]")
    return 2.0 * y - 1.0


def denormalize_label(y_norm: np.ndarray) -> np.ndarray:
    return (np.asarray(y_norm, dtype=np.float64) + 1.0) / 2.0


def forward_noise(
    y_norm: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    if not (0 <= t <= sched.T):
        raise ValueError(f"t={t} out of range 0..{sched.T}")
    if eps.shape != y_norm.shape:
        raise ValueError("noise shape mismatch")
    ab = sched.alpha_bar[t]
    return math.sqrt(ab) * y_norm + math.sqrt(1.0 - ab) * eps


@dataclass
class TrainConfig:
    lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    ema_decay: float = 0.999
    aux_weight: float = 0.1
    aux_frac: float = 0.15  # aux loss active for t < floor(aux_frac * T)
    cfg_drop: float = 0.1
    batch_size: int = 8
    n_steps: int = 2000
    lr_schedule: str = "constant"  # constant | cosine-decay
    guidance_scale: float = 0.0  # disabled; out of acceptance scope

    def validate(self) -> None:
        if not (0 < self.lr < 1):
            raise ValueError("bad learning rate")
        if not (0 <= self.ema_decay <= 1):
            raise ValueError("bad EMA decay")
        if not (0 <= self.cfg_drop <= 1):
            raise ValueError("bad condition-dropout probability")
        if self.lr_schedule not in ("constant", "cosine-decay"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")


class Ema:
    """Exponential moving average copy of the model parameters."""

    def __init__(self, model: ConditionalDenoiser):
        self.shadow = {n: p.detach().clone() for n, p in model.named_parameters()}

    def update(self, model: ConditionalDenoiser, decay: float) -> None:
        with torch.no_grad():
            for n, p in model.named_parameters():
                self.shadow[n].mul_(decay).add_(p.detach(), alpha=1.0 - decay)

    def copy_to(self, model: ConditionalDenoiser) -> None:
        with torch.no_grad():
            for n, p in model.named_parameters():
                p.copy_(self.shadow[n])


def predict_x0(
    x_t: torch.Tensor, eps_hat: torch.Tensor, t: np.ndarray, sched: NoiseSchedule
) -> torch.Tensor:
    sab = torch.as_tensor(sched.sqrt_ab(t), dtype=x_t.dtype)[:, None, None, None]
    s1m = torch.as_tensor(sched.sqrt_1mab(t), dtype=x_t.dtype)[:, None, None, None]
    return ((x_t - s1m * eps_hat) / sab).clamp(-1.0, 1.0)


def loss_terms(
    model: ConditionalDenoiser,
    x0: torch.Tensor,
    cond: torch.Tensor | None,
    tokens: torch.Tensor | None,
    t: np.ndarray,
    eps: torch.Tensor,
    sched: NoiseSchedule,
    cfg: TrainConfig,
) -> tuple[torch.Tensor, float, float]:
    """Combined loss: MSE on predicted noise plus gated L1 on x0-hat."""
    sab = torch.as_tensor(sched.sqrt_ab(t), dtype=x0.dtype)[:, None, None, None]
    s1m = torch.as_tensor(sched.sqrt_1mab(t), dtype=x0.dtype)[:, None, None, None]
    x_t = sab * x0 + s1m * eps
    eps_hat = model(x_t, torch.as_tensor(t, dtype=torch.long), cond, tokens)
    mse = ((eps_hat - eps) ** 2).mean()
    cutoff = math.floor(cfg.aux_frac * sched.T)
    gate = torch.as_tensor((t < cutoff).astype(np.float64), dtype=x0.dtype)
    x0_hat = predict_x0(x_t, eps_hat, t, sched)
    l1 = (x0_hat - x0).abs().mean(dim=(1, 2, 3))
    aux = (gate * l1).mean()
    total = mse + cfg.aux_weight * aux
    return total, float(mse.detach()), float(aux.detach())


def step_lr(cfg: TrainConfig, step: int) -> float:
    if cfg.lr_schedule == "cosine-decay":
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / max(1, cfg.n_steps)))
    return cfg.lr


def training_step(
    model: ConditionalDenoiser,
    optimizer: torch.optim.Optimizer,
    ema: Ema,
    batch: tuple[torch.Tensor, torch.Tensor, list],
    sched: NoiseSchedule,
    cfg: TrainConfig,
    seed: int,
    step: int,
) -> dict:
    """One optimization step; randomness is a pure function of (seed, step)."""
    x0, cond, graphs = batch
    bsz = x0.shape[0]
    rng = Rng(seed)
    t = np.asarray(rng.stream("timestep", step).integers(1, sched.T + 1, bsz))
    eps_np = rng.stream("noise", step).normal(tuple(x0.shape))
    eps = torch.as_tensor(eps_np, dtype=x0.dtype)
    drop = np.asarray(rng.stream("dropout", step).uniform(bsz)) < cfg.cfg_drop

    # Joint condition dropout: geometry and graph are nulled together.
    tokens = model.batch_tokens([None if drop[i] else graphs[i] for i in range(bsz)])
    if drop.any():
        hh, ww = x0.shape[2], x0.shape[3]
        mask = torch.as_tensor(drop.astype(np.float64), dtype=x0.dtype)[:, None, None, None]
        cond = (1.0 - mask) * cond + mask * model.null_cond_map(bsz, hh, ww)

    lr = step_lr(cfg, step)
    for group in optimizer.param_groups:
        group["lr"] = lr

    optimizer.zero_grad(set_to_none=True)
    total, mse, aux = loss_terms(model, x0, cond, tokens, t, eps, sched, cfg)
    if not torch.isfinite(total):
        raise NumericError(
            f"non-finite loss at step {step}: mse={mse}, aux={aux}, t={t.tolist()}"
        )
    total.backward()
    grad_norm = math.sqrt(
        sum(float((p.grad ** 2).sum()) for p in model.parameters() if p.grad is not None)
    )
    optimizer.step()
    ema.update(model, cfg.ema_decay)
    return {
        "step": step,
        "loss": float(total.detach()),
        "mse": mse,
        "aux": aux,
        "lr": lr,
        "grad_norm": grad_norm,
    }


@torch.no_grad()
def sample(
    model: ConditionalDenoiser,
    cond: torch.Tensor | None,
    tokens: torch.Tensor | None,
    sched: NoiseSchedule,
    seeds: list[int],
    shape: tuple[int, int],
) -> np.ndarray:
    """Ancestral DDPM sampling; one independent noise stream per design seed.

    Each item's stream yields the initial x_T plus exactly T step noises.
    Returns maps in [0, 1], shape (B, H, W).
    """
    hh, ww = shape
    bsz = len(seeds)
    dtype = model.cfg.torch_dtype
    streams = [Rng(s).stream("sample") for s in seeds]
    x = torch.as_tensor(
        np.stack([st.normal((1, hh, ww)) for st in streams]), dtype=dtype
    )
    for t in range(sched.T, 0, -1):
        t_vec = torch.full((bsz,), t, dtype=torch.long)
        eps_hat = model(x, t_vec, cond, tokens)
        # Posterior mean in the clamped-x0 parameterization. Equivalent to
        # the eps form when x0_hat is in range, but bounded when it is not:
        # with beta_T clipped at 0.999, 1/sqrt(alpha_T) is ~31 and the eps
        # form amplifies model error at the first reverse step.
        x0_hat = predict_x0(x, eps_hat, np.full(bsz, t), sched)
        ab, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
        beta = sched.betas[t]
        c0 = math.sqrt(ab_prev) * beta / (1.0 - ab)
        cx = math.sqrt(sched.alphas[t]) * (1.0 - ab_prev) / (1.0 - ab)
        x = c0 * x0_hat + cx * x
        z = torch.as_tensor(
            np.stack([st.normal((1, hh, ww)) for st in streams]), dtype=dtype
        )
        if t > 1:
            x = x + math.sqrt(sched.posterior_var[t]) * z
    y = denormalize_label(x.squeeze(1).numpy())
    return np.clip(y, 0.0, 1.0)
