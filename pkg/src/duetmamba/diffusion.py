"""Forward noising, x0-prediction objective, cosine schedule, DDIM sampling.

The denoiser predicts the clean signal directly; the sampler converts each
prediction to its implied noise and steps deterministically (eta = 0) through
an evenly spaced sub-schedule, extrapolating conditional vs unconditional
predictions by the guidance weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import ConfigError, Tensor, as_tensor


class SamplingError(RuntimeError):
    """Non-finite prediction during sampling; carries the failing step index."""

    def __init__(self, step: int, msg: str = ""):
        super().__init__(f"sampling aborted at schedule step {step}: {msg}")
        self.step = step


@dataclass
class NoiseSchedule:
    timesteps: int
    alpha_bar: np.ndarray  # [T+1], alpha_bar[0] == 1 before the floor
    ddim_steps: np.ndarray  # strictly increasing, last == T
    eta: float = 0.0

    def __post_init__(self):
        T = self.timesteps
        ab = self.alpha_bar
        if len(ab) != T + 1:
            raise ConfigError("alpha_bar must have T+1 entries")
        if not np.all(np.diff(ab) < 0):
            raise ConfigError("alpha_bar must be strictly decreasing")
        if ab[0] < 0.999:
            raise ConfigError(f"alpha_bar[0] = {ab[0]} < 0.999")
        if ab[T] > 1e-3:
            raise ConfigError(f"alpha_bar[T] = {ab[T]} > 1e-3")
        dd = self.ddim_steps
        if len(dd) == 0 or not np.all(np.diff(dd) > 0) or dd[-1] != T:
            raise ConfigError("ddim sub-schedule must be strictly increasing, ending at T")


@dataclass
class GuidanceConfig:
    weight: float = 3.5
    drop_prob: float = 0.1

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigError("guidance weight must be >= 0")
        if not (0 <= self.drop_prob < 1):
            raise ConfigError("drop_prob must be in [0, 1)")


def ddim_subschedule(timesteps: int, n_steps: int) -> np.ndarray:
    """Evenly spaced step indices in [1, T], always ending at T."""
    n = min(n_steps, timesteps)
    if n <= 1:
        return np.array([timesteps], dtype=np.int64)
    idx = np.round(np.linspace(1, timesteps, n)).astype(np.int64)
    idx[-1] = timesteps
    return np.unique(idx)


ALPHA_BAR_FLOOR = 1e-5


def cosine_schedule(
    timesteps: int, s: float = 0.008, n_ddim: int = 50, eta: float = 0.0
) -> NoiseSchedule:
    """alpha_bar_t = f(t)/f(0) with f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
    floored at 1e-5."""
    if timesteps < 2:
        raise ConfigError(f"timesteps must be >= 2, got {timesteps}")
    t = np.arange(timesteps + 1, dtype=np.float64)
    f = np.cos(((t / timesteps + s) / (1.0 + s)) * np.pi / 2.0) ** 2
    ab = f / f[0]
    ab = np.maximum(ab, ALPHA_BAR_FLOOR)
    # The floor can create ties in the tail; nudge them apart (staying >= the
    # floor) so the strictly-decreasing invariant holds.
    for i in range(timesteps - 1, -1, -1):
        if ab[i] <= ab[i + 1]:
            ab[i] = ab[i + 1] * (1.0 + 1e-12)
    return NoiseSchedule(
        timesteps=timesteps,
        alpha_bar=ab,
        ddim_steps=ddim_subschedule(timesteps, n_ddim),
        eta=eta,
    )


def forward_noise(x0, t, eps, sched: NoiseSchedule):
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.

    t may be a scalar step or one step per leading row. Works on plain arrays
    (the noising path never needs gradients).
    """
    x0 = np.asarray(x0.data if isinstance(x0, Tensor) else x0)
    eps = np.asarray(eps.data if isinstance(eps, Tensor) else eps)
    t = np.asarray(t, dtype=np.int64)
    if np.any(t < 0) or np.any(t > sched.timesteps):
        raise IndexError(f"diffusion step {t} outside [0, {sched.timesteps}]")
    ab = sched.alpha_bar[t]
    if t.ndim > 0:
        ab = ab.reshape((len(ab),) + (1,) * (x0.ndim - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def loss_diff(x0, pred) -> Tensor:
    """Mean squared error between the clean signal and its prediction."""
    x0, pred = as_tensor(x0), as_tensor(pred)
    if x0.shape != pred.shape:
        raise core.ShapeError(f"loss_diff: {x0.shape} vs {pred.shape}")
    d = core.sub(pred, x0)
    return core.tmean(core.mul(d, d))


def cfg_combine(pred_cond, pred_uncond, weight: float):
    """pred_uncond + weight * (pred_cond - pred_uncond)."""
    c = pred_cond.data if isinstance(pred_cond, Tensor) else np.asarray(pred_cond)
    u = pred_uncond.data if isinstance(pred_uncond, Tensor) else np.asarray(pred_uncond)
    if c.shape != u.shape:
        raise core.ShapeError(f"cfg_combine: {c.shape} vs {u.shape}")
    return u + weight * (c - u)


X0_CLAMP = 6.0


def ddim_sample(
    model,
    label: int,
    shape: tuple,
    sched: NoiseSchedule,
    guidance: GuidanceConfig,
    seed: int,
    clamp: float = X0_CLAMP,
):
    """Sample one pair of sequences (returned as two [*shape] arrays).

    `model` exposes predict_x0(x_a, x_b, t, label, uncond) -> (x0_a, x0_b).
    Deterministic given (model weights, label, seed) when eta == 0.
    """
    rng = np.random.default_rng(seed)
    x_a = rng.standard_normal((1,) + tuple(shape))
    x_b = rng.standard_normal((1,) + tuple(shape))
    steps = list(sched.ddim_steps)
    with core.no_grad():
        for i in range(len(steps) - 1, -1, -1):
            t_cur = int(steps[i])
            t_prev = int(steps[i - 1]) if i > 0 else 0
            pc_a, pc_b = model.predict_x0(x_a, x_b, t_cur, label, uncond=False)
            pu_a, pu_b = model.predict_x0(x_a, x_b, t_cur, label, uncond=True)
            x0_a = cfg_combine(pc_a, pu_a, guidance.weight)
            x0_b = cfg_combine(pc_b, pu_b, guidance.weight)
            if not (np.all(np.isfinite(x0_a)) and np.all(np.isfinite(x0_b))):
                raise SamplingError(t_cur, "non-finite x0 prediction")
            x0_a = np.clip(x0_a, -clamp, clamp)
            x0_b = np.clip(x0_b, -clamp, clamp)
            ab_cur = sched.alpha_bar[t_cur]
            ab_prev = sched.alpha_bar[t_prev] if t_prev > 0 else 1.0
            denom = np.sqrt(1.0 - ab_cur)
            eps_a = (x_a - np.sqrt(ab_cur) * x0_a) / denom
            eps_b = (x_b - np.sqrt(ab_cur) * x0_b) / denom
            sigma = 0.0
            if sched.eta > 0.0 and t_prev > 0:
                sigma = (
                    sched.eta
                    * np.sqrt((1.0 - ab_prev) / (1.0 - ab_cur))
                    * np.sqrt(1.0 - ab_cur / ab_prev)
                )
            coeff = np.sqrt(max(1.0 - ab_prev - sigma**2, 0.0))
            x_a = np.sqrt(ab_prev) * x0_a + coeff * eps_a
            x_b = np.sqrt(ab_prev) * x0_b + coeff * eps_b
            if sigma > 0.0:
                x_a = x_a + sigma * rng.standard_normal(x_a.shape)
                x_b = x_b + sigma * rng.standard_normal(x_b.shape)
    return x_a[0], x_b[0]
