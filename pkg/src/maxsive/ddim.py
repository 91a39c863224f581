"""Deterministic DDIM reverse / inverse processes with pluggable denoisers.

A denoiser is any callable ``(z_t, t) -> eps_hat`` returning a tensor of the
same shape.  The reverse process accepts an optional per-step injection hook
``(z0_t, t) -> z0_t'`` applied to the predicted clean latent before each
update; the inverse (extraction) side never injects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .validation import as_latent


@dataclass(frozen=True)
class DDIMSchedule:
    """Variance schedule: ``beta[t]`` for t = 0..T with beta[0] = 0, and the
    cumulative products ``alpha_bar[t] = prod_{i<=t} (1 - beta[i])``."""

    steps: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.beta.shape != (self.steps + 1,) or self.alpha_bar.shape != (self.steps + 1,):
            raise ConfigError("beta and alpha_bar must have length steps + 1")
        if np.any(np.diff(self.alpha_bar) > 0):
            raise ConfigError("alpha_bar must be nonincreasing")
        if np.any(self.alpha_bar <= 0) or np.any(self.alpha_bar > 1):
            raise ConfigError("alpha_bar entries must lie in (0, 1]")


def make_schedule(steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> DDIMSchedule:
    """Linear beta schedule over ``steps`` timesteps (beta[0] fixed at 0)."""
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    beta = np.zeros(steps + 1)
    beta[1:] = np.linspace(beta_start, beta_end, steps)
    alpha_bar = np.cumprod(1.0 - beta)
    return DDIMSchedule(steps=steps, beta=beta, alpha_bar=alpha_bar)


def _predict_from_eps(z_t, eps, alpha_bar_t: float) -> np.ndarray:
    return (z_t - np.sqrt(1.0 - alpha_bar_t) * eps) / np.sqrt(alpha_bar_t)


def predict_z0(z_t, t: int, denoiser, schedule: DDIMSchedule) -> np.ndarray:
    """Predicted clean latent from the noisy latent at timestep ``t``."""
    z_t = as_latent(z_t)
    if not 1 <= t <= schedule.steps:
        raise ConfigError(f"t must be in [1, {schedule.steps}], got {t}")
    eps = _eval_denoiser(denoiser, z_t, t)
    return _predict_from_eps(z_t, eps, schedule.alpha_bar[t])


def _eval_denoiser(denoiser, z_t, t: int) -> np.ndarray:
    eps = np.asarray(denoiser(z_t, t), dtype=np.float64)
    if eps.shape != z_t.shape:
        raise ShapeError(
            f"denoiser returned shape {eps.shape}, expected {z_t.shape}"
        )
    return eps


def reverse(z_T, denoiser, schedule: DDIMSchedule, hook=None) -> np.ndarray:
    """Run the deterministic sampling process from z_T down to z_0.

    When ``hook`` is given it replaces the predicted z0 at every timestep
    (T calls total) before the next-step update.
    """
    z = as_latent(z_T)
    ab = schedule.alpha_bar
    for t in range(schedule.steps, 0, -1):
        eps = _eval_denoiser(denoiser, z, t)
        z0_t = _predict_from_eps(z, eps, ab[t])
        if hook is not None:
            z0_t = np.asarray(hook(z0_t, t), dtype=np.float64)
            if z0_t.shape != z.shape:
                raise ShapeError(
                    f"injection hook returned shape {z0_t.shape}, expected {z.shape}"
                )
        z = np.sqrt(ab[t - 1]) * z0_t + np.sqrt(1.0 - ab[t - 1]) * eps
    return z


def inverse(z_0, denoiser, schedule: DDIMSchedule) -> np.ndarray:
    """Run the inversion process from z_0 back up to z_T (no injection)."""
    z = as_latent(z_0)
    ab = schedule.alpha_bar
    for t in range(0, schedule.steps):
        eps = _eval_denoiser(denoiser, z, t)
        z0_t = _predict_from_eps(z, eps, ab[t])
        z = np.sqrt(ab[t + 1]) * z0_t + np.sqrt(1.0 - ab[t + 1]) * eps
    return z


def zero_denoiser():
    """eps_hat = 0: reverse/inverse become exact mutual scalings."""

    def denoise(z_t, t):
        return np.zeros_like(z_t)

    return denoise


def linear_denoiser(lam: float):
    """eps_hat = lam * z_t. Content-dependent, so round trips are approximate."""

    def denoise(z_t, t):
        return lam * np.asarray(z_t, dtype=np.float64)

    return denoise


def seeded_noise_denoiser(sigma_d: float, seed: int = 0):
    """Deterministic pseudo-random eps_hat keyed by (seed, t) only.

    Because the field does not depend on z_t, reverse and inverse consume
    identical eps sequences and stay numerically invertible.
    """

    def denoise(z_t, t):
        rng = np.random.default_rng((int(seed), int(t), 0x5EED))
        return sigma_d * rng.standard_normal(np.asarray(z_t).shape)

    return denoise


def get_denoiser(name: str, param: float = 0.0, seed: int = 0):
    """Build a denoiser from the config keys ddim.denoiser / ddim.denoiser_param."""
    if name == "zero":
        return zero_denoiser()
    if name == "linear":
        return linear_denoiser(param)
    if name == "seeded_noise":
        return seeded_noise_denoiser(param, seed)
    raise ConfigError(f"unknown denoiser {name!r}")
