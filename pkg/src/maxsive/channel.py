"""Simulated generation + distortion + inversion channel.

Stands in for the decode/encode/sampling stack of a real latent diffusion
deployment so the codec and template paths can be exercised end to end at
desk scale.  Inversion error of the real system is modeled by a single
additive Gaussian knob ``sigma``; no fidelity to any particular model is
claimed, only coverage of the same code paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attacks as atk
from .ddim import get_denoiser, inverse, make_schedule, reverse
from .errors import ConfigError
from .template import TemplateConfig, build_mask, make_injection_hook
from .validation import as_latent

MODES = ("identity", "ddim", "ddim_noisy")


@dataclass(frozen=True)
class ChannelConfig:
    mode: str = "ddim"
    steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    denoiser: str = "zero"
    denoiser_param: float = 0.0
    sigma: float = 0.0
    pipeline: atk.AttackPipeline | None = None
    attack_domain: str = "latent"
    pixel_scale: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown channel mode {self.mode!r}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.attack_domain not in ("latent", "pixel_proxy"):
            raise ConfigError(f"unknown attack domain {self.attack_domain!r}")
        if self.pixel_scale < 1:
            raise ConfigError(f"pixel_scale must be >= 1, got {self.pixel_scale}")

    @property
    def effective_sigma(self) -> float:
        # plain "ddim" mode is the noiseless channel regardless of sigma
        return 0.0 if self.mode == "ddim" else self.sigma


def _apply_attacks(z: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
    if cfg.pipeline is None:
        return z
    if cfg.attack_domain == "pixel_proxy":
        up = atk.to_pixel_proxy(z, cfg.pixel_scale)
        up = atk.apply_pipeline(cfg.pipeline, up)
        return atk.from_pixel_proxy(up, cfg.pixel_scale)
    return atk.apply_pipeline(cfg.pipeline, z)


def _add_noise(z: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
    sigma = cfg.effective_sigma
    if sigma == 0.0:
        return z
    rng = np.random.default_rng((int(cfg.seed), 0xC0FFEE))
    return z + sigma * rng.standard_normal(z.shape)


def transmit(z_w, cfg: ChannelConfig, template_cfg: TemplateConfig | None = None) -> np.ndarray:
    """Push a watermarked initial noise through the simulated channel.

    identity: attacks + noise act on the initial noise directly.
    ddim/ddim_noisy: sample down to z_0 (injecting the template each step
    when a template config is given), attack in the chosen domain, add
    noise, and invert back to the initial-noise estimate.
    """
    z = as_latent(z_w)
    if cfg.mode == "identity":
        return _add_noise(_apply_attacks(z, cfg), cfg)
    schedule = make_schedule(cfg.steps, cfg.beta_start, cfg.beta_end)
    denoiser = get_denoiser(cfg.denoiser, cfg.denoiser_param, cfg.seed)
    hook = None
    if template_cfg is not None:
        mask = build_mask(z.shape[1], z.shape[2], template_cfg)
        hook = make_injection_hook(mask, template_cfg.eta)
    z0 = reverse(z, denoiser, schedule, hook=hook)
    z0 = _add_noise(_apply_attacks(z0, cfg), cfg)
    return inverse(z0, denoiser, schedule)
