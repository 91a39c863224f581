"""Simulated channel: exactness, noise monotonicity, template survival."""

import numpy as np
import pytest

from maxsive import attacks as atk
from maxsive import channel, codec, template
from maxsive.channel import ChannelConfig
from maxsive.errors import ConfigError


def setup(seed="dd" * 32):
    spec = codec.KeySpec(master_seed=seed)
    w = codec.sample_watermark(seed, spec.watermark_shape)
    keys = codec.keys_for(spec)
    z = codec.assemble_initial_noise(w, keys, spec.replication, (64, 64, 4))
    return spec, w, keys, z


def test_identity_clean_is_exact():
    _, _, _, z = setup()
    out = channel.transmit(z, ChannelConfig(mode="identity", sigma=0.0))
    assert np.array_equal(out, z)


def test_ddim_clean_no_template_roundtrip():
    _, _, _, z = setup()
    out = channel.transmit(z, ChannelConfig(mode="ddim", seed=1), template_cfg=None)
    assert np.abs(out - z).max() < 1e-5


def test_identity_noise_survives_detection():
    spec, w, keys, z = setup()
    tau = codec.calibrate_threshold(4096, 1e-3)
    hits = 0
    for k in range(100):
        cfg = ChannelConfig(mode="identity", sigma=0.5, seed=k)
        out = channel.transmit(z, cfg)
        s = codec.score(w, codec.extract_watermark(out, keys, spec.replication))
        hits += s > tau
    assert hits == 100


def test_monotone_degradation_in_sigma():
    spec, w, keys, z = setup()
    scores = []
    for sigma in (0.0, 0.25, 0.5, 1.0):
        cfg = ChannelConfig(mode="identity", sigma=sigma, seed=42)
        out = channel.transmit(z, cfg)
        scores.append(codec.score(w, codec.extract_watermark(out, keys, spec.replication)))
    assert all(b <= a + 1e-12 for a, b in zip(scores, scores[1:]))


def test_ddim_mode_ignores_sigma():
    _, _, _, z = setup()
    a = channel.transmit(z, ChannelConfig(mode="ddim", sigma=5.0, seed=3))
    b = channel.transmit(z, ChannelConfig(mode="ddim", sigma=0.0, seed=3))
    assert np.array_equal(a, b)


def test_ddim_noisy_applies_sigma():
    _, _, _, z = setup()
    a = channel.transmit(z, ChannelConfig(mode="ddim_noisy", sigma=0.5, seed=3))
    b = channel.transmit(z, ChannelConfig(mode="ddim_noisy", sigma=0.0, seed=3))
    assert not np.array_equal(a, b)


def test_template_survival_rate():
    cfg = template.TemplateConfig()
    hits = 0
    for k in range(100):
        _, _, _, z = setup(seed=f"{5000 + k:064x}")
        out = channel.transmit(z, ChannelConfig(mode="ddim", seed=k), cfg)
        est = template.detect_angle(out, cfg)
        hits += abs(est.theta_hat - cfg.base_angle) <= 1.0
    assert hits >= 98


def test_determinism():
    _, _, _, z = setup()
    pipe = atk.parse_pipeline("gaussian_noise(sigma=0.1,seed=5)|jpeg_proxy(q=50)")
    cfg = ChannelConfig(mode="ddim_noisy", sigma=0.3, pipeline=pipe, seed=11)
    tcfg = template.TemplateConfig()
    a = channel.transmit(z, cfg, tcfg)
    b = channel.transmit(z, cfg, tcfg)
    assert np.array_equal(a, b)


def test_pixel_proxy_domain_runs():
    _, _, _, z = setup()
    pipe = atk.parse_pipeline("gaussian_blur(k=3)")
    cfg = ChannelConfig(mode="identity", pipeline=pipe, attack_domain="pixel_proxy",
                        pixel_scale=4)
    out = channel.transmit(z, cfg)
    assert out.shape == z.shape
    assert not np.array_equal(out, z)


def test_config_validation():
    with pytest.raises(ConfigError):
        ChannelConfig(mode="vae")
    with pytest.raises(ConfigError):
        ChannelConfig(sigma=-0.1)
    with pytest.raises(ConfigError):
        ChannelConfig(attack_domain="image")
