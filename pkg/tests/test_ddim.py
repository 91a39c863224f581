"""DDIM schedules, closed forms, round trips, and hook semantics."""

import numpy as np
import pytest

from maxsive import ddim
from maxsive.ddim import DDIMSchedule
from maxsive.errors import ConfigError, ShapeError


def test_schedule_single_step():
    sch = ddim.make_schedule(1, 0.02, 0.02)
    assert sch.alpha_bar[0] == pytest.approx(1.0)
    assert sch.alpha_bar[1] == pytest.approx(0.98)


def test_schedule_default_monotone():
    sch = ddim.make_schedule(50)
    assert 0.0 < sch.alpha_bar[-1] < 1.0
    assert np.all(np.diff(sch.alpha_bar) <= 0)


def test_schedule_constant_beta():
    sch = ddim.make_schedule(3, 0.1, 0.1)
    assert sch.alpha_bar[3] == pytest.approx(0.9**3)


@pytest.mark.parametrize("bad", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 0.5, 1.0)])
def test_schedule_bounds(bad):
    with pytest.raises(ConfigError):
        ddim.make_schedule(*bad)


def test_predict_z0_zero_denoiser():
    sch = ddim.make_schedule(10)
    z = np.random.default_rng(0).standard_normal((2, 8, 8))
    out = ddim.predict_z0(z, 5, ddim.zero_denoiser(), sch)
    assert np.abs(out - z / np.sqrt(sch.alpha_bar[5])).max() < 1e-12


def test_predict_z0_substitution():
    # eps == z_t with alpha_bar_t = 0.25 -> (z - sqrt(0.75) z) / 0.5
    sch = DDIMSchedule(steps=1, beta=np.array([0.0, 0.75]), alpha_bar=np.array([1.0, 0.25]))
    z = np.random.default_rng(1).standard_normal((1, 4, 4))
    out = ddim.predict_z0(z, 1, lambda zt, t: zt, sch)
    expected = (z - np.sqrt(0.75) * z) / 0.5
    assert np.abs(out - expected).max() < 1e-12


def test_predict_z0_finite():
    sch = ddim.make_schedule(20)
    z = np.random.default_rng(2).standard_normal((4, 16, 16))
    for t in range(1, 21):
        assert np.isfinite(ddim.predict_z0(z, t, ddim.seeded_noise_denoiser(1.0, 3), sch)).all()


def test_reverse_closed_form_and_oracle():
    sch = ddim.make_schedule(50)
    z = np.random.default_rng(3).standard_normal((4, 64, 64))
    out = ddim.reverse(z, ddim.zero_denoiser(), sch)
    assert np.abs(out - z / np.sqrt(sch.alpha_bar[-1])).max() < 1e-6
    # independent step-by-step oracle
    cur = z.copy()
    for t in range(50, 0, -1):
        z0 = cur / np.sqrt(sch.alpha_bar[t])
        cur = np.sqrt(sch.alpha_bar[t - 1]) * z0
    assert np.abs(out - cur).max() < 1e-12


def test_reverse_single_step():
    sch = ddim.make_schedule(1)
    z = np.random.default_rng(4).standard_normal((2, 8, 8))
    den = ddim.seeded_noise_denoiser(0.5, 9)
    eps = den(z, 1)
    z0 = (z - np.sqrt(1 - sch.alpha_bar[1]) * eps) / np.sqrt(sch.alpha_bar[1])
    assert np.abs(ddim.reverse(z, den, sch) - z0).max() < 1e-12


def test_identity_hook_is_noop():
    sch = ddim.make_schedule(10)
    z = np.random.default_rng(5).standard_normal((2, 16, 16))
    den = ddim.seeded_noise_denoiser(0.3, 1)
    plain = ddim.reverse(z, den, sch)
    hooked = ddim.reverse(z, den, sch, hook=lambda z0, t: z0)
    assert np.array_equal(plain, hooked)


def test_hook_call_count():
    sch = ddim.make_schedule(17)
    z = np.random.default_rng(6).standard_normal((1, 8, 8))
    calls = []

    def hook(z0, t):
        calls.append(t)
        return z0

    ddim.reverse(z, ddim.zero_denoiser(), sch, hook=hook)
    assert calls == list(range(17, 0, -1))
    # inverse takes no hook by construction: signature has none
    import inspect

    assert "hook" not in inspect.signature(ddim.inverse).parameters


def test_hook_shape_mismatch():
    sch = ddim.make_schedule(3)
    z = np.random.default_rng(7).standard_normal((1, 8, 8))
    with pytest.raises(ShapeError):
        ddim.reverse(z, ddim.zero_denoiser(), sch, hook=lambda z0, t: z0[:, :4, :4])


def test_roundtrip_zero_denoiser():
    sch = ddim.make_schedule(50)
    for seed in range(3):
        z = np.random.default_rng(seed).standard_normal((4, 64, 64))
        back = ddim.inverse(ddim.reverse(z, ddim.zero_denoiser(), sch), ddim.zero_denoiser(), sch)
        assert np.abs(back - z).max() < 1e-5
        fwd = ddim.reverse(ddim.inverse(z, ddim.zero_denoiser(), sch), ddim.zero_denoiser(), sch)
        assert np.abs(fwd - z).max() < 1e-5


def test_roundtrip_linear_denoiser_regression_baseline():
    # content-dependent denoisers invert only approximately; the measured
    # baseline for lambda=0.1 over 5 seeds is 1.12e-3 max-abs
    sch = ddim.make_schedule(50)
    worst = 0.0
    for seed in range(5):
        z = np.random.default_rng(seed).standard_normal((4, 64, 64))
        den = ddim.linear_denoiser(0.1)
        back = ddim.inverse(ddim.reverse(z, den, sch), den, sch)
        worst = max(worst, float(np.abs(back - z).max()))
    assert worst < 2.5e-3


def test_determinism():
    sch = ddim.make_schedule(25)
    z = np.random.default_rng(8).standard_normal((4, 32, 32))
    den = ddim.seeded_noise_denoiser(0.7, 42)
    a = ddim.reverse(z, den, sch)
    b = ddim.reverse(z, den, sch)
    assert np.array_equal(a, b)
    assert np.array_equal(ddim.inverse(a, den, sch), ddim.inverse(b, den, sch))


def test_denoiser_builtins():
    z = np.random.default_rng(9).standard_normal((2, 8, 8))
    assert np.array_equal(ddim.zero_denoiser()(z, 3), np.zeros_like(z))
    assert np.array_equal(ddim.linear_denoiser(0.0)(z, 3), np.zeros_like(z))
    a = ddim.seeded_noise_denoiser(1.0, 5)(z, 3)
    b = ddim.seeded_noise_denoiser(1.0, 5)(z, 3)
    assert np.array_equal(a, b)
    c = ddim.seeded_noise_denoiser(1.0, 5)(z, 4)
    assert not np.array_equal(a, c)


def test_get_denoiser_names():
    z = np.ones((1, 4, 4))
    assert np.array_equal(ddim.get_denoiser("zero")(z, 1), np.zeros_like(z))
    assert np.array_equal(ddim.get_denoiser("linear", 0.5)(z, 1), 0.5 * z)
    assert ddim.get_denoiser("seeded_noise", 1.0, 2)(z, 1).shape == z.shape
    with pytest.raises(ConfigError):
        ddim.get_denoiser("unet")
