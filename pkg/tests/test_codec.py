"""Payload lifecycle: sampling, keyed shuffles, round trips, scoring,
threshold calibration, and identification."""

import numpy as np
import pytest
from scipy import stats

from maxsive import codec
from maxsive.codec import KeySpec, RegistryIndex, ReplicationConfig
from maxsive.errors import CalibrationError, ConfigError, ShapeError

SEED_A = "aa" * 32
SEED_B = "bb" * 32


def make_setup(f_hw=2, f_c=1, seed=SEED_A):
    spec = KeySpec(master_seed=seed, f_hw=f_hw, f_c=f_c)
    w = codec.sample_watermark(spec.master_seed, spec.watermark_shape)
    keys = codec.keys_for(spec)
    z = codec.assemble_initial_noise(w, keys, spec.replication, (spec.h, spec.w, spec.c))
    return spec, w, keys, z


class TestSampleWatermark:
    def test_moments_forced(self):
        for seed in (SEED_A, SEED_B):
            w = codec.sample_watermark(seed, (4, 32, 32))
            flat = w.ravel()
            assert abs(flat.mean()) < 1e-9
            assert abs(np.sqrt((flat**2).mean()) - 1.0) < 1e-9

    def test_deterministic(self):
        a = codec.sample_watermark(SEED_A, (1, 16, 16))
        b = codec.sample_watermark(SEED_A, (1, 16, 16))
        assert np.array_equal(a, b)
        c = codec.sample_watermark(SEED_B, (1, 16, 16))
        assert not np.array_equal(a, c)

    def test_gaussian_shape_ks(self):
        # KS statistic against the standard normal stays small at L=4096
        for k in range(20):
            w = codec.sample_watermark(f"{k:064x}", (4, 32, 32))
            stat = stats.kstest(w.ravel(), "norm").statistic
            assert stat <= 0.05


class TestDeriveKeys:
    def test_bijection(self):
        keys = codec.derive_keys(SEED_A, 4, 4096)
        for i in range(4):
            assert np.array_equal(np.sort(keys.perms[i]), np.arange(4096))

    def test_deterministic(self):
        a = codec.derive_keys(SEED_A, 4, 256)
        b = codec.derive_keys(SEED_A, 4, 256)
        assert np.array_equal(a.perms, b.perms)

    def test_replicas_distinct(self):
        keys = codec.derive_keys(SEED_A, 16, 64)
        for i in range(16):
            for j in range(i + 1, 16):
                assert not np.array_equal(keys.perms[i], keys.perms[j])

    def test_dual_implementation_oracle(self):
        # independent straightforward Fisher-Yates over the same uniform draws
        import hashlib

        length = 4
        for replica in range(3):
            digest = hashlib.sha256(bytes.fromhex(SEED_A) + replica.to_bytes(4, "big")).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))
            u = rng.random(length - 1)
            items = list(range(length))
            draw = 0
            for i in range(length - 1, 0, -1):
                j = int(u[draw] * (i + 1))
                draw += 1
                items[i], items[j] = items[j], items[i]
            keys = codec.derive_keys(SEED_A, replica + 1, length)
            assert list(keys.perms[replica]) == items

    def test_inverse_perms(self):
        keys = codec.derive_keys(SEED_B, 4, 128)
        for i in range(4):
            assert np.array_equal(keys.perms[i][keys.inverse[i]], np.arange(128))


class TestAssembleExtract:
    @pytest.mark.parametrize("f_hw", [1, 2, 4])
    @pytest.mark.parametrize("f_c", [1, 2, 4])
    def test_roundtrip_exact(self, f_hw, f_c):
        spec, w, keys, z = make_setup(f_hw=f_hw, f_c=f_c)
        out = codec.extract_watermark(z, keys, spec.replication)
        assert np.abs(out - w).max() < 1e-9

    def test_trivial_tiling_is_reshape(self):
        spec = KeySpec(master_seed=SEED_A, f_hw=1, f_c=1)
        w = codec.sample_watermark(SEED_A, spec.watermark_shape)
        identity_keys = codec.ShuffleKeySet(np.arange(spec.payload_length)[None, :])
        z = codec.assemble_initial_noise(w, identity_keys, spec.replication, (64, 64, 4))
        assert np.array_equal(z, w.reshape(4, 64, 64))

    def test_block_multisets(self):
        spec, w, keys, z = make_setup()
        expected = np.sort(w.ravel())
        for br in range(2):
            for bc in range(2):
                block = z[:, br * 32 : (br + 1) * 32, bc * 32 : (bc + 1) * 32]
                assert np.allclose(np.sort(block.ravel()), expected)

    def test_global_moments(self):
        _, _, _, z = make_setup()
        assert abs(z.mean()) < 1e-9
        assert abs(np.sqrt((z**2).mean()) - 1.0) < 1e-9

    def test_zeroed_replica_scales_average(self):
        spec, w, keys, z = make_setup()
        z = z.copy()
        z[:, :32, :32] = 0.0  # first replica block (cgm-rowmajor)
        out = codec.extract_watermark(z, keys, spec.replication)
        assert np.abs(out - 0.75 * w).max() < 1e-9

    def test_noise_averaging_gain(self):
        spec, w, keys, z = make_setup()
        sigma_c = 0.8
        ratios = []
        rng = np.random.default_rng(123)
        for _ in range(100):
            noisy = z + sigma_c * rng.standard_normal(z.shape)
            out = codec.extract_watermark(noisy, keys, spec.replication)
            ratios.append(np.std(out - w) * np.sqrt(keys.replica_count) / sigma_c)
        assert abs(np.mean(ratios) - 1.0) < 0.1

    def test_divisibility_errors(self):
        spec, w, keys, _ = make_setup()
        with pytest.raises(ConfigError):
            codec.assemble_initial_noise(w, keys, ReplicationConfig(f_hw=3), (64, 64, 4))
        with pytest.raises(ShapeError):
            codec.extract_watermark(np.zeros((4, 32, 32)), keys, spec.replication)


class TestScore:
    def test_clean_roundtrip(self):
        spec, w, keys, z = make_setup()
        out = codec.extract_watermark(z, keys, spec.replication)
        assert codec.score(w, out) == pytest.approx(1.0)

    def test_null_scores_small(self):
        w = codec.sample_watermark(SEED_A, (4, 32, 32))
        rng = np.random.default_rng(7)
        for _ in range(200):
            assert abs(codec.score(w, rng.standard_normal(4096))) < 0.08

    def test_half_corrupted_attenuation(self):
        # zeroing half the entries attenuates r to sqrt(0.5); replacing them
        # with fresh unit noise attenuates to 0.5 (variance stays up)
        w = codec.sample_watermark(SEED_A, (4, 32, 32)).ravel()
        rng = np.random.default_rng(11)
        zeroed, swapped = [], []
        for _ in range(20):
            idx = rng.choice(4096, size=2048, replace=False)
            what = w.copy()
            what[idx] = 0.0
            zeroed.append(codec.score(w, what))
            what = w.copy()
            what[idx] = rng.standard_normal(2048)
            swapped.append(codec.score(w, what))
        assert np.mean(zeroed) == pytest.approx(np.sqrt(0.5), abs=0.05)
        assert np.mean(swapped) == pytest.approx(0.5, abs=0.05)

    def test_degenerate_flag(self):
        w = codec.sample_watermark(SEED_A, (1, 8, 8))
        r, flag = codec.score_detail(w, np.zeros(64))
        assert r == 0.0 and flag

    def test_affine_invariance_of_estimate(self):
        # global scale drift from inversion round trips must not move scores
        spec, w, keys, z = make_setup()
        what = codec.extract_watermark(z, keys, spec.replication)
        base = codec.score(w, what)
        assert abs(codec.score(w, 3.7 * what + 0.2) - base) <= 1e-12


class TestCalibrate:
    def test_analytic_matches_published_value(self):
        tau = codec.calibrate_threshold(4096, 1e-3)
        assert tau == pytest.approx(0.0483, abs=2e-3)

    def test_half_fpr_is_zero(self):
        assert codec.calibrate_threshold(4096, 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_montecarlo_agrees_with_analytic(self):
        for length in (256, 1024):
            ana = codec.calibrate_threshold(length, 1e-2)
            mc = codec.calibrate_threshold(length, 1e-2, method="montecarlo",
                                           trials=50_000, seed=0)
            assert abs(mc - ana) / ana < 0.05

    def test_montecarlo_needs_trials(self):
        with pytest.raises(CalibrationError):
            codec.calibrate_threshold(4096, 1e-3, method="montecarlo", trials=1000)
        with pytest.raises(ConfigError):
            codec.calibrate_threshold(4096, 1e-3, method="montecarlo")

    def test_bounds(self):
        with pytest.raises(ConfigError):
            codec.calibrate_threshold(8, 1e-3)
        with pytest.raises(ConfigError):
            codec.calibrate_threshold(4096, 0.6)


class TestVerify:
    def test_decisions(self):
        assert codec.verify(0.9, 0.05)
        assert not codec.verify(0.01, 0.05)
        assert not codec.verify(0.05, 0.05)  # strict inequality at the boundary


class TestKeySpec:
    def test_roundtrip_dict(self):
        spec = KeySpec(master_seed=SEED_A, f_hw=4, f_c=2)
        again = KeySpec.from_dict(spec.to_dict())
        assert again == spec

    def test_validation(self):
        with pytest.raises(ConfigError):
            KeySpec(master_seed="zz" * 32)
        with pytest.raises(ConfigError):
            KeySpec(master_seed=SEED_A, f_hw=3)
        with pytest.raises(ConfigError):
            KeySpec(master_seed=SEED_A, h=64, w=32)

    def test_payload_length_default(self):
        assert KeySpec(master_seed=SEED_A).payload_length == 4096


class TestIdentify:
    def test_clean_64_users(self):
        entries = [(uid, f"{uid + 1000:064x}") for uid in range(64)]
        reg = RegistryIndex(entries)
        spec = reg.spec_for(17)
        w = codec.sample_watermark(spec.master_seed, spec.watermark_shape)
        z = codec.assemble_initial_noise(w, codec.keys_for(spec), spec.replication, (64, 64, 4))
        uid, best = codec.identify(z, reg)
        assert uid == 17
        assert best == pytest.approx(1.0, abs=1e-5)
        scores = reg.scores(z)
        impostors = np.delete(scores, 17)
        assert np.abs(impostors).max() < 0.1

    def test_registry_of_one(self):
        reg = RegistryIndex([(5, SEED_A)])
        z = np.random.default_rng(0).standard_normal((4, 64, 64))
        uid, best = codec.identify(z, reg)
        assert uid == 5  # threshold decisions are the caller's job

    def test_wrong_key_sensitivity(self):
        spec, w, keys, z = make_setup(seed="11" * 32)
        tau = codec.calibrate_threshold(4096, 1e-3)
        bad = 0
        for k in range(300):
            wrong = KeySpec(master_seed=f"{2000000 + k + 12345:064x}")
            what = codec.extract_watermark(z, codec.keys_for(wrong), spec.replication)
            if abs(codec.score(w, what)) >= tau:
                bad += 1
        assert bad == 0
