"""CLI surface: subcommands, file flows, and exit codes."""

import json

import numpy as np
import pytest

from maxsive import io as mio
from maxsive.cli import main

SEED = "ab" * 32


@pytest.fixture
def key_file(tmp_path):
    path = tmp_path / "key.json"
    assert main(["keygen", "--seed-hex", SEED, "-o", str(path)]) == 0
    return str(path)


@pytest.fixture
def embedded(tmp_path, key_file):
    path = tmp_path / "zt.mxlt"
    assert main(["embed", "--key", key_file, "-o", str(path)]) == 0
    return str(path)


def test_keygen_writes_valid_key(key_file):
    spec = mio.load_key(key_file)
    assert spec.master_seed == SEED
    assert spec.payload_length == 4096


def test_keygen_random_seed(tmp_path):
    path = tmp_path / "k.json"
    assert main(["keygen", "-o", str(path)]) == 0
    spec = mio.load_key(path)
    assert len(spec.master_seed) == 64


def test_embed_extract_prints_unit_score(embedded, key_file, capsys):
    assert main(["extract", "--key", key_file, embedded]) == 0
    out = capsys.readouterr().out
    assert "score 1.0000" in out


def test_verify_detects(embedded, key_file, capsys):
    assert main(["verify", "--key", key_file, embedded]) == 0
    assert "detected" in capsys.readouterr().out


def test_verify_rejects_unwatermarked(tmp_path, key_file):
    z = np.random.default_rng(0).standard_normal((4, 64, 64))
    path = tmp_path / "noise.mxlt"
    mio.write_latent(path, z)
    assert main(["verify", "--key", key_file, str(path)]) == 2


def test_attack_then_extract(tmp_path, embedded, key_file, capsys):
    attacked = tmp_path / "attacked.mxlt"
    rc = main(["attack", "--pipeline", "gaussian_noise(sigma=0.3,seed=5)",
               embedded, "-o", str(attacked)])
    assert rc == 0
    assert main(["extract", "--key", key_file, str(attacked)]) == 0
    out = capsys.readouterr().out
    score = float(out.rsplit("score", 1)[1].split()[0])
    assert 0.5 < score < 1.0


def test_attack_requires_exactly_one_source(tmp_path, embedded):
    out = tmp_path / "x.mxlt"
    assert main(["attack", embedded, "-o", str(out)]) == 1
    assert main(["attack", "--pipeline", "brightness(b=2)", "--preset",
                 "waves_single", embedded, "-o", str(out)]) == 1


def test_calibrate_json(capsys):
    assert main(["calibrate", "--L", "4096", "--fpr", "1e-3"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["tau"] == pytest.approx(0.0483, abs=2e-3)


def test_capacity_values(capsys):
    assert main(["capacity", "--L", "4096", "--dist", "normal"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["bits"] == 8384.9216
    assert data["bits_per_element"] == 2.0471
    assert main(["capacity", "--L", "256", "--dist", "ber"]) == 0
    assert json.loads(capsys.readouterr().out)["bits"] == 256


def test_attacks_list(capsys):
    assert main(["attacks", "list"]) == 0
    out = capsys.readouterr().out
    assert "rotate_crop_rescale" in out and "jpeg_proxy" in out


def test_identify_cli(tmp_path, capsys):
    registry = tmp_path / "reg.json"
    entries = [(uid, f"{uid + 50:064x}") for uid in range(4)]
    mio.save_registry(registry, entries)
    # embed user 2's watermark
    key = tmp_path / "u2.json"
    assert main(["keygen", "--seed-hex", f"{52:064x}", "-o", str(key)]) == 0
    lat = tmp_path / "img.mxlt"
    assert main(["embed", "--key", str(key), "-o", str(lat)]) == 0
    assert main(["identify", "--registry", str(registry), str(lat)]) == 0
    data = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert data["user_id"] == 2
    assert data["score"] > 0.99


def test_dump_profile(tmp_path, embedded, key_file):
    prof = tmp_path / "profile.csv"
    assert main(["extract", "--key", key_file, "--dump-profile", str(prof), embedded]) == 0
    lines = prof.read_text().strip().splitlines()
    assert lines[0] == "theta_deg,mean_magnitude"
    assert len(lines) == 181


def test_bench_verification_writes_report(tmp_path, capsys):
    out_csv = tmp_path / "rep.csv"
    rc = main(["bench", "--mode", "verification", "--attacks", "clean",
               "--trials", "3", "--channel", "identity", "--sigma", "0",
               "--out", str(out_csv)])
    assert rc == 0
    assert out_csv.exists()
    assert "tpr=1.000" in capsys.readouterr().out


def test_bench_identification(capsys):
    rc = main(["bench", "--mode", "identification", "--users", "6",
               "--channel", "identity", "--sigma", "0", "--no-template"])
    assert rc == 0
    assert "accuracy 1.0000" in capsys.readouterr().out


def test_usage_error_exit_code():
    assert main(["bogus-command"]) == 1
    assert main(["verify"]) == 1  # missing required args


def test_error_paths(tmp_path):
    missing = str(tmp_path / "missing.mxlt")
    key = tmp_path / "key.json"
    main(["keygen", "--seed-hex", SEED, "-o", str(key)])
    assert main(["extract", "--key", str(key), missing]) == 1
    assert main(["attack", "--pipeline", "bogus(x=1)", missing, "-o", missing]) == 1
