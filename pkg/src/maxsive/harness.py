"""Experiment runner: embed/attack/extract flows, verification (TPR@FPR)
and identification campaigns, and report emission.

The decode pipeline scores the raw recovered latent and, when the spectrum
carries credible template evidence (margin gate), a family of corrected
candidates: both rotation branches with crop-rounding slack, plus a discrete
scale sweep when only a rescale is indicated.  Template bins are notched out
of every corrected candidate before extraction so the injected template does
not act as payload noise.  The reported score is the best candidate's.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import attacks as atk
from .channel import ChannelConfig, transmit
from .codec import (
    KeySpec,
    RegistryIndex,
    assemble_initial_noise,
    calibrate_threshold,
    extract_watermark,
    keys_for,
    sample_watermark,
    score_detail,
)
from .errors import ConfigError
from .template import (
    TemplateConfig,
    build_mask,
    correct,
    detect_angle,
    remove_template,
    scale_candidates,
)
from .validation import as_latent


@dataclass(frozen=True)
class DecodeOptions:
    """Knobs for the candidate-generation side of decoding."""

    correct: str = "auto"  # auto | always | off
    margin_gate: float = 2.0
    size_slack: int = 1
    notch_radius: int = 1
    scale_sweep: tuple = tuple(
        round(0.75 + 0.05 * k, 2) for k in range(11) if k != 5
    )
    early_stop_score: float = 0.5

    def __post_init__(self):
        if self.correct not in ("auto", "always", "off"):
            raise ConfigError(f"correct must be auto/always/off, got {self.correct!r}")


@dataclass(frozen=True)
class DecodeResult:
    score: float
    theta_hat: float | None
    corrected: bool
    candidates: int
    degenerate: bool


def _candidate_latents(z, template_cfg: TemplateConfig, options: DecodeOptions):
    """Corrected candidate latents (already notched) and the angle estimate."""
    z = as_latent(z)
    est = detect_angle(z, template_cfg)
    engaged = options.correct == "always" or (
        options.correct == "auto" and est.margin_ratio >= options.margin_gate
    )
    cands: list[np.ndarray] = []
    if engaged:
        mask = build_mask(z.shape[1], z.shape[2], template_cfg)
        for cand in correct(z, est, template_cfg.base_angle, size_slack=options.size_slack):
            cands.append(remove_template(cand, mask, options.notch_radius))
        theta_a = (est.theta_hat - template_cfg.base_angle) % 180.0
        near_axis = min(theta_a % 90.0, 90.0 - (theta_a % 90.0)) <= template_cfg.candidate_step
        if est.scale_flag and near_axis and options.scale_sweep:
            for _, cand in scale_candidates(z, options.scale_sweep):
                cands.append(remove_template(cand, mask, options.notch_radius))
    return est, engaged, cands


def decode_score(
    z,
    payload,
    keys,
    replication,
    template_cfg: TemplateConfig | None,
    options: DecodeOptions = DecodeOptions(),
) -> DecodeResult:
    """Score one recovered latent against one user's payload."""
    z = as_latent(z)
    best, degenerate = score_detail(payload, extract_watermark(z, keys, replication))
    if template_cfg is None or options.correct == "off":
        return DecodeResult(best, None, False, 1, degenerate)
    est, engaged, cands = _candidate_latents(z, template_cfg, options)
    for cand in cands:
        s, _ = score_detail(payload, extract_watermark(cand, keys, replication))
        best = max(best, s)
    return DecodeResult(best, est.theta_hat, engaged, 1 + len(cands), degenerate)


def identify_decode(
    z,
    registry: RegistryIndex,
    template_cfg: TemplateConfig | None,
    options: DecodeOptions = DecodeOptions(),
):
    """Best (user_id, score) over a registry, trying corrected candidates.

    Candidates are scanned in most-plausible-first order and the scan stops
    early once a candidate's best score clears ``early_stop_score`` (far
    above anything an impostor can reach), which keeps large clean campaigns
    at one registry pass per image.
    """
    z = as_latent(z)
    candidates = [z]
    theta_hat = None
    if template_cfg is not None and options.correct != "off":
        est, engaged, cands = _candidate_latents(z, template_cfg, options)
        theta_hat = est.theta_hat
        if engaged:
            candidates = cands + [z]
    best_uid, best_score = -1, -np.inf
    for cand in candidates:
        scores = registry.scores(cand)
        idx = int(np.argmax(scores))
        if scores[idx] > best_score:
            best_uid, best_score = int(registry.user_ids[idx]), float(scores[idx])
        if best_score >= options.early_stop_score:
            break
    return best_uid, best_score, theta_hat


# ---------------------------------------------------------------------------
# campaign configuration and reports


@dataclass(frozen=True)
class ExperimentConfig:
    trials: int = 200
    attack_rows: tuple = (("clean", None),)  # (label, AttackPipeline | None)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    template: TemplateConfig | None = field(default_factory=TemplateConfig)
    f_hw: int = 2
    f_c: int = 1
    h: int = 64
    w: int = 64
    c: int = 4
    target_fpr: float = 1e-3
    seed_base: int = 0
    negatives: int = 0
    decode: DecodeOptions = field(default_factory=DecodeOptions)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not (0.0 < self.target_fpr < 0.5):
            raise ConfigError(f"target_fpr must be in (0, 0.5), got {self.target_fpr}")

    def keyspec(self, master_seed: str) -> KeySpec:
        return KeySpec(
            master_seed=master_seed, f_hw=self.f_hw, f_c=self.f_c,
            h=self.h, w=self.w, c=self.c,
        )


@dataclass
class ReportRow:
    attack: str
    params: str
    trials: int
    tpr: float
    threshold: float
    mean_score: float
    mean_theta_err_deg: float | None
    seconds: float


CSV_COLUMNS = [
    "attack", "params", "trials", "tpr", "threshold",
    "mean_score", "mean_theta_err_deg", "seconds",
]


@dataclass
class VerificationReport:
    rows: list
    threshold: float
    empirical_fpr: float | None
    negatives: int
    config: dict

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([
                    row.attack, row.params, row.trials, f"{row.tpr:.4f}",
                    f"{row.threshold:.6f}", f"{row.mean_score:.6f}",
                    "" if row.mean_theta_err_deg is None else f"{row.mean_theta_err_deg:.3f}",
                    f"{row.seconds:.3f}",
                ])

    def to_json(self, path) -> None:
        payload = {
            "threshold": self.threshold,
            "empirical_fpr": self.empirical_fpr,
            "negatives": self.negatives,
            "config": self.config,
            "rows": [vars(r) for r in self.rows],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, default=str)
            fh.write("\n")


@dataclass
class IdentificationReport:
    n_users: int
    images_per_user: int
    accuracy: float
    mean_true_score: float
    seconds: float
    config: dict


def _trial_seed(base: int, *parts) -> str:
    text = ":".join(str(p) for p in (base,) + parts)
    return hashlib.sha256(text.encode()).hexdigest()


def _thread_count() -> int:
    raw = os.environ.get("MAXSIVE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map(fn, items):
    threads = _thread_count()
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _known_rotation(pipeline) -> float | None:
    """Attack rotation angle when the row is a single rotation attack."""
    if pipeline is None or len(pipeline) != 1:
        return None
    spec = pipeline.specs[0]
    if spec.kind in ("rotate_crop_rescale", "rotate_pad"):
        return float(spec.params["theta"])
    return None


def run_verification(cfg: ExperimentConfig) -> VerificationReport:
    """TPR@FPR campaign over the configured attack rows.

    Each trial embeds a fresh payload, pushes it through the channel with
    the row's attack pipeline, decodes, and compares against the calibrated
    threshold.  Optional negative trials decode unwatermarked random latents
    through the same pipeline to validate the empirical FPR.
    """
    probe = cfg.keyspec("0" * 64)
    tau = calibrate_threshold(probe.payload_length, cfg.target_fpr)
    rows = []
    for attack_idx, (label, pipeline) in enumerate(cfg.attack_rows):
        known_rot = _known_rotation(pipeline)
        t0 = time.perf_counter()

        def one_trial(trial, _pipeline=pipeline, _idx=attack_idx, _rot=known_rot):
            seed_hex = _trial_seed(cfg.seed_base, "verify", _idx, trial)
            spec = cfg.keyspec(seed_hex)
            payload = sample_watermark(spec.master_seed, spec.watermark_shape)
            keys = keys_for(spec)
            z_w = assemble_initial_noise(payload, keys, spec.replication, (cfg.h, cfg.w, cfg.c))
            chan = replace(cfg.channel, pipeline=_pipeline,
                           seed=int(seed_hex[:12], 16))
            z_p = transmit(z_w, chan, cfg.template)
            result = decode_score(z_p, payload, keys, spec.replication, cfg.template, cfg.decode)
            theta_err = None
            if _rot is not None and result.theta_hat is not None:
                est_rot = (result.theta_hat - cfg.template.base_angle) % 180.0
                delta = abs(est_rot - (_rot % 180.0))
                theta_err = min(delta, 180.0 - delta)
            return result.score, theta_err

        outcomes = _map(one_trial, list(range(cfg.trials)))
        scores = np.array([s for s, _ in outcomes])
        errs = [e for _, e in outcomes if e is not None]
        rows.append(ReportRow(
            attack=label,
            params="" if pipeline is None else pipeline.format(),
            trials=cfg.trials,
            tpr=float(np.mean(scores > tau)),
            threshold=tau,
            mean_score=float(scores.mean()),
            mean_theta_err_deg=float(np.mean(errs)) if errs else None,
            seconds=time.perf_counter() - t0,
        ))

    empirical_fpr = None
    if cfg.negatives:
        def one_negative(k):
            rng = np.random.default_rng((cfg.seed_base, 0xDEAD, k))
            z_neg = rng.standard_normal((cfg.c, cfg.h, cfg.w))
            seed_hex = _trial_seed(cfg.seed_base, "neg", k)
            spec = cfg.keyspec(seed_hex)
            payload = sample_watermark(spec.master_seed, spec.watermark_shape)
            keys = keys_for(spec)
            result = decode_score(z_neg, payload, keys, spec.replication, cfg.template, cfg.decode)
            return result.score > tau

        hits = _map(one_negative, list(range(cfg.negatives)))
        empirical_fpr = float(np.mean(hits))

    config_blob = {
        "trials": cfg.trials,
        "target_fpr": cfg.target_fpr,
        "seed_base": cfg.seed_base,
        "channel": vars(cfg.channel) | {"pipeline": None},
        "template": None if cfg.template is None else vars(cfg.template),
        "geometry": {"h": cfg.h, "w": cfg.w, "c": cfg.c, "f_hw": cfg.f_hw, "f_c": cfg.f_c},
        "decode": vars(cfg.decode),
    }
    return VerificationReport(
        rows=rows, threshold=tau, empirical_fpr=empirical_fpr,
        negatives=cfg.negatives, config=config_blob,
    )


def build_registry_entries(n_users: int, seed_base: int = 0) -> list[tuple[int, str]]:
    """Deterministic (user_id, master_seed) entries for campaign registries."""
    return [(uid, _trial_seed(seed_base, "user", uid)) for uid in range(n_users)]


def run_identification(
    cfg: ExperimentConfig,
    n_users: int,
    images_per_user: int = 1,
    attack: atk.AttackPipeline | None = None,
    registry: RegistryIndex | None = None,
) -> IdentificationReport:
    """Identification accuracy over an n_users registry.

    Each image embeds its owner's watermark, passes through the channel, and
    is attributed to the registry user with the highest decoded score.
    """
    if n_users < 2:
        raise ConfigError(f"identification needs >= 2 users, got {n_users}")
    t0 = time.perf_counter()
    if registry is None:
        entries = build_registry_entries(n_users, cfg.seed_base)
        registry = RegistryIndex(
            entries, f_hw=cfg.f_hw, f_c=cfg.f_c, h=cfg.h, w=cfg.w, c=cfg.c
        )
    correct_count = 0
    true_scores = []

    def one_image(job):
        uid, img = job
        spec = registry.spec_for(uid)
        payload = sample_watermark(spec.master_seed, spec.watermark_shape)
        keys = keys_for(spec)
        z_w = assemble_initial_noise(payload, keys, spec.replication, (cfg.h, cfg.w, cfg.c))
        chan = replace(cfg.channel, pipeline=attack,
                       seed=int(_trial_seed(cfg.seed_base, "ident", uid, img)[:12], 16))
        z_p = transmit(z_w, chan, cfg.template)
        pred_uid, best_score, _ = identify_decode(z_p, registry, cfg.template, cfg.decode)
        return pred_uid == uid, best_score

    jobs = [(uid, img) for uid, _ in registry.entries for img in range(images_per_user)]
    for ok, s in _map(one_image, jobs):
        correct_count += ok
        true_scores.append(s)
    total = len(jobs)
    return IdentificationReport(
        n_users=n_users,
        images_per_user=images_per_user,
        accuracy=correct_count / total,
        mean_true_score=float(np.mean(true_scores)),
        seconds=time.perf_counter() - t0,
        config={
            "seed_base": cfg.seed_base,
            "attack": None if attack is None else attack.format(),
            "channel_mode": cfg.channel.mode,
            "sigma": cfg.channel.sigma,
        },
    )


# ---------------------------------------------------------------------------
# attack presets


def preset_path(name: str) -> str:
    base = os.path.join(os.path.dirname(__file__), "presets")
    path = os.path.join(base, f"{name}.txt")
    if not os.path.exists(path):
        available = sorted(
            fn[:-4] for fn in os.listdir(base) if fn.endswith(".txt")
        )
        raise ConfigError(f"unknown preset {name!r}; available: {available}")
    return path


def load_preset(name: str) -> list[tuple[str, atk.AttackPipeline | None]]:
    """Load attack rows from a shipped preset file.

    Lines are ``label = pipeline`` or a bare pipeline; ``#`` comments and the
    special pipeline ``clean`` (no attack) are allowed.
    """
    rows: list[tuple[str, atk.AttackPipeline | None]] = []
    with open(preset_path(name)) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            eq = line.find("=")
            paren = line.find("(")
            if eq >= 0 and (paren < 0 or eq < paren):
                label, text = line[:eq].strip(), line[eq + 1 :].strip()
            else:
                label, text = line, line
            if text == "clean":
                rows.append((label, None))
            else:
                rows.append((label, atk.parse_pipeline(text)))
    return rows
