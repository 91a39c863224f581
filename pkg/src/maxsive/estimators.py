"""Scikit-learn style estimator API over the watermark codec.

``WatermarkEmbedder`` is a transformer that maps a batch of initial-noise
latents to their watermarked replacements; ``WatermarkDetector`` is a
one-class detector exposing ``decision_function`` (Pearson scores) and
``predict`` (detected / not at the calibrated threshold).  Both derive all
secret material from ``master_seed`` during ``fit`` and compose with
pipelines via the usual ``get_params`` / ``set_params`` machinery.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .codec import (
    KeySpec,
    assemble_initial_noise,
    calibrate_threshold,
    keys_for,
    sample_watermark,
)
from .errors import ShapeError
from .harness import DecodeOptions, decode_score
from .template import TemplateConfig


def _as_batch(X, c: int, h: int, w: int) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None, ...]
    if arr.ndim != 4 or arr.shape[1:] != (c, h, w):
        raise ShapeError(
            f"expected latents shaped (n, {c}, {h}, {w}) or ({c}, {h}, {w}), "
            f"got {np.asarray(X).shape}"
        )
    return arr


class WatermarkEmbedder(BaseEstimator, TransformerMixin):
    """Replace initial-noise latents with the keyed watermark carrier.

    The watermarked initial noise is a deterministic function of the key, so
    ``transform`` keeps each input's batch position and shape but substitutes
    the payload-bearing noise.
    """

    def __init__(self, master_seed: str = "00" * 32, f_hw: int = 2, f_c: int = 1,
                 height: int = 64, width: int = 64, channels: int = 4):
        self.master_seed = master_seed
        self.f_hw = f_hw
        self.f_c = f_c
        self.height = height
        self.width = width
        self.channels = channels

    def fit(self, X=None, y=None):
        spec = KeySpec(
            master_seed=self.master_seed, f_hw=self.f_hw, f_c=self.f_c,
            h=self.height, w=self.width, c=self.channels,
        )
        self.key_spec_ = spec
        self.watermark_ = sample_watermark(spec.master_seed, spec.watermark_shape)
        self.keys_ = keys_for(spec)
        self.latent_ = assemble_initial_noise(
            self.watermark_, self.keys_, spec.replication,
            (self.height, self.width, self.channels),
        )
        return self

    def transform(self, X):
        if not hasattr(self, "latent_"):
            raise NotFittedError("WatermarkEmbedder is not fitted")
        batch = _as_batch(X, self.channels, self.height, self.width)
        return np.broadcast_to(self.latent_, batch.shape).copy()

    def generate(self, n: int = 1) -> np.ndarray:
        """Convenience: n copies of the watermarked initial noise."""
        if not hasattr(self, "latent_"):
            raise NotFittedError("WatermarkEmbedder is not fitted")
        return np.broadcast_to(self.latent_, (n,) + self.latent_.shape).copy()


class WatermarkDetector(BaseEstimator):
    """One-class watermark detector over recovered latents.

    ``decision_function`` returns the decode-pipeline Pearson score per
    sample; ``predict`` thresholds it at the tau calibrated for
    ``target_fpr`` during ``fit``.
    """

    def __init__(self, master_seed: str = "00" * 32, f_hw: int = 2, f_c: int = 1,
                 height: int = 64, width: int = 64, channels: int = 4,
                 target_fpr: float = 1e-3, correct: str = "auto",
                 theta_d: float = 60.0, base_angle: float = 45.0, eta: float = 5.0):
        self.master_seed = master_seed
        self.f_hw = f_hw
        self.f_c = f_c
        self.height = height
        self.width = width
        self.channels = channels
        self.target_fpr = target_fpr
        self.correct = correct
        self.theta_d = theta_d
        self.base_angle = base_angle
        self.eta = eta

    def fit(self, X=None, y=None):
        spec = KeySpec(
            master_seed=self.master_seed, f_hw=self.f_hw, f_c=self.f_c,
            h=self.height, w=self.width, c=self.channels,
        )
        self.key_spec_ = spec
        self.watermark_ = sample_watermark(spec.master_seed, spec.watermark_shape)
        self.keys_ = keys_for(spec)
        self.threshold_ = calibrate_threshold(spec.payload_length, self.target_fpr)
        self.template_config_ = TemplateConfig(
            theta_d=self.theta_d, base_angle=self.base_angle, eta=self.eta
        )
        self.decode_options_ = DecodeOptions(correct=self.correct)
        return self

    def _check_fitted(self):
        if not hasattr(self, "threshold_"):
            raise NotFittedError("WatermarkDetector is not fitted")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        batch = _as_batch(X, self.channels, self.height, self.width)
        scores = np.empty(batch.shape[0])
        for i in range(batch.shape[0]):
            result = decode_score(
                batch[i], self.watermark_, self.keys_,
                self.key_spec_.replication, self.template_config_,
                self.decode_options_,
            )
            scores[i] = result.score
        return scores

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X) > self.threshold_

    def score_samples(self, X) -> np.ndarray:
        return self.decision_function(X)
