"""Watermark payload lifecycle: sample and normalize the payload, derive
per-replica shuffle keys, assemble the initial noise, and on extraction
slice / deshuffle / average and score with Pearson correlation.

Key derivation contract (interoperability-critical, recorded in mxkey files
as ``kdf: sha256-concat`` and ``tiling: cgm-rowmajor``):

* subseed_i  = SHA-256(master_seed_bytes || uint32_be(replica_index))
* payload stream = SHA-256(master_seed_bytes || b"watermark")
* each subseed feeds numpy's PCG64; the replica permutation is a standard
  downward Fisher-Yates whose swap targets are ``j = floor(u_k * (i + 1))``
  over one vectorized batch of uniforms ``u = rng.random(L - 1)``
* replicas tile the latent channel-group-major, then row-major over the
  f_hw x f_hw block grid ("cgm-rowmajor")
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CalibrationError, ConfigError, DegenerateInputError, ShapeError
from .grids import normalize_unit, pearson
from .validation import as_latent


@dataclass(frozen=True)
class ReplicationConfig:
    """Replication factors along the spatial (f_hw) and channel (f_c) axes."""

    f_hw: int = 2
    f_c: int = 1

    def __post_init__(self):
        if self.f_hw < 1 or self.f_c < 1:
            raise ConfigError(f"replication factors must be positive: {self}")

    @property
    def replica_count(self) -> int:
        return self.f_c * self.f_hw * self.f_hw


@dataclass(frozen=True)
class KeySpec:
    """Everything needed to re-derive one user's watermark and shuffle keys."""

    master_seed: str
    f_hw: int = 2
    f_c: int = 1
    h: int = 64
    w: int = 64
    c: int = 4

    def __post_init__(self):
        seed = self.master_seed.lower()
        if len(seed) != 64 or any(ch not in "0123456789abcdef" for ch in seed):
            raise ConfigError("master_seed must be 64 hex characters (256 bits)")
        object.__setattr__(self, "master_seed", seed)
        if self.h != self.w:
            raise ConfigError(f"latent must be square, got {self.h}x{self.w}")
        if self.h % self.f_hw or self.w % self.f_hw or self.c % self.f_c:
            raise ConfigError(
                f"replication factors ({self.f_hw}, {self.f_c}) must divide "
                f"latent dims {self.h}x{self.w}x{self.c}"
            )

    @property
    def replication(self) -> ReplicationConfig:
        return ReplicationConfig(f_hw=self.f_hw, f_c=self.f_c)

    @property
    def watermark_shape(self) -> tuple[int, int, int]:
        return (self.c // self.f_c, self.h // self.f_hw, self.w // self.f_hw)

    @property
    def payload_length(self) -> int:
        cc, hh, ww = self.watermark_shape
        return cc * hh * ww

    @property
    def replica_count(self) -> int:
        return self.f_c * self.f_hw * self.f_hw

    def seed_bytes(self) -> bytes:
        return bytes.fromhex(self.master_seed)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "master_seed": self.master_seed,
            "f_hw": self.f_hw,
            "f_c": self.f_c,
            "h": self.h,
            "w": self.w,
            "c": self.c,
            "kdf": "sha256-concat",
            "tiling": "cgm-rowmajor",
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KeySpec":
        if data.get("version") != 1:
            raise ConfigError(f"unsupported key file version {data.get('version')!r}")
        if data.get("kdf", "sha256-concat") != "sha256-concat":
            raise ConfigError(f"unsupported kdf {data.get('kdf')!r}")
        if data.get("tiling", "cgm-rowmajor") != "cgm-rowmajor":
            raise ConfigError(f"unsupported tiling {data.get('tiling')!r}")
        return cls(
            master_seed=data["master_seed"],
            f_hw=int(data["f_hw"]),
            f_c=int(data["f_c"]),
            h=int(data["h"]),
            w=int(data["w"]),
            c=int(data["c"]),
        )

    @classmethod
    def random(cls, **kwargs) -> "KeySpec":
        return cls(master_seed=secrets.token_hex(32), **kwargs)


def _rng_from_digest(digest: bytes) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


def _payload_rng(seed_bytes: bytes) -> np.random.Generator:
    return _rng_from_digest(hashlib.sha256(seed_bytes + b"watermark").digest())


def _replica_rng(seed_bytes: bytes, index: int) -> np.random.Generator:
    digest = hashlib.sha256(seed_bytes + int(index).to_bytes(4, "big")).digest()
    return _rng_from_digest(digest)


def sample_watermark(seed, dims) -> np.ndarray:
    """Draw a standard-normal payload keyed by ``seed`` and normalize it to
    sample mean 0 / population std 1 over all entries.

    ``seed`` may be a 64-hex master seed string or raw bytes.
    """
    if isinstance(seed, str):
        seed_bytes = bytes.fromhex(seed)
    else:
        seed_bytes = bytes(seed)
    dims = tuple(int(d) for d in dims)
    rng = _payload_rng(seed_bytes)
    w = rng.standard_normal(dims)
    return normalize_unit(w.ravel()).reshape(dims)


class ShuffleKeySet:
    """Per-replica permutations of [0, L), derived from one master seed."""

    def __init__(self, perms: np.ndarray):
        perms = np.asarray(perms, dtype=np.int64)
        if perms.ndim != 2:
            raise ShapeError("perms must be (replicas, L)")
        self.perms = perms
        self._inverse = None

    @property
    def replica_count(self) -> int:
        return self.perms.shape[0]

    @property
    def payload_length(self) -> int:
        return self.perms.shape[1]

    @property
    def inverse(self) -> np.ndarray:
        if self._inverse is None:
            inv = np.empty_like(self.perms)
            ar = np.arange(self.perms.shape[1])
            for i in range(self.perms.shape[0]):
                inv[i, self.perms[i]] = ar
            self._inverse = inv
        return self._inverse


def _fisher_yates(rng: np.random.Generator, n: int) -> np.ndarray:
    # one vectorized batch of uniforms keeps the draw sequence well defined
    arr = np.arange(n)
    if n < 2:
        return arr
    u = rng.random(n - 1)
    a = arr.tolist()
    k = 0
    for i in range(n - 1, 0, -1):
        j = int(u[k] * (i + 1))
        k += 1
        a[i], a[j] = a[j], a[i]
    return np.array(a, dtype=np.int64)


def derive_keys(master_seed, replica_count: int, length: int) -> ShuffleKeySet:
    """Derive the per-replica shuffle permutations for one master seed."""
    if replica_count < 1:
        raise ConfigError(f"replica_count must be >= 1, got {replica_count}")
    if isinstance(master_seed, str):
        seed_bytes = bytes.fromhex(master_seed)
    else:
        seed_bytes = bytes(master_seed)
    perms = np.empty((replica_count, length), dtype=np.int64)
    for i in range(replica_count):
        perms[i] = _fisher_yates(_replica_rng(seed_bytes, i), length)
    return ShuffleKeySet(perms)


def keys_for(spec: KeySpec) -> ShuffleKeySet:
    return derive_keys(spec.seed_bytes(), spec.replica_count, spec.payload_length)


def _block_slices(cfg: ReplicationConfig, h: int, w: int, c: int):
    """Replica index -> (channel slice, row slice, col slice), cgm-rowmajor."""
    ch = c // cfg.f_c
    bh = h // cfg.f_hw
    bw = w // cfg.f_hw
    out = []
    for g in range(cfg.f_c):
        for br in range(cfg.f_hw):
            for bc in range(cfg.f_hw):
                out.append(
                    (
                        slice(g * ch, (g + 1) * ch),
                        slice(br * bh, (br + 1) * bh),
                        slice(bc * bw, (bc + 1) * bw),
                    )
                )
    return out


def assemble_initial_noise(w, keys: ShuffleKeySet, cfg: ReplicationConfig, latent_dims) -> np.ndarray:
    """Replicate, shuffle, and tile the payload into a full initial noise."""
    h, ww, c = (int(d) for d in latent_dims)
    if h % cfg.f_hw or ww % cfg.f_hw or c % cfg.f_c:
        raise ConfigError(
            f"latent dims {h}x{ww}x{c} not divisible by replication {cfg}"
        )
    wm = np.asarray(w, dtype=np.float64)
    block_shape = (c // cfg.f_c, h // cfg.f_hw, ww // cfg.f_hw)
    flat = wm.ravel()
    if flat.size != int(np.prod(block_shape)):
        raise ShapeError(
            f"payload length {flat.size} does not match block shape {block_shape}"
        )
    if keys.replica_count != cfg.replica_count or keys.payload_length != flat.size:
        raise ShapeError("key set does not match replication config")
    z = np.empty((c, h, ww), dtype=np.float64)
    for i, (cs, rs, ws_) in enumerate(_block_slices(cfg, h, ww, c)):
        z[cs, rs, ws_] = flat[keys.perms[i]].reshape(block_shape)
    return z


def extract_watermark(z, keys: ShuffleKeySet, cfg: ReplicationConfig) -> np.ndarray:
    """Slice the latent, invert each replica's shuffle, and average."""
    z = as_latent(z)
    c, h, w = z.shape
    if h % cfg.f_hw or w % cfg.f_hw or c % cfg.f_c:
        raise ShapeError(f"latent dims {h}x{w}x{c} incompatible with {cfg}")
    block_shape = (c // cfg.f_c, h // cfg.f_hw, w // cfg.f_hw)
    length = int(np.prod(block_shape))
    if keys.replica_count != cfg.replica_count or keys.payload_length != length:
        raise ShapeError("key set does not match replication config")
    inv = keys.inverse
    acc = np.zeros(length, dtype=np.float64)
    for i, (cs, rs, ws_) in enumerate(_block_slices(cfg, h, w, c)):
        acc += z[cs, rs, ws_].ravel()[inv[i]]
    acc /= keys.replica_count
    return acc.reshape(block_shape)


def score(w, w_hat) -> float:
    """Pearson correlation of payload and estimate; 0.0 on degenerate input."""
    r, _ = score_detail(w, w_hat)
    return r


def score_detail(w, w_hat) -> tuple[float, bool]:
    try:
        return pearson(np.ravel(w), np.ravel(w_hat)), False
    except DegenerateInputError:
        return 0.0, True


def calibrate_threshold(
    length: int,
    target_fpr: float,
    method: str = "analytic",
    trials: int | None = None,
    seed: int = 0,
) -> float:
    """Detection threshold tau such that P(null score > tau) = target_fpr.

    ``analytic`` uses the exact null of the Pearson coefficient between a
    fixed vector and ``length`` IID normals (Student t with length-2 dof via
    r * sqrt((L-2) / (1-r^2))).  ``montecarlo`` takes the empirical
    (1 - target_fpr) quantile of simulated null scores.
    """
    if length < 16:
        raise ConfigError(f"payload length must be >= 16, got {length}")
    # 0.5 itself is allowed: the null is symmetric, so tau(0.5) = 0
    if not (0.0 < target_fpr <= 0.5):
        raise ConfigError(f"target_fpr must be in (0, 0.5], got {target_fpr}")
    if method == "analytic":
        dof = length - 2
        tq = float(stats.t.ppf(1.0 - target_fpr, dof))
        return tq / np.sqrt(dof + tq * tq)
    if method == "montecarlo":
        if trials is None:
            raise ConfigError("montecarlo calibration requires a trial count")
        if trials * target_fpr < 100:
            raise CalibrationError(
                f"{trials} trials resolve FPR {target_fpr} too coarsely "
                "(need trials * fpr >= 100)"
            )
        rng = np.random.default_rng(seed)
        ref = normalize_unit(rng.standard_normal(length))
        scores = np.empty(trials)
        chunk = max(1, min(trials, 4_000_000 // length))
        done = 0
        while done < trials:
            n = min(chunk, trials - done)
            block = rng.standard_normal((n, length))
            scores[done : done + n] = _row_pearson(block, ref)
            done += n
        return float(np.quantile(scores, 1.0 - target_fpr))
    raise ConfigError(f"unknown calibration method {method!r}")


def _row_pearson(rows: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Pearson of each row against a fixed reference vector."""
    rows = rows - rows.mean(axis=1, keepdims=True)
    ref = ref - ref.mean()
    num = rows @ ref
    den = np.sqrt((rows * rows).sum(axis=1) * np.dot(ref, ref))
    out = np.zeros(rows.shape[0])
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return np.clip(out, -1.0, 1.0)


def verify(score_value: float, tau: float) -> bool:
    """Detected iff the score strictly exceeds the calibrated threshold."""
    return score_value > tau


class RegistryIndex:
    """Compiled registry for batched identification.

    Precomputes each user's normalized payload and flattened inverse
    permutations so that scoring one recovered latent against every user is
    a handful of vectorized gathers.
    """

    def __init__(self, entries, geometry: KeySpec | None = None, f_hw: int = 2,
                 f_c: int = 1, h: int = 64, w: int = 64, c: int = 4):
        if geometry is not None:
            f_hw, f_c, h, w, c = geometry.f_hw, geometry.f_c, geometry.h, geometry.w, geometry.c
        self.entries = sorted((int(uid), str(seed)) for uid, seed in entries)
        if not self.entries:
            raise ConfigError("registry is empty")
        self.cfg = ReplicationConfig(f_hw=f_hw, f_c=f_c)
        self.dims = (h, w, c)
        probe = KeySpec(master_seed=self.entries[0][1], f_hw=f_hw, f_c=f_c, h=h, w=w, c=c)
        self.length = probe.payload_length
        self.block_shape = probe.watermark_shape
        n = len(self.entries)
        r = self.cfg.replica_count
        self.payloads = np.empty((n, self.length), dtype=np.float32)
        self.inv_perms = np.empty((n, r, self.length), dtype=np.int32)
        for row, (uid, seed) in enumerate(self.entries):
            spec = KeySpec(master_seed=seed, f_hw=f_hw, f_c=f_c, h=h, w=w, c=c)
            self.payloads[row] = sample_watermark(seed, self.block_shape).ravel()
            self.inv_perms[row] = keys_for(spec).inverse
        self.user_ids = np.array([uid for uid, _ in self.entries])

    def spec_for(self, user_id: int) -> KeySpec:
        h, w, c = self.dims
        for uid, seed in self.entries:
            if uid == user_id:
                return KeySpec(master_seed=seed, f_hw=self.cfg.f_hw,
                               f_c=self.cfg.f_c, h=h, w=w, c=c)
        raise KeyError(user_id)

    def _slices_matrix(self, z: np.ndarray) -> np.ndarray:
        h, w, c = self.dims
        out = np.empty((self.cfg.replica_count, self.length), dtype=np.float32)
        for i, (cs, rs, ws_) in enumerate(_block_slices(self.cfg, h, w, c)):
            out[i] = z[cs, rs, ws_].ravel()
        return out

    def scores(self, z, chunk: int = 256) -> np.ndarray:
        """Per-user Pearson scores for one recovered latent.

        Uses float32 gathers with float64 reductions; payload rows are
        normalized at compile time (mean 0, sum of squares = L), which
        removes two passes from the correlation.
        """
        z = as_latent(z)
        if z.shape != (self.dims[2], self.dims[0], self.dims[1]):
            raise ShapeError(
                f"latent shape {z.shape} does not match registry geometry {self.dims}"
            )
        s = self._slices_matrix(z)
        n, r = self.payloads.shape[0], self.cfg.replica_count
        length = float(self.length)
        out = np.empty(n, dtype=np.float64)
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            acc = s[0].take(self.inv_perms[lo:hi, 0, :])
            for i in range(1, r):
                acc += s[i].take(self.inv_perms[lo:hi, i, :])
            acc *= 1.0 / r
            wm = self.payloads[lo:hi]
            num = np.einsum("ij,ij->i", wm, acc, dtype=np.float64)
            mean = acc.mean(axis=1, dtype=np.float64)
            ss = np.einsum("ij,ij->i", acc, acc, dtype=np.float64) - length * mean * mean
            den = np.sqrt(length * np.maximum(ss, 0.0))
            res = np.zeros(hi - lo)
            ok = den > 0
            res[ok] = num[ok] / den[ok]
            out[lo:hi] = res
        return np.clip(out, -1.0, 1.0)


def identify(z, registry: RegistryIndex, cfg: ReplicationConfig | None = None):
    """Best-matching (user_id, score) over a registry; ties go to the lowest id."""
    if cfg is not None and cfg != registry.cfg:
        raise ConfigError("replication config does not match the compiled registry")
    scores_all = registry.scores(z)
    best = int(np.argmax(scores_all))  # entries sorted by id, argmax takes first
    return int(registry.user_ids[best]), float(scores_all[best])
