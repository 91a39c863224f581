"""Stirmark-style and photometric/degradation distortions as deterministic
grid transforms, composable into pipelines.

Every attack restores the input dimensions after the distortion, operates
identically on a single grid or per channel of a latent tensor, and is a
pure function of (spec, seed, input).  The pipeline grammar is::

    kind(param=value, ...) | kind(...) | ...
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PipelineParseError
from .grids import crop_center, pad_center, resize, rotate
from .template import gamma

# kind -> {param: (type, low, high)}; None bound = unbounded
KIND_PARAMS: dict[str, dict[str, tuple[type, float | None, float | None]]] = {
    "rotate_crop_rescale": {"theta": (float, -360.0, 360.0)},
    "rotate_pad": {"theta": (float, -360.0, 360.0)},
    "scale_crop": {"s": (float, 1.0, 8.0)},
    "scale_pad": {"s": (float, 0.1, 1.0)},
    "translate_rowcol_remove": {"nc": (int, 0, None), "nr": (int, 0, None)},
    "crop_percent": {"p": (float, 0.0, 95.0)},
    "shear": {"sx": (float, -45.0, 45.0), "sy": (float, -45.0, 45.0)},
    "gaussian_noise": {"sigma": (float, 0.0, None)},
    "gaussian_blur": {"k": (int, 1, 63)},
    "median_filter": {"k": (int, 1, 63)},
    "brightness": {"b": (float, 0.0, None)},
    "contrast": {"c": (float, 0.0, None)},
    "jpeg_proxy": {"q": (int, 1, 100)},
    "erase_region": {"frac": (float, 0.0, 1.0)},
}

_STOCHASTIC = {"translate_rowcol_remove", "gaussian_noise", "erase_region"}


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KIND_PARAMS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        allowed = KIND_PARAMS[self.kind]
        clean = {}
        for name, value in self.params.items():
            if name not in allowed:
                raise ConfigError(f"{self.kind}: unknown parameter {name!r}")
            typ, lo, hi = allowed[name]
            value = typ(value)
            if lo is not None and value < lo:
                raise ConfigError(f"{self.kind}: {name}={value} below minimum {lo}")
            if hi is not None and value > hi:
                raise ConfigError(f"{self.kind}: {name}={value} above maximum {hi}")
            clean[name] = value
        missing = set(allowed) - set(clean)
        if missing:
            raise ConfigError(f"{self.kind}: missing parameters {sorted(missing)}")
        object.__setattr__(self, "params", clean)

    def format(self) -> str:
        parts = [f"{k}={_fmt_value(v)}" for k, v in sorted(self.params.items())]
        if self.kind in _STOCHASTIC and self.seed:
            parts.append(f"seed={self.seed}")
        return f"{self.kind}({','.join(parts)})"


@dataclass(frozen=True)
class AttackPipeline:
    specs: tuple

    def __post_init__(self):
        specs = tuple(self.specs)
        if not specs:
            raise ConfigError("attack pipeline must not be empty")
        object.__setattr__(self, "specs", specs)

    def format(self) -> str:
        return "|".join(s.format() for s in self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __len__(self):
        return len(self.specs)


def _fmt_value(v) -> str:
    if isinstance(v, float) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return str(v)


# ---------------------------------------------------------------------------
# single-grid attack implementations


def _rotate_crop_rescale(g, theta, rng):
    h, w = g.shape
    rotated = rotate(g, theta)
    g_div = gamma(theta % 90.0)
    side_h = int(math.floor(h / g_div))
    side_w = int(math.floor(w / g_div))
    if side_h >= h and side_w >= w:
        return rotated
    return resize(crop_center(rotated, side_h, side_w), h, w)


def _rotate_pad(g, theta, rng):
    return rotate(g, theta)


def _scale_crop(g, s, rng):
    h, w = g.shape
    big = resize(g, max(h, int(round(h * s))), max(w, int(round(w * s))))
    return crop_center(big, h, w)


def _scale_pad(g, s, rng):
    h, w = g.shape
    small = resize(g, min(h, max(1, int(round(h * s)))), min(w, max(1, int(round(w * s)))))
    return pad_center(small, h, w)


def _translate_rowcol_remove(g, nc, nr, rng):
    h, w = g.shape
    if nr >= h or nc >= w:
        raise ConfigError("cannot remove all rows or columns")
    rows = np.setdiff1d(np.arange(h), rng.choice(h, size=nr, replace=False))
    cols = np.setdiff1d(np.arange(w), rng.choice(w, size=nc, replace=False))
    reduced = g[np.ix_(rows, cols)]
    return resize(reduced, h, w)


def _crop_percent(g, p, rng):
    h, w = g.shape
    keep = math.sqrt(1.0 - p / 100.0)
    side_h = max(1, int(round(h * keep)))
    side_w = max(1, int(round(w * keep)))
    if side_h >= h and side_w >= w:
        return g.copy()
    return resize(crop_center(g, side_h, side_w), h, w)


def _shear(g, sx, sy, rng):
    h, w = g.shape
    ax = sx / 100.0
    ay = sy / 100.0
    c1 = (h - 1) / 2.0
    c2 = (w - 1) / 2.0
    p1, p2 = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    d1 = p1 - c1
    d2 = p2 - c2
    # inverse of [[1, ay], [ax, 1]] applied to output offsets
    det = 1.0 - ax * ay
    s1 = (d1 - ay * d2) / det + c1
    s2 = (-ax * d1 + d2) / det + c2
    from .grids import _sample_bilinear  # shared resampler

    sheared = _sample_bilinear(g, s1, s2)
    # crop away the zero wedges the shear drags in, then restore dims
    m1 = min(h // 2 - 1, int(math.ceil(abs(ay) * (w / 2.0))))
    m2 = min(w // 2 - 1, int(math.ceil(abs(ax) * (h / 2.0))))
    if m1 == 0 and m2 == 0:
        return sheared
    return resize(crop_center(sheared, h - 2 * m1, w - 2 * m2), h, w)


def _gaussian_noise(g, sigma, rng):
    return g + sigma * rng.standard_normal(g.shape)


def _gaussian_kernel(k: int) -> np.ndarray:
    if k == 1:
        return np.array([1.0])
    sigma = 0.3 * ((k - 1) * 0.5 - 1) + 0.8  # OpenCV's size->sigma rule
    x = np.arange(k) - (k - 1) / 2.0
    kern = np.exp(-0.5 * (x / sigma) ** 2)
    return kern / kern.sum()


def _gaussian_blur(g, k, rng):
    if k == 1:
        return g.copy()
    kern = _gaussian_kernel(k)
    pad = k // 2
    padded = np.pad(g, pad, mode="reflect")
    tmp = np.apply_along_axis(lambda row: np.convolve(row, kern, mode="same"), 1, padded)
    out = np.apply_along_axis(lambda col: np.convolve(col, kern, mode="same"), 0, tmp)
    return out[pad : pad + g.shape[0], pad : pad + g.shape[1]]


def _median_filter(g, k, rng):
    if k == 1:
        return g.copy()
    pad_lo = (k - 1) // 2
    pad_hi = k // 2
    padded = np.pad(g, ((pad_lo, pad_hi), (pad_lo, pad_hi)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return np.median(windows, axis=(-2, -1))


def _brightness(g, b, rng):
    return g * b


def _contrast(g, c, rng):
    mean = g.mean()
    return mean + c * (g - mean)


# Annex-K luminance quantization table used by baseline JPEG encoders.
_JPEG_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)
    mat = np.cos(np.pi * (2 * k[None, :] + 1) * k[:, None] / (2 * n))
    mat *= np.sqrt(2.0 / n)
    mat[0] *= 1.0 / np.sqrt(2.0)
    return mat


_DCT8 = _dct_matrix(8)


def _jpeg_proxy(g, q, rng):
    """Block-DCT quantization with the standard luminance table scaled by
    quality q (libjpeg convention).  q=100 disables quantization entirely so
    identity parameters stay lossless."""
    if q >= 100:
        return g.copy()
    h, w = g.shape
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    table = np.clip(np.floor((_JPEG_LUMA * scale + 50.0) / 100.0), 1, 255)
    lo, hi = float(g.min()), float(g.max())
    if hi <= lo:
        return g.copy()
    scaled = (g - lo) * (255.0 / (hi - lo))
    ph = (-h) % 8
    pw = (-w) % 8
    padded = np.pad(scaled, ((0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape
    blocks = padded.reshape(hh // 8, 8, ww // 8, 8).transpose(0, 2, 1, 3)
    coef = _DCT8 @ (blocks - 128.0) @ _DCT8.T
    coef = np.round(coef / table) * table
    rec = _DCT8.T @ coef @ _DCT8 + 128.0
    rec = rec.transpose(0, 2, 1, 3).reshape(hh, ww)[:h, :w]
    return rec * ((hi - lo) / 255.0) + lo


def _erase_region(g, frac, rng):
    h, w = g.shape
    if frac <= 0.0:
        return g.copy()
    side_h = min(h, max(1, int(round(h * math.sqrt(frac)))))
    side_w = min(w, max(1, int(round(w * math.sqrt(frac)))))
    top = int(rng.integers(0, h - side_h + 1))
    left = int(rng.integers(0, w - side_w + 1))
    out = g.copy()
    out[top : top + side_h, left : left + side_w] = 0.0
    return out


_IMPLS = {
    "rotate_crop_rescale": lambda g, p, rng: _rotate_crop_rescale(g, p["theta"], rng),
    "rotate_pad": lambda g, p, rng: _rotate_pad(g, p["theta"], rng),
    "scale_crop": lambda g, p, rng: _scale_crop(g, p["s"], rng),
    "scale_pad": lambda g, p, rng: _scale_pad(g, p["s"], rng),
    "translate_rowcol_remove": lambda g, p, rng: _translate_rowcol_remove(g, p["nc"], p["nr"], rng),
    "crop_percent": lambda g, p, rng: _crop_percent(g, p["p"], rng),
    "shear": lambda g, p, rng: _shear(g, p["sx"], p["sy"], rng),
    "gaussian_noise": lambda g, p, rng: _gaussian_noise(g, p["sigma"], rng),
    "gaussian_blur": lambda g, p, rng: _gaussian_blur(g, p["k"], rng),
    "median_filter": lambda g, p, rng: _median_filter(g, p["k"], rng),
    "brightness": lambda g, p, rng: _brightness(g, p["b"], rng),
    "contrast": lambda g, p, rng: _contrast(g, p["c"], rng),
    "jpeg_proxy": lambda g, p, rng: _jpeg_proxy(g, p["q"], rng),
    "erase_region": lambda g, p, rng: _erase_region(g, p["frac"], rng),
}


def apply(spec: AttackSpec, x) -> np.ndarray:
    """Apply one attack to a 2-D grid or (c, h, w) latent tensor.

    Geometric parameters act identically on every channel; stochastic kinds
    draw all channels from one generator keyed by the attack's seed, so a
    fixed (kind, params, seed, input) tuple is bit-reproducible.
    """
    arr = np.asarray(x, dtype=np.float64)
    impl = _IMPLS[spec.kind]
    # crc32 keys the stream per kind without PYTHONHASHSEED instability
    rng = np.random.default_rng((int(spec.seed), zlib.crc32(spec.kind.encode())))
    if arr.ndim == 2:
        return impl(arr, spec.params, rng)
    if arr.ndim == 3:
        return np.stack([impl(arr[ch], spec.params, rng) for ch in range(arr.shape[0])])
    raise ConfigError(f"attacks expect 2-D or 3-D arrays, got shape {arr.shape}")


def apply_pipeline(pipeline: AttackPipeline, x) -> np.ndarray:
    out = np.asarray(x, dtype=np.float64)
    for spec in pipeline:
        out = apply(spec, out)
    return out


def to_pixel_proxy(x, scale: int = 8) -> np.ndarray:
    """Block-replicate a latent up by ``scale`` to mimic the decoder's
    resolution gap before attacking in the pixel domain."""
    arr = np.asarray(x, dtype=np.float64)
    return np.kron(arr, np.ones((scale, scale))) if arr.ndim == 2 else np.stack(
        [np.kron(arr[ch], np.ones((scale, scale))) for ch in range(arr.shape[0])]
    )


def from_pixel_proxy(x, scale: int = 8) -> np.ndarray:
    """Block-average a pixel-proxy grid back down to latent resolution."""
    arr = np.asarray(x, dtype=np.float64)

    def down(plane):
        h, w = plane.shape
        return plane.reshape(h // scale, scale, w // scale, scale).mean(axis=(1, 3))

    return down(arr) if arr.ndim == 2 else np.stack([down(arr[ch]) for ch in range(arr.shape[0])])


# ---------------------------------------------------------------------------
# pipeline grammar

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def parse_pipeline(text: str) -> AttackPipeline:
    """Parse ``kind(param=value,...)|kind(...)`` into an AttackPipeline."""
    specs = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        m = _NAME_RE.match(text, pos)
        if not m:
            raise PipelineParseError(f"expected attack name at position {pos}")
        kind = m.group(0)
        if kind not in KIND_PARAMS:
            raise PipelineParseError(f"unknown attack kind {kind!r} at position {pos}")
        pos = m.end()
        if pos >= n or text[pos] != "(":
            raise PipelineParseError(f"expected '(' after {kind!r} at position {pos}")
        close = text.find(")", pos)
        if close < 0:
            raise PipelineParseError(f"unclosed '(' at position {pos}")
        arg_text = text[pos + 1 : close]
        params: dict = {}
        seed = 0
        if arg_text.strip():
            for item in arg_text.split(","):
                if "=" not in item:
                    raise PipelineParseError(
                        f"expected param=value, got {item.strip()!r} at position {pos}"
                    )
                name, _, value = item.partition("=")
                name = name.strip()
                value = value.strip()
                try:
                    num = float(value)
                except ValueError as exc:
                    raise PipelineParseError(
                        f"bad numeric value {value!r} for {name!r}"
                    ) from exc
                if name == "seed":
                    seed = int(num)
                else:
                    params[name] = num
        try:
            specs.append(AttackSpec(kind=kind, params=params, seed=seed))
        except ConfigError as exc:
            raise PipelineParseError(str(exc)) from exc
        pos = close + 1
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        if text[pos] != "|":
            raise PipelineParseError(f"expected '|' between attacks at position {pos}")
        pos += 1
    return AttackPipeline(specs=tuple(specs))


def format_pipeline(pipeline: AttackPipeline) -> str:
    return pipeline.format()


def describe_kinds() -> list[str]:
    """Human-readable kind/param listing used by the ``attacks list`` CLI."""
    lines = []
    for kind in sorted(KIND_PARAMS):
        params = []
        for name, (typ, lo, hi) in KIND_PARAMS[kind].items():
            rng_txt = f"{lo if lo is not None else '-inf'}..{hi if hi is not None else 'inf'}"
            params.append(f"{name}:{typ.__name__}[{rng_txt}]")
        if kind in _STOCHASTIC:
            params.append("seed:int")
        lines.append(f"{kind}({', '.join(params)})")
    return lines
