"""2-D grid arithmetic: DFT/IDFT, centered spectra, resampling, and the
correlation / normalization statistics used by the rest of the package.

Conventions
-----------
* Grids are float64 arrays indexed ``(p1, p2)`` = (row, column).
* Rotation is counterclockwise-positive in the ``(p1, p2)`` plane and pivots
  on the grid center ``(h/2, w/2)`` in continuous coordinates.  With the
  usual pixel-center convention that point is array index ``((h-1)/2,
  (w-1)/2)``, so 90-degree turns of even square grids are exact lattice
  permutations.
* All functions are pure; inputs are never modified.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, ShapeError, SpectrumSymmetryError
from .validation import as_complex_grid, as_grid, as_vector, check_even

IMAG_RESIDUE_TOL = 1e-9


def dft2(g) -> np.ndarray:
    """Unnormalized 2-D discrete Fourier transform of a real grid."""
    g = as_grid(g)
    return np.fft.fft2(g)


def idft2(G, tol: float = IMAG_RESIDUE_TOL) -> np.ndarray:
    """Inverse 2-D DFT, returning the real part.

    The input is expected to be the (possibly edited) spectrum of a real
    grid.  Any imaginary residue above ``tol`` signals a spectrum edit that
    broke conjugate symmetry and raises ``SpectrumSymmetryError``.
    """
    G = as_complex_grid(G)
    x = np.fft.ifft2(G)
    residue = float(np.abs(x.imag).max())
    if residue > tol:
        raise SpectrumSymmetryError(
            f"imaginary residue {residue:.3e} exceeds tolerance {tol:.1e}; "
            "spectrum is not conjugate-symmetric"
        )
    return np.ascontiguousarray(x.real)


def center_shift(G) -> np.ndarray:
    """Move the DC bin from (0, 0) to (h/2, w/2). Requires even dimensions."""
    G = np.asarray(G)
    check_even(G.shape[0], G.shape[1], "center_shift")
    return np.fft.fftshift(G)


def uncenter_shift(G) -> np.ndarray:
    """Inverse of :func:`center_shift` (its own inverse for even dims)."""
    G = np.asarray(G)
    check_even(G.shape[0], G.shape[1], "uncenter_shift")
    return np.fft.ifftshift(G)


def _source_coords(h: int, w: int, angle_deg: float):
    """Source coordinates for an inverse-mapped rotation about the center."""
    theta = np.deg2rad(angle_deg)
    c1 = (h - 1) / 2.0
    c2 = (w - 1) / 2.0
    p1, p2 = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    d1 = p1 - c1
    d2 = p2 - c2
    # inverse rotation R(-theta) applied to output offsets
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    s1 = cos_t * d1 + sin_t * d2 + c1
    s2 = -sin_t * d1 + cos_t * d2 + c2
    return s1, s2


def _sample_nearest(g: np.ndarray, s1, s2) -> np.ndarray:
    h, w = g.shape
    i1 = np.rint(s1).astype(np.int64)
    i2 = np.rint(s2).astype(np.int64)
    inside = (i1 >= 0) & (i1 < h) & (i2 >= 0) & (i2 < w)
    out = np.zeros_like(g)
    out[inside] = g[i1[inside], i2[inside]]
    return out


def _sample_bilinear(g: np.ndarray, s1, s2) -> np.ndarray:
    h, w = g.shape
    f1 = np.floor(s1)
    f2 = np.floor(s2)
    a1 = s1 - f1
    a2 = s2 - f2
    i1 = f1.astype(np.int64)
    i2 = f2.astype(np.int64)
    out = np.zeros(s1.shape, dtype=np.float64)
    # out-of-support neighbours contribute zero
    for di, dj, wgt in (
        (0, 0, (1 - a1) * (1 - a2)),
        (0, 1, (1 - a1) * a2),
        (1, 0, a1 * (1 - a2)),
        (1, 1, a1 * a2),
    ):
        j1 = i1 + di
        j2 = i2 + dj
        inside = (j1 >= 0) & (j1 < h) & (j2 >= 0) & (j2 < w)
        vals = np.zeros_like(out)
        vals[inside] = g[j1[inside], j2[inside]]
        out += wgt * vals
    return out


_SAMPLERS = {"nearest": _sample_nearest, "bilinear": _sample_bilinear}


def rotate(g, angle_deg: float, interp: str = "bilinear") -> np.ndarray:
    """Rotate a grid counterclockwise about its center; outside fills with 0."""
    g = as_grid(g)
    if not np.isfinite(angle_deg):
        raise ValueError("rotation angle must be finite")
    if interp not in _SAMPLERS:
        raise ValueError(f"unknown interpolation {interp!r}")
    s1, s2 = _source_coords(g.shape[0], g.shape[1], angle_deg)
    return _SAMPLERS[interp](g, s1, s2)


def resize(g, new_h: int, new_w: int, interp: str = "bilinear") -> np.ndarray:
    """Resample to ``new_h x new_w`` with pixel-center alignment.

    Edge samples clamp to the border, so constant grids stay constant and
    resizing to the same dimensions is the identity.
    """
    g = as_grid(g)
    if new_h < 1 or new_w < 1:
        raise ShapeError(f"target dims must be positive, got {new_h}x{new_w}")
    if interp not in _SAMPLERS:
        raise ValueError(f"unknown interpolation {interp!r}")
    h, w = g.shape
    r1 = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    r2 = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    s1, s2 = np.meshgrid(np.clip(r1, 0, h - 1), np.clip(r2, 0, w - 1), indexing="ij")
    return _SAMPLERS[interp](g, s1, s2)


def pad_center(g, out_h: int, out_w: int) -> np.ndarray:
    """Surround with zeros; the extra cell goes on the high side when parity differs."""
    g = as_grid(g, require_finite=False)
    h, w = g.shape
    if out_h < h or out_w < w:
        raise ShapeError(f"pad target {out_h}x{out_w} smaller than source {h}x{w}")
    top = (out_h - h) // 2
    left = (out_w - w) // 2
    out = np.zeros((out_h, out_w), dtype=np.float64)
    out[top : top + h, left : left + w] = g
    return out


def crop_center(g, out_h: int, out_w: int) -> np.ndarray:
    """Central crop; exact inverse of :func:`pad_center`."""
    g = as_grid(g, require_finite=False)
    h, w = g.shape
    if out_h > h or out_w > w:
        raise ShapeError(f"crop target {out_h}x{out_w} larger than source {h}x{w}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"crop target must be positive, got {out_h}x{out_w}")
    top = (h - out_h) // 2
    left = (w - out_w) // 2
    return g[top : top + out_h, left : left + out_w].copy()


def pearson(a, b) -> float:
    """Pearson correlation coefficient of two equal-length vectors.

    Raises ``DegenerateInputError`` when either argument has zero variance.
    """
    a = as_vector(a, min_len=3, name="a")
    b = as_vector(b, min_len=3, name="b")
    if a.size != b.size:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    da = a - a.mean()
    db = b - b.mean()
    na = float(np.sqrt(np.dot(da, da)))
    nb = float(np.sqrt(np.dot(db, db)))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("zero-variance input to pearson")
    r = float(np.dot(da, db) / (na * nb))
    return max(-1.0, min(1.0, r))


def normalize_unit(v) -> np.ndarray:
    """Shift/scale a vector to sample mean 0 and population std 1."""
    v = as_vector(v, min_len=2, name="vector")
    mean = v.mean()
    sigma = float(np.sqrt(np.mean((v - mean) ** 2)))
    if sigma == 0.0:
        raise DegenerateInputError("zero-variance input to normalize_unit")
    return (v - mean) / sigma
