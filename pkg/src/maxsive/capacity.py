"""Shannon-entropy capacity accounting for watermark payloads."""

from __future__ import annotations

import math

from .errors import ConfigError

DISTRIBUTIONS = ("bernoulli_half", "standard_normal")

# Published capacity tables quote the per-element entropy rounded to four
# decimals and multiply from there, so capacity() does the same.
_REPORT_DECIMALS = 4


def entropy(dist: str) -> float:
    """Entropy in bits per element: 1 for fair bits, 0.5*log2(2*pi*e) for
    standard-normal elements."""
    if dist == "bernoulli_half":
        return 1.0
    if dist == "standard_normal":
        return 0.5 * math.log2(2.0 * math.pi * math.e)
    raise ConfigError(f"unknown distribution {dist!r}")


def capacity(length: int, dist: str) -> float:
    """Payload capacity in bits for ``length`` IID elements of ``dist``."""
    if length < 1:
        raise ConfigError(f"element count must be >= 1, got {length}")
    return length * round(entropy(dist), _REPORT_DECIMALS)
