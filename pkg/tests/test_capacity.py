"""Entropy accounting and the published capacity table."""

import math

import pytest

from maxsive.capacity import capacity, entropy
from maxsive.errors import ConfigError

# (method, L, dist, capacity bits) for the published comparison table
TABLE_ROWS = [
    ("stable-signature", 48, "bernoulli_half", 48.0),
    ("aqualora", 48, "bernoulli_half", 48.0),
    ("tree-rings", 10, "standard_normal", 20.471),
    ("ringid", 11, "bernoulli_half", 11.0),
    ("gaussian-shading", 256, "bernoulli_half", 256.0),
    ("maxsive", 4096, "standard_normal", 8384.9216),
]


def test_bernoulli_entropy():
    assert entropy("bernoulli_half") == 1.0


def test_gaussian_entropy():
    exact = 0.5 * math.log2(2 * math.pi * math.e)
    assert entropy("standard_normal") == pytest.approx(exact, abs=1e-15)
    assert entropy("standard_normal") == pytest.approx(2.0471, abs=5e-5)


def test_entropy_ratio():
    ratio = entropy("standard_normal") / entropy("bernoulli_half")
    assert ratio == pytest.approx(2.0471, abs=5e-5)


@pytest.mark.parametrize("name,length,dist,bits", TABLE_ROWS)
def test_table_rows(name, length, dist, bits):
    assert round(capacity(length, dist), 4) == bits


def test_linearity():
    for dist in ("bernoulli_half", "standard_normal"):
        assert capacity(512, dist) == 2 * capacity(256, dist)


def test_validation():
    with pytest.raises(ConfigError):
        entropy("uniform")
    with pytest.raises(ConfigError):
        capacity(0, "bernoulli_half")
