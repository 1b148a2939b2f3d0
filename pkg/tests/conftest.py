"""Shared fixtures: small layouts, families, and datasets.

Everything here is deliberately tiny; statistically meaningful sample
sizes live in test_acceptance.py.
"""
import numpy as np
import pytest

from pcovtest import Layout, build_family_a, build_family_custom
from pcovtest.estimator import IndexSetPair


def make_layout(J: int = 2, G: int = 2, width: int = 2) -> Layout:
    """Contiguous layout: block (j, g) owns `width` consecutive columns."""
    columns = {}
    col = 0
    for j in range(1, J + 1):
        for g in range(1, G + 1):
            columns[(j, g)] = list(range(col, col + width))
            col += width
    return Layout(J=J, G=G, columns=columns)


@pytest.fixture
def small_layout() -> Layout:
    return make_layout(J=2, G=2, width=2)


@pytest.fixture
def small_family(small_layout):
    """Problem (a) family on the small layout: Q=2, d=4."""
    return build_family_a(small_layout)


@pytest.fixture
def one_pair_family():
    """Single hypothesis, single pair: d=1."""
    return build_family_custom([[IndexSetPair([0, 1], [2, 3])]])


@pytest.fixture
def two_block_family():
    """Three hypotheses with pair counts 2, 1, 1 on 8 columns."""
    return build_family_custom([
        [IndexSetPair([0], [1]), IndexSetPair([2], [3])],
        [IndexSetPair([4], [5])],
        [IndexSetPair([6], [7])],
    ])


@pytest.fixture
def null_data():
    """80 x 8 independent-column sample matching the small layout."""
    return np.random.default_rng(42).standard_normal((80, 8))
