import itertools
import math
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def loop_dips(w, p, include_diagonal=True):
    """Plain double loop over a dense array; the reference for vectorised evaluation."""
    n = len(p)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j and not include_diagonal:
                continue
            total += w[i, j, p[i], p[j]]
    return total


def enumeration_mean(w, include_diagonal=True):
    n = w.shape[0]
    vals = [loop_dips(w, p, include_diagonal) for p in itertools.permutations(range(n))]
    return math.fsum(vals) / len(vals)
