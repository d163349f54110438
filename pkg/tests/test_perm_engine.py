import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from dips.instances import random_tensor
from dips.perm_engine import (MAX_ENUMERATION_N, RngSeed, SplitBijection, all_permutations,
                              as_permutation, enumerate_all, evaluate_dips, evaluate_dips_batch,
                              exact_expectation, monte_carlo, sample_split, sample_uniform,
                              sample_uniform_batch)
from dips.tensor_core import IndexSplit, Tensor4

from conftest import enumeration_mean, loop_dips


def test_enumeration_counts_and_order():
    perms = list(enumerate_all(4))
    assert len(perms) == 24
    assert [tuple(p) for p in perms] == sorted(tuple(p) for p in perms)
    assert all_permutations(5).shape == (120, 5)


def test_enumeration_cap():
    with pytest.raises(ValueError):
        next(enumerate_all(MAX_ENUMERATION_N + 1))
    with pytest.raises(ValueError):
        all_permutations(MAX_ENUMERATION_N + 1)


def test_as_permutation_rejects_non_bijections():
    with pytest.raises(ValueError):
        as_permutation([0, 0, 1])
    with pytest.raises(ValueError):
        as_permutation([1, 2, 3])


def test_rng_seed_validation():
    with pytest.raises(ValueError):
        RngSeed(-1)
    with pytest.raises(ValueError):
        RngSeed(0, 2 ** 64)


def test_same_seed_same_permutation():
    a = sample_uniform(12, RngSeed(7, 3))
    b = sample_uniform(12, RngSeed(7, 3))
    c = sample_uniform(12, RngSeed(7, 4))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_uniformity_chi_square():
    # 3! = 6 cells, 60000 draws: chi-square with 5 dof; 20.5 is the 0.999 quantile
    gen = RngSeed(99).generator()
    draws = sample_uniform_batch(3, 60000, gen)
    counts = Counter(map(tuple, draws))
    assert len(counts) == 6
    expected = 10000
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 20.5


@settings(max_examples=30, deadline=None)
@given(hst.integers(1, 30), hst.integers(0, 2 ** 32))
def test_batch_rows_are_permutations(n, seed):
    rows = sample_uniform_batch(n, 5, np.random.default_rng(seed))
    assert all(np.array_equal(np.sort(r), np.arange(n)) for r in rows)


@pytest.mark.parametrize("product", [False, True])
@pytest.mark.parametrize("diag", [False, True])
def test_evaluate_matches_loops(product, diag, gen):
    t = random_tensor(5, gen, product=product)
    w = t.to_dense()
    for _ in range(10):
        p = gen.permutation(5)
        assert evaluate_dips(t, p, diag) == pytest.approx(loop_dips(w, p, diag), rel=1e-12, abs=1e-12)


def test_evaluate_shape_mismatch(gen):
    with pytest.raises(ValueError):
        evaluate_dips(random_tensor(4, gen), [0, 1, 2], True)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("product", [False, True])
@pytest.mark.parametrize("diag", [False, True])
def test_exact_expectation_vs_enumeration(n, product, diag, gen):
    t = random_tensor(n, gen, product=product)
    assert exact_expectation(t, diag) == pytest.approx(enumeration_mean(t.to_dense(), diag),
                                                       rel=1e-10, abs=1e-12)


def test_exact_expectation_constant():
    t = Tensor4.from_dense(np.full((4, 4, 4, 4), 3.0))
    assert exact_expectation(t, True) == pytest.approx(48.0)
    assert exact_expectation(t, False) == pytest.approx(36.0)


def test_sample_split_structure():
    s = sample_split(7, RngSeed(1))
    mapping = s.as_mapping()
    assert np.array_equal(np.sort(mapping), np.arange(7))
    assert set(mapping[list(s.split.I)]) == set(s.split.J)
    assert len(s.split.I) == 4


def test_split_bijection_validation():
    split = IndexSplit(4, (0, 1), (2, 3))
    with pytest.raises(ValueError):
        SplitBijection(split, (0, 1), (2, 3))


def test_monte_carlo_independent_of_threads():
    t = Tensor4.from_dense(np.random.default_rng(0).standard_normal((6,) * 4))
    stat = lambda perms: evaluate_dips_batch(t, perms, True)  # noqa: E731
    a = monte_carlo(stat, 6, 10_000, seed=5, threads=1, block_size=1000)
    b = monte_carlo(stat, 6, 10_000, seed=5, threads=4, block_size=1000)
    assert np.array_equal(a, b)


def test_monte_carlo_mean_near_exact():
    t = Tensor4.from_dense(np.random.default_rng(1).standard_normal((5,) * 4))
    vals = monte_carlo(lambda p: evaluate_dips_batch(t, p, True), 5, 40_000, seed=11)
    exact = exact_expectation(t, True)
    assert abs(vals.mean() - exact) < 5 * vals.std() / math.sqrt(len(vals))
