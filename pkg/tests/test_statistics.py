import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from dips.perm_engine import all_permutations, monte_carlo
from dips.statistics import (Sample, build_daniels, build_graph_gamma, build_mww, chatterjee_pair,
                             chatterjee_rank_permutation, chatterjee_xi, kendall_direct,
                             load_sample_csv, mww_direct, parse_graph, pearson_direct,
                             regression_bias_statistic, spearman_direct)


def distinct(gen, n):
    return gen.permutation(n * 7)[:n] + gen.random(n) * 0.5


# --- MWW -----------------------------------------------------------------------

def test_mww_separated_and_reversed():
    x, y = [0.1, 0.2, 0.3], [1.0, 2.0, 3.0, 4.0]
    assert build_mww(3, 4, x + y).value() == 12
    assert build_mww(4, 3, y + x).value() == 0


def test_mww_direct_count_under_relabelling(gen):
    pooled = distinct(gen, 6)
    pair = build_mww(3, 3, pooled)
    assert pair.value() == mww_direct(pooled[:3], pooled[3:])
    for _ in range(20):
        p = gen.permutation(6)
        # label i receives observation p[i]
        z = pooled[p]
        assert pair.value(p) == mww_direct(z[:3], z[3:])


def test_mww_rejects_ties_and_bad_sizes():
    with pytest.raises(ValueError):
        build_mww(2, 2, [1.0, 2.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        build_mww(2, 2, [1.0, 2.0, 3.0])


# --- Daniels -------------------------------------------------------------------

def test_kendall_extremes():
    x = np.array([0.3, 1.1, 2.0, 5.0, 7.5])
    assert build_daniels(Sample(x, 2 * x), "kendall").value() == pytest.approx(1.0)
    assert build_daniels(Sample(x, -x), "kendall").value() == pytest.approx(-1.0)


def test_spearman_rank_difference_oracle(gen):
    x, y = gen.standard_normal(5), gen.standard_normal(5)
    assert build_daniels(Sample(x, y), "spearman").value() == pytest.approx(spearman_direct(x, y), abs=1e-12)


@pytest.mark.parametrize("score,direct", [("pearson", pearson_direct), ("kendall", kendall_direct),
                                          ("spearman", spearman_direct)])
def test_daniels_dips_form_under_relabelling(score, direct, gen):
    n = 9
    x, y = gen.standard_normal(n), gen.standard_normal(n)
    pair = build_daniels(Sample(x, y), score)
    assert np.allclose(-pair.C, pair.C.T) and np.allclose(-pair.A, pair.A.T)
    for _ in range(100):
        p = gen.permutation(n)
        # relabelling pi pairs x_i with y_{pi(i)}
        assert pair.value(p) == pytest.approx(direct(x, y[p]), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(hst.lists(hst.floats(-100, 100, allow_nan=False), min_size=3, max_size=10, unique=True),
       hst.randoms(use_true_random=False))
def test_daniels_in_unit_interval(xs, rnd):
    ys = xs[:]
    rnd.shuffle(ys)
    ys = [v * 2 + 1 for v in ys]
    for score in ("pearson", "kendall", "spearman"):
        try:
            r = build_daniels(Sample(np.array(xs), np.array(ys)), score).value()
        except ValueError:
            continue  # all values equal after float rounding
        assert -1 - 1e-12 <= r <= 1 + 1e-12


def test_daniels_errors():
    with pytest.raises(ValueError):
        build_daniels(Sample([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]), "pearson")
    with pytest.raises(ValueError):
        build_daniels(Sample([1.0, 1.0, 2.0], [1.0, 2.0, 3.0]), "kendall")
    with pytest.raises(ValueError):
        build_daniels(Sample([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), "other")


def test_kendall_null_mean_zero_by_enumeration(gen):
    pair = build_daniels(Sample(gen.standard_normal(5), gen.standard_normal(5)), "kendall")
    vals = pair.values(all_permutations(5))
    assert abs(math.fsum(vals) / len(vals)) < 1e-15
    assert abs(pair.null_mean()) < 1e-15


# --- Chatterjee -----------------------------------------------------------------

def test_chatterjee_hand_values():
    assert chatterjee_xi([0, 1, 2]) == pytest.approx(0.25)
    assert chatterjee_xi([0, 2, 1]) == pytest.approx(-1 / 8)
    with pytest.raises(ValueError):
        chatterjee_xi([0])


@pytest.mark.parametrize("n", [2, 3, 7, 12])
def test_chatterjee_reversal_equals_identity(n):
    assert chatterjee_xi(np.arange(n)[::-1]) == pytest.approx(chatterjee_xi(np.arange(n)))
    assert chatterjee_xi(np.arange(n)) == pytest.approx(1 - 3 / (n + 1))


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_chatterjee_range_by_enumeration(n):
    vals = chatterjee_pair(n).values(all_permutations(n))
    assert vals.max() == pytest.approx(1 - 3 / (n + 1))
    assert vals.min() >= -0.5
    assert chatterjee_pair(n).value(np.arange(n)[::-1]) == pytest.approx(vals.max())


def test_chatterjee_c_is_subdiagonal():
    C = chatterjee_pair(5).C
    assert all(C[i, j] == (1.0 if i - j == 1 else 0.0) for i in range(5) for j in range(5))


def test_chatterjee_rank_permutation():
    s = Sample([3.0, 1.0, 2.0], [0.5, 0.1, 0.9])
    # sorted by x: rows 1, 2, 0 with y ranks 0, 2, 1
    assert chatterjee_rank_permutation(s).tolist() == [0, 2, 1]


# --- graphs ---------------------------------------------------------------------

def test_graph_gamma_cases(gen):
    full = [(i, j) for i in range(4) for j in range(4) if i != j]
    assert build_graph_gamma(full, full, 4).value() == 12
    assert build_graph_gamma([(0, 1)], [(1, 0)], 4).value() == 0
    with pytest.raises(ValueError):
        build_graph_gamma([(2, 2)], [], 4)
    ex = [(i, j) for i in range(6) for j in range(6) if i != j and gen.random() < 0.5]
    ey = [(i, j) for i in range(6) for j in range(6) if i != j and gen.random() < 0.5]
    assert build_graph_gamma(ex, ey, 6).value() == len(set(ex) & set(ey))


def test_parse_graph_one_based():
    n, edges = parse_graph({"n": 3, "edges": [[1, 2], [3, 1]]})
    assert n == 3 and edges == [(0, 1), (2, 0)]
    with pytest.raises(ValueError):
        parse_graph({"n": 3, "edges": [[0, 1]]})
    with pytest.raises(ValueError):
        parse_graph({"edges": []})


# --- regression bias --------------------------------------------------------------

def design(gen, n=8, p=2):
    X = gen.standard_normal((n, p))
    X -= X.mean(axis=0)
    y = gen.standard_normal(n)
    Z = np.column_stack([np.ones(n), X])
    return X, y - Z @ np.linalg.lstsq(Z, y, rcond=None)[0]


def test_regression_full_treatment_is_constant(gen):
    X, e = design(gen)
    t, mean = regression_bias_statistic(X, e, 8)
    from dips.perm_engine import evaluate_dips_batch
    vals = evaluate_dips_batch(t, all_permutations(8)[:200], True)
    assert np.ptp(vals) < 1e-12
    assert mean == pytest.approx(vals[0], abs=1e-12)


def test_regression_zero_residuals(gen):
    X, _ = design(gen)
    t, mean = regression_bias_statistic(X, np.zeros(8), 4)
    assert mean == 0.0 and t.max_abs() == 0.0


def test_regression_invalid_count(gen):
    X, e = design(gen)
    with pytest.raises(ValueError):
        regression_bias_statistic(X, e, 0)
    with pytest.raises(ValueError):
        regression_bias_statistic(X, e, 9)


def test_regression_mc_mean(gen):
    X, e = design(gen)
    t, mean = regression_bias_statistic(X, e, 4)
    from dips.perm_engine import evaluate_dips_batch
    vals = monte_carlo(lambda p: evaluate_dips_batch(t, p, True), 8, 100_000, seed=4)
    assert abs(vals.mean() - mean) <= 4 * vals.std() / math.sqrt(len(vals))


def test_regression_matches_treated_set_sum(gen):
    X, e = design(gen)
    t, _ = regression_bias_statistic(X, e, 3)
    H = X @ np.linalg.solve(X.T @ X, X.T)
    Q = H * e[None, :]
    p = gen.permutation(8)
    treated = p[:3]
    from dips.perm_engine import evaluate_dips
    assert evaluate_dips(t, p, True) == pytest.approx(Q[np.ix_(treated, treated)].sum(), abs=1e-12)


# --- files -------------------------------------------------------------------------

def test_load_sample_csv(fixtures, tmp_path):
    s = load_sample_csv(fixtures / "sample.csv")
    assert len(s) == 10
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_sample_csv(bad)


def test_sample_validation():
    with pytest.raises(ValueError):
        Sample([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        Sample([1.0, np.nan], [1.0, 2.0])
