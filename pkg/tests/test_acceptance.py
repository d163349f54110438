"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Oracles are computed here from definitions (loops, enumeration, numpy linear
algebra) and compared against the library.
"""
import itertools
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from dips.bound_constants import bennett_nu, hadamard_permuted, main_constants, operator_norm, \
    permuted_opnorm_B
from dips.cli import main
from dips.instances import (admissible_rectangular, centred_matrix, centred_zero_diagonal,
                            psd_unit_diagonal, random_degenerate, random_tensor)
from dips.perm_engine import all_permutations, evaluate_dips_batch, exact_expectation
from dips.statistics import Sample, build_daniels, build_mww, chatterjee_pair
from dips.tail_bounds import bennett_curve, bennett_from_scale, bound_main_tail, main_tail_curve
from dips.tensor_core import IndexSplit, Tensor4, hoeffding_decompose, is_degenerate, tilde_d_restrict
from dips.verifier import (DecouplingConstants, TailEstimate, check_decoupling_identity,
                           check_dominance, check_randomization_mgf, dkw_half_width, null_values,
                           survival_from_values)

MAX_THREADS = os.cpu_count() or 1


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}")
        assert ok, detail
    return emit


def gather(w, p):
    """sum_{i,j} w[i, j, p[i], p[j]] for a batch of permutations."""
    n = w.shape[0]
    i = np.arange(n)
    return w[i[None, :, None], i[None, None, :], p[:, :, None], p[:, None, :]].sum(axis=(1, 2))


def corpus(gen, count=104):
    out = []
    for k in range(count):
        n = 3 + k % 4
        out.append(random_tensor(n, gen, product=bool((k // 4) % 2)))
    return out


# --- 1 ----------------------------------------------------------------------------

def test_criterion_01_decomposition(report):
    gen = np.random.default_rng(101)
    start = time.perf_counter()
    worst, degenerate, tensors = 0.0, True, corpus(gen)
    for t in tensors:
        w = t.to_dense()
        n = t.n
        perms = all_permutations(n)
        dec = hoeffding_decompose(t)
        direct = gather(w, perms)
        rebuilt = (n * dec.a_w[np.arange(n)[None, :], perms].sum(axis=1)
                   + gather(dec.d_w.to_dense(), perms) + dec.constant)
        rel = np.abs(rebuilt - direct) / np.maximum(np.abs(direct), 1.0)
        worst = max(worst, float(rel.max()))
        degenerate &= is_degenerate(dec.d_w, tol=1e-9)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and degenerate and elapsed < 60 and len(tensors) >= 100
    report(1, ok, f"{len(tensors)} tensors, max rel err {worst:.1e}, degenerate={degenerate}, "
                  f"{elapsed:.1f}s")


# --- 2 ----------------------------------------------------------------------------

def test_criterion_02_exact_expectation(report):
    gen = np.random.default_rng(101)
    worst = 0.0
    for t in corpus(gen):
        w = t.to_dense()
        perms = all_permutations(t.n)
        i = np.arange(t.n)
        for diag in (True, False):
            vals = gather(w, perms)
            if not diag:
                vals = vals - w[i[None, :], i[None, :], perms, perms].sum(axis=1)
            enum = math.fsum(vals) / len(vals)
            got = exact_expectation(t, diag)
            worst = max(worst, abs(got - enum) / max(abs(enum), 1.0))
    report(2, worst <= 1e-10, f"max rel err {worst:.1e}")


# --- 3 ----------------------------------------------------------------------------

def test_criterion_03_centering(report):
    gen = np.random.default_rng(103)
    worst = 0.0
    for k in range(100):
        n = 4 + k % 5
        t = random_tensor(n, gen, product=bool(k % 2))
        size = math.ceil(n / 2)
        split = IndexSplit(n, tuple(gen.choice(n, size, replace=False)),
                           tuple(gen.choice(n, size, replace=False)))
        block = tilde_d_restrict(t, split).dense
        assert block.shape == (size, n - size, size, n - size)
        worst = max(worst, *(float(np.abs(block.mean(axis=a)).max()) for a in range(4)))
    report(3, worst < 1e-12, f"100 pairs, max |partial average| {worst:.1e}")


# --- 4 ----------------------------------------------------------------------------

def decoupling_oracle(D, p):
    """Both sides of the decoupling identity from loops and enumeration."""
    n = D.shape[0]
    n1 = -(-n // 2)
    alpha = Fraction(n * (n - 1) * (n - 2) * (n - 3),
                     (n1 - 1) * (n - n1 - 1) * (n * n - 3 * n + 1))
    total, count = 0.0, 0
    for I in itertools.combinations(range(n), n1):
        Ic = [x for x in range(n) if x not in I]
        J = sorted(p[i] for i in I)
        Jc = [x for x in range(n) if x not in J]
        block = D[np.ix_(I, Ic, J, Jc)]
        # centring every slot in turn equals the inclusion-exclusion form
        for axis in range(4):
            block = block - block.mean(axis=axis, keepdims=True)
        total += sum(block[a, b, J.index(p[i]), Jc.index(p[j])]
                     for a, i in enumerate(I) for b, j in enumerate(Ic))
        count += 1
    N, b = n, (n1 - 1) * (n - n1 - 1) / (n * (n - 1) * (n - 2) * (n - 3))
    diag_coef = 2 * (n1 - 1) * (n - n1 - 1) / (n * (n - 2) * (n - 3))
    off = sum(D[i, j, p[i], p[j]] for i in range(n) for j in range(n) if i != j)
    swap = sum(D[i, j, p[j], p[i]] for i in range(n) for j in range(n) if i != j)
    diag = sum(D[i, i, p[i], p[i]] for i in range(n))
    S = sum(D[i, i, k, k] for i in range(n) for k in range(n))
    offs = [sum(D[i, j, q[i], q[j]] for i in range(n) for j in range(n) if i != j)
            for q in itertools.permutations(range(n))]
    mean_off = math.fsum(offs) / len(offs)
    remainder = diag_coef * diag - b * swap - b * S - b * (N * N - 3 * N + 1) * mean_off
    return float(alpha) * (total / count + remainder), off - mean_off


def test_criterion_04_decoupling(report):
    gen = np.random.default_rng(104)
    worst, verdicts = 0.0, set()
    for n in (4, 5, 6):
        for _ in range(10):
            d = random_degenerate(n, gen)
            D = d.to_dense()
            for _ in range(10):
                p = gen.permutation(n)
                lhs, rhs = decoupling_oracle(D, list(p))
                worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1.0))
                verdicts.add(check_decoupling_identity(d, p).status)
    ceiling = all(DecouplingConstants.for_size(n).within_ceiling() for n in range(4, 10_001))
    ok = worst <= 1e-9 and verdicts == {"pass"} and ceiling
    report(4, ok, f"300 checks, max rel gap {worst:.1e}, verifier {sorted(verdicts)}, "
                  f"alpha ceiling N in [4, 1e4]: {ceiling}")


# --- 5 ----------------------------------------------------------------------------

def nu_oracle(C, A):
    """max over rows and over all (sigma, sigma') in S_n x S_n of the truncated cross sum."""
    n = C.shape[0]
    heads = all_permutations(n)[:, : n // 2]
    best = 0.0
    for i in range(n):
        X = C[i][heads]
        for j in range(n):
            best = max(best, float(np.max(np.abs(X @ A[j][heads].T))))
    return best


def test_criterion_05_nu(report):
    gen = np.random.default_rng(105)
    mismatches, greedy_misses, cases = 0, 0, 0
    for k in range(240):
        n = 4 + k % 2
        if k % 4 < 2:
            C = gen.choice([-1.0, 1.0], (n, n))
            A = gen.choice([-1.0, 1.0], (n, n))
        else:
            C, A = gen.standard_normal((n, n)), gen.standard_normal((n, n))
        want = nu_oracle(C, A)
        got = bennett_nu(C, A, exact_cap=0)
        integer = k % 4 < 2
        # integer sums are exact in floating point; Gaussian sums differ only by summation order
        same = got == want if integer else math.isclose(got, want, rel_tol=1e-12)
        mismatches += not same
        greedy_misses += not math.isclose(bennett_nu(C, A, exact_cap=0, method="greedy"), want,
                                          rel_tol=1e-12)
        cases += 1
    report(5, mismatches == 0, f"{cases} instances, block-method mismatches {mismatches} "
                               f"(greedy heuristic alone would miss {greedy_misses})")


# --- 6 ----------------------------------------------------------------------------

def test_criterion_06_B_interval(report):
    gen = np.random.default_rng(106)
    bad, count = 0, 0
    for k in range(52):
        n = 4 + k % 4
        t = random_degenerate(n, gen) if k % 3 == 0 else random_tensor(n, gen, product=bool(k % 2))
        w = t.to_dense()
        perms = all_permutations(n)
        i = np.arange(n)
        mats = w[i[None, :, None], i[None, None, :], perms[:, :, None], perms[:, None, :]]
        exhaustive = float(np.linalg.norm(mats, 2, axis=(1, 2)).max())
        # exact_cap=0 forces the heuristic path at its default settings
        iv = permuted_opnorm_B(t, exact_cap=0, seed=k)
        tol = 1e-10 * max(exhaustive, 1.0)
        brackets = iv.lower - tol <= exhaustive <= iv.upper + tol
        bad += not (brackets and abs(iv.lower - exhaustive) <= tol)
        count += 1
    report(6, bad == 0, f"{count} tensors N in 4..7, interval misses {bad}")


# --- 7 and 8 ------------------------------------------------------------------------

def dominance_grid(bound_fn, max_dev, floor=0.01, points=50):
    """Half the points cover the observed deviations, half run out to where the bound reaches ``floor``."""
    hi = max(max_dev, 1.0)
    while bound_fn(hi) > floor:
        hi *= 2
    lo_t, hi_t = hi / 2, hi
    for _ in range(60):
        mid = (lo_t + hi_t) / 2
        lo_t, hi_t = (mid, hi_t) if bound_fn(mid) > floor else (lo_t, mid)
    top = max(hi_t, 2 * max_dev, 1e-9)
    first = np.linspace(0.0, max(max_dev, top / 1e3), points // 2)
    second = np.geomspace(first[-1] * 1.05, top, points - points // 2)
    return np.concatenate([first, second])


def run_dominance(number, make_case, seed, report):
    gen = np.random.default_rng(seed)
    statuses = {"pass": 0, "inconclusive": 0, "fail": 0}
    worst_margin = math.inf
    start = time.perf_counter()
    for k in range(200):
        tensor, bound_fn, curve_fn = make_case(gen)
        batch = lambda perms: evaluate_dips_batch(tensor, perms, True)  # noqa: E731
        values = null_values(batch, 20, "mc", replicates=100_000, seed=seed * 1000 + k,
                             threads=MAX_THREADS)
        mean = exact_expectation(tensor, True)
        grid = dominance_grid(bound_fn, float(np.max(values - mean)))
        tail = TailEstimate(grid, survival_from_values(values, mean, grid), dkw_half_width(len(values)),
                            mean, "mc", len(values), seed * 1000 + k)
        rep = check_dominance(curve_fn(grid), tail)
        statuses[rep.status] += 1
        worst_margin = min(worst_margin, rep.margin)
    elapsed = time.perf_counter() - start
    ok = statuses["pass"] == 200
    report(number, ok, f"200 tensors at N=20, 1e5 replicates, 50-point grid: {statuses}, "
                       f"min margin {worst_margin:.3g}, {elapsed:.0f}s")


def test_criterion_07_main_dominance(report):
    def case(gen):
        d = random_degenerate(20, gen)
        c = main_constants(d, restarts=0)
        return (d, lambda t: bound_main_tail(c.V, c.B.upper, t),
                lambda grid: main_tail_curve(c.V, c.B, grid))
    run_dominance(7, case, 7, report)


def test_criterion_08_bennett_dominance(report):
    def case(gen):
        C = centred_zero_diagonal(20, gen)
        A = gen.uniform(-1.0, 1.0, (20, 20))
        nu = bennett_nu(C, A)
        scale = np.linalg.norm(C, 2) ** 2 * np.sum(A ** 2)
        return (Tensor4.from_product(C, A), lambda t: bennett_from_scale(20, nu, scale, t),
                lambda grid: bennett_curve(C, A, grid, nu=nu))
    run_dominance(8, case, 8, report)


# --- 9 --------------------------------------------------------------------------------

def test_criterion_09_psd_hadamard(report):
    gen = np.random.default_rng(109)
    worst = 0.0
    for k in range(100):
        C = centred_matrix(15, gen)
        A = psd_unit_diagonal(15, gen, rank=None if k % 2 else 1 + k % 7)
        sigma = gen.permutation(15)
        lhs = np.linalg.norm(C * A[np.ix_(sigma, sigma)], 2)
        assert np.isclose(operator_norm(hadamard_permuted(C, A, sigma)), lhs, rtol=1e-8)
        worst = max(worst, lhs / np.linalg.norm(C, 2))
    report(9, worst <= 1 + 1e-8, f"100 triples at N=15, max ratio {worst:.6f}")


# --- 10 -------------------------------------------------------------------------------

def test_criterion_10_statistic_fidelity(report):
    gen = np.random.default_rng(110)
    worst = 0.0
    for k in range(100):
        n = 3 + k % 10
        x, y = gen.standard_normal(n), gen.standard_normal(n)
        sx, sy = np.sign(x[:, None] - x[None, :]), np.sign(y[:, None] - y[None, :])
        rx, ry = np.argsort(np.argsort(x)), np.argsort(np.argsort(y))
        classical = {"kendall": float((sx * sy).sum()) / (n * (n - 1)),
                     "spearman": 1 - 6 * float(np.sum((rx - ry) ** 2)) / (n * (n * n - 1)),
                     "pearson": float(np.corrcoef(x, y)[0, 1])}
        for score, want in classical.items():
            worst = max(worst, abs(build_daniels(Sample(x, y), score).value() - want))
    chatterjee = all(math.isclose(chatterjee_pair(n).value(np.arange(n)), 1 - 3 / (n + 1),
                                  abs_tol=1e-12) for n in range(3, 21))
    mww = True
    for _ in range(50):
        m, n = gen.integers(1, 7, size=2)
        pooled = gen.permutation(40)[: m + n] + gen.random(m + n) / 2
        count = sum(a < b for a in pooled[:m] for b in pooled[m:])
        mww &= build_mww(int(m), int(n), pooled).value() == count
    kendall = build_daniels(Sample(gen.standard_normal(5), gen.standard_normal(5)), "kendall")
    null_mean = math.fsum(kendall.values(all_permutations(5))) / 120
    ok = worst <= 1e-10 and chatterjee and mww and abs(null_mean) < 1e-15
    report(10, ok, f"correlation max err {worst:.1e}, chatterjee={chatterjee}, mww={mww}, "
                   f"kendall null mean {null_mean:.1e}")


# --- 11 -------------------------------------------------------------------------------

def test_criterion_11_randomization(report):
    gen = np.random.default_rng(111)
    statuses = {"pass": 0, "inconclusive": 0, "fail": 0}
    within = True
    for k in range(20):
        d = admissible_rectangular(3, 3, gen, product=bool(k % 2))
        rep = check_randomization_mgf(d, 0.01, replicates=1_000_000, seed=1100 + k,
                                      threads=MAX_THREADS)
        statuses[rep.status] += 1
        det = rep.details
        within &= det["lhs"] <= det["rhs_mean"] + 4 * det["rhs_se"]
    report(11, statuses["fail"] == 0 and within, f"20 tensors at N=M=3, lambda=0.01: {statuses}")


# --- 12 -------------------------------------------------------------------------------

def test_criterion_12_determinism(report, tmp_path):
    gen = np.random.default_rng(112)
    src = tmp_path / "tensor.json"
    import json
    src.write_text(json.dumps(random_degenerate(12, gen).to_json()))
    blobs = []
    counts = sorted({1, 4, MAX_THREADS})
    for threads in counts:
        out = tmp_path / f"sim{threads}.json"
        code = main(["simulate", "--input", str(src), "--mode", "mc", "--replicates", "50000",
                     "--seed", "12", "--include-diagonal", "true", "--grid", "0:10:50",
                     "--threads", str(threads), "--output", str(out)])
        assert code == 0
        blobs.append(out.read_bytes() + out.with_suffix(".csv").read_bytes())
    ok = all(b == blobs[0] for b in blobs)
    report(12, ok, f"threads {counts}: byte-identical={ok}")
