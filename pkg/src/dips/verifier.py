"""Checks of the algebraic identities and of bound dominance.

Every check returns a :class:`VerificationReport`.  Exact checks enumerate
permutations; Monte Carlo checks carry a confidence half-width and may come
back ``inconclusive`` when the band straddles the bound.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .perm_engine import (BLOCK_SIZE, RngSeed, all_permutations, evaluate_dips_batch,
                          exact_expectation, monte_carlo)
from .statistics import (ScorePair, Sample, build_daniels, build_graph_gamma, build_mww,
                         chatterjee_pair)
from .tail_bounds import KParameter, TailCurve, bound_example
from .bound_constants import graph_constants
from .tensor_core import IndexSplit, Tensor4, hoeffding_decompose, is_degenerate, tilde_d_restrict

EXACT_TAIL_CAP = 8
DKW_DELTA = 1e-3
IDENTITY_RTOL = 1e-10
DECOUPLING_RTOL = 1e-9


@dataclass
class VerificationReport:
    name: str
    status: str
    statistic: str
    margin: float
    size: int
    seed: int | None = None
    details: dict = field(default_factory=dict)
    witness: dict | None = None

    def __post_init__(self):
        if self.status not in ("pass", "fail", "inconclusive"):
            raise ValueError(f"bad status {self.status!r}")

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _perm_out(p) -> list[int]:
    """Permutations are reported 1-based."""
    return [int(v) + 1 for v in p]


# ---------------------------------------------------------------------------
# empirical survival

@dataclass
class TailEstimate:
    grid: np.ndarray
    survival: np.ndarray
    half_width: float
    mean: float
    mode: str
    size: int
    seed: int | None = None

    @property
    def upper(self) -> np.ndarray:
        return np.minimum(1.0, self.survival + self.half_width)

    def to_json(self) -> dict:
        return {"mode": self.mode, "size": self.size, "seed": self.seed, "mean": self.mean,
                "half_width": self.half_width, "grid": self.grid.tolist(),
                "survival": self.survival.tolist()}


def dkw_half_width(replicates: int, delta: float = DKW_DELTA) -> float:
    return math.sqrt(math.log(2.0 / delta) / (2.0 * replicates))


def null_values(batch: Callable[[np.ndarray], np.ndarray], n: int, mode: str,
                replicates: int = 100_000, seed: int | None = None, threads: int = 1) -> np.ndarray:
    """Statistic values over all permutations (``exact``) or uniform draws (``mc``)."""
    if mode == "exact":
        if n > EXACT_TAIL_CAP:
            raise ValueError(f"exact mode needs n <= {EXACT_TAIL_CAP}, got {n}")
        return batch(all_permutations(n))
    if mode == "mc":
        if seed is None:
            raise ValueError("mc mode needs a seed")
        return monte_carlo(batch, n, replicates, seed, threads=threads)
    raise ValueError(f"unknown mode {mode!r}")


def survival_from_values(values: np.ndarray, mean: float, grid) -> np.ndarray:
    """``P(value - mean >= t)`` at each grid point, with round-off snapped to zero."""
    grid = np.asarray(grid, dtype=float)
    dev = np.asarray(values, dtype=float) - mean
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)), abs(mean))
    dev[np.abs(dev) <= 1e-11 * scale] = 0.0
    dev.sort()
    return (len(dev) - np.searchsorted(dev, grid, side="left")) / len(dev)


def empirical_tail(t: Tensor4, mode: str, include_diagonal: bool, grid,
                   replicates: int = 100_000, seed: int | None = None,
                   threads: int = 1) -> TailEstimate:
    """Survival function of ``Q - E[Q]`` for the DIPS of ``t``."""
    batch = lambda perms: evaluate_dips_batch(t, perms, include_diagonal)  # noqa: E731
    values = null_values(batch, t.n, mode, replicates, seed, threads)
    return _estimate(values, exact_expectation(t, include_diagonal), grid, mode, seed)


def _estimate(values, mean, grid, mode, seed) -> TailEstimate:
    grid = np.asarray(grid, dtype=float)
    hw = 0.0 if mode == "exact" else dkw_half_width(len(values))
    return TailEstimate(grid=grid, survival=survival_from_values(values, mean, grid),
                        half_width=hw, mean=float(mean), mode=mode, size=len(values),
                        seed=None if mode == "exact" else seed)


def check_dominance(curve: TailCurve, tail: TailEstimate, name: str | None = None) -> VerificationReport:
    """Pass iff the survival estimate (plus its band) never exceeds the bound."""
    if curve.grid.shape != tail.grid.shape or not np.allclose(curve.grid, tail.grid, rtol=0, atol=0):
        raise ValueError("bound and survival grids differ")
    bound = curve.bound
    upper = tail.survival + tail.half_width
    lower = tail.survival - tail.half_width
    # exact survival is a ratio of integers; leave room only for bound round-off
    slack = 1e-12
    margin = float(np.min(bound - upper))
    bad = np.flatnonzero(lower > bound + slack)
    grey = np.flatnonzero(upper > bound + slack)
    if bad.size:
        status = "fail"
    elif grey.size:
        status = "inconclusive"
    else:
        status = "pass"
    witness = None
    worst = bad if bad.size else grey
    if worst.size:
        k = int(worst[np.argmax(upper[worst] - bound[worst])])
        witness = {"t": float(curve.grid[k]), "survival": float(tail.survival[k]),
                   "half_width": tail.half_width, "bound": float(bound[k])}
    return VerificationReport(
        name=name or f"dominance:{curve.label}", status=status,
        statistic="survival + half-width - bound", margin=margin, size=tail.size,
        seed=tail.seed, details={"mode": tail.mode, "points": len(curve.grid),
                                 "violations": int(bad.size), "band_crossings": int(grey.size)},
        witness=witness)


# ---------------------------------------------------------------------------
# identities

def check_decomposition(t: Tensor4, decomposition=None) -> VerificationReport:
    """Reconstruct the DIPS at every permutation from its decomposition."""
    if t.n > EXACT_TAIL_CAP:
        raise ValueError(f"enumeration needs n <= {EXACT_TAIL_CAP}")
    dec = decomposition or hoeffding_decompose(t)
    n = t.n
    perms = all_permutations(n)
    direct = evaluate_dips_batch(t, perms, include_diagonal=True)
    linear = dec.a_w[np.arange(n)[None, :], perms].sum(axis=1)
    rebuilt = n * linear + evaluate_dips_batch(dec.d_w, perms, include_diagonal=True) + dec.constant
    scale = max(1.0, float(np.max(np.abs(direct))))
    err = np.abs(direct - rebuilt)
    worst = int(np.argmax(err))
    degenerate = is_degenerate(dec.d_w)
    a_sum = float(abs(dec.a_w.sum()))
    a_ok = a_sum <= 1e-9 * max(1.0, float(np.max(np.abs(dec.a_w)))) * n
    identity_ok = err[worst] <= IDENTITY_RTOL * scale
    status = "pass" if identity_ok and degenerate and a_ok else "fail"
    witness = None
    if not identity_ok:
        witness = {"perm": _perm_out(perms[worst]), "direct": float(direct[worst]),
                   "reconstructed": float(rebuilt[worst])}
    return VerificationReport(
        name="decomposition", status=status, statistic="max relative reconstruction error",
        margin=float(IDENTITY_RTOL - err[worst] / scale), size=len(perms),
        details={"n": n, "d_degenerate": degenerate, "sum_a_w": a_sum}, witness=witness)


@dataclass(frozen=True)
class DecouplingConstants:
    N: int
    N1: int
    alpha: Fraction
    beta: Fraction

    @classmethod
    def for_size(cls, N: int) -> "DecouplingConstants":
        if N < 4:
            raise ValueError("the decoupling constants need N >= 4")
        N1 = -(-N // 2)
        poly = N * N - 3 * N + 1
        alpha = Fraction(N * (N - 1) * (N - 2) * (N - 3), (N1 - 1) * (N - N1 - 1) * poly)
        return cls(N, N1, alpha, Fraction(1, poly))

    @property
    def alpha_ceiling(self) -> Fraction:
        return 4 + Fraction(8, self.N - 2)

    def within_ceiling(self) -> bool:
        return self.alpha <= self.alpha_ceiling


def decoupling_terms(d: Tensor4, p) -> dict:
    """Both sides of the decoupling identity at permutation ``p``, and both forms of the remainder."""
    n = d.n
    p = np.asarray(p, dtype=np.int64)
    dc = DecouplingConstants.for_size(n)
    N, N1 = n, dc.N1
    D = d.to_dense()
    idx = np.arange(n)

    acc = 0.0
    count = 0
    for I in itertools.combinations(range(n), N1):
        I = np.array(I)
        J = np.sort(p[I])
        split = IndexSplit(n, tuple(I.tolist()), tuple(J.tolist()))
        Ic = np.array(split.Ic)
        Jc = np.array(split.Jc)
        block = tilde_d_restrict(d, split).dense
        pos_J = np.searchsorted(J, p[I])
        pos_Jc = np.searchsorted(Jc, p[Ic])
        acc += float(block[np.arange(len(I))[:, None], np.arange(len(Ic))[None, :],
                           pos_J[:, None], pos_Jc[None, :]].sum())
        count += 1
    restricted_mean = acc / count

    b = (N1 - 1) * (N - N1 - 1) / (N * (N - 1) * (N - 2) * (N - 3))
    diag_coef = 2 * (N1 - 1) * (N - N1 - 1) / (N * (N - 2) * (N - 3))
    poly = N * N - 3 * N + 1
    S = float(np.einsum("iikk->", D))
    diag = float(D[idx, idx, p, p].sum())
    off_mask = idx[:, None] != idx[None, :]
    straight = D[idx[:, None], idx[None, :], p[:, None], p[None, :]]
    swapped = D[idx[:, None], idx[None, :], p[None, :], p[:, None]]
    off = float(straight[off_mask].sum())
    swap = float(swapped[off_mask].sum())
    mean_off = exact_expectation(d, include_diagonal=False)

    remainder_raw = diag_coef * diag - b * swap - b * S - b * poly * mean_off
    remainder_centred = -b * (swap - S / (N * (N - 1))) + diag_coef * (diag - S / N)
    alpha = float(dc.alpha)
    return {"lhs": alpha * (restricted_mean + remainder_raw), "rhs": off - mean_off,
            "remainder_raw": remainder_raw, "remainder_centred": remainder_centred,
            "restricted_mean": restricted_mean, "alpha": alpha, "subsets": count}


def check_decoupling_identity(d: Tensor4, p) -> VerificationReport:
    """Average of the block-centred sum over all index splits, against the centred DIPS."""
    if not 4 <= d.n <= 8:
        raise ValueError("decoupling check needs 4 <= n <= 8")
    if not is_degenerate(d):
        raise ValueError("decoupling check needs a degenerate tensor")
    terms = decoupling_terms(d, p)
    scale = max(abs(terms["rhs"]), abs(terms["lhs"]), d.max_abs(), 1e-300)
    err = abs(terms["lhs"] - terms["rhs"]) / scale
    rem_err = abs(terms["remainder_raw"] - terms["remainder_centred"]) / scale
    ok = err <= DECOUPLING_RTOL and rem_err <= DECOUPLING_RTOL
    return VerificationReport(
        name="decoupling-identity", status="pass" if ok else "fail",
        statistic="relative gap between the two sides", margin=DECOUPLING_RTOL - max(err, rem_err),
        size=terms["subsets"], details={k: v for k, v in terms.items() if k != "subsets"} | {
            "remainder_gap": rem_err},
        witness=None if ok else {"perm": _perm_out(p)})


# ---------------------------------------------------------------------------
# randomisation MGF comparison

RANDOMIZATION_FACTOR = 12
MAX_PAIRS_ENUMERATED = 720


def _is_admissible(d: np.ndarray, tol: float = 1e-9) -> bool:
    scale = max(1.0, float(np.max(np.abs(d))))
    return (np.max(np.abs(d.mean(axis=(0, 2)))) <= tol * scale
            and np.max(np.abs(d.mean(axis=(1, 3)))) <= tol * scale)


def _pair_matrices(D: np.ndarray, perms_n: np.ndarray, perms_m: np.ndarray) -> np.ndarray:
    """``[d(i, j, pi(i), tau(j))]_{ij}`` for every pair; shape ``(P, n, m)``."""
    n, m = D.shape[0], D.shape[1]
    ii, jj = np.arange(n)[:, None], np.arange(m)[None, :]
    P = np.asarray(perms_n)[:, None, :, None]
    T = np.asarray(perms_m)[None, :, None, :]
    mats = D[ii, jj, P, T]
    return mats.reshape(-1, n, m)


def check_randomization_mgf(d: Tensor4, lam: float, replicates: int = 1_000_000,
                            seed: int = 0, threads: int = 1) -> VerificationReport:
    """Compare the MGF of the decoupled sum with that of its Gaussian-chaos version."""
    D = d.to_dense()
    n, m = d.n, d.m
    if n > 5 or m > 5:
        raise ValueError("randomisation check needs n, m <= 5")
    if not _is_admissible(D):
        raise ValueError("tensor must have vanishing (i, k) and (j, l) averages")
    if abs(lam) * float(np.max(np.abs(D), initial=0.0)) * n * m > 0.1 + 1e-12:
        raise ValueError("lambda too large: need |lambda| max|d| n m <= 0.1")
    mats = _pair_matrices(D, all_permutations(n), all_permutations(m))
    lhs = float(np.mean(np.exp(lam * mats.sum(axis=(1, 2)))))
    c = RANDOMIZATION_FACTOR * lam

    # closed form for Gaussian bilinear forms: E exp(c g' M h) = det(I - c^2 M M')^(-1/2)
    gram = np.einsum("pij,pkj->pik", mats, mats)
    eig_max = float(np.max(np.linalg.eigvalsh(gram))) if mats.size else 0.0
    closed = None
    if c * c * eig_max < 1:
        dets = np.linalg.det(np.eye(n)[None] - c * c * gram)
        closed = float(np.mean(dets ** -0.5))

    enumerate_pairs = len(mats) <= MAX_PAIRS_ENUMERATED
    n_blocks = -(-replicates // BLOCK_SIZE)
    sums = np.zeros(n_blocks)
    sq = np.zeros(n_blocks)

    def run(b: int) -> None:
        size = min(BLOCK_SIZE, replicates - b * BLOCK_SIZE)
        gen = RngSeed(seed, b).generator()
        g = gen.standard_normal((size, n))
        h = gen.standard_normal((size, m))
        if enumerate_pairs:
            vals = np.exp(c * np.einsum("ri,pij,rj->rp", g, mats, h)).mean(axis=1)
        else:
            pick = gen.integers(0, len(mats), size=size)
            vals = np.exp(c * np.einsum("ri,rij,rj->r", g, mats[pick], h))
        sums[b] = vals.sum()
        sq[b] = (vals ** 2).sum()

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n_blocks)))
    else:
        for b in range(n_blocks):
            run(b)
    mean = float(sums.sum() / replicates)
    var = max(0.0, float(sq.sum() / replicates) - mean * mean) * replicates / max(1, replicates - 1)
    se = math.sqrt(var / replicates)
    gap = mean - lhs
    if lhs > mean + 4 * se:
        status = "fail"
    elif se > 0.1 * abs(gap):
        status = "inconclusive"
    else:
        status = "pass"
    if lam == 0 or not np.any(D):
        status = "pass" if abs(lhs - 1) < 1e-15 and abs(mean - 1) < 1e-15 else status
    return VerificationReport(
        name="randomization-mgf", status=status, statistic="rhs_mean + 4 se - lhs",
        margin=mean + 4 * se - lhs, size=replicates, seed=seed,
        details={"lambda": lam, "lhs": lhs, "rhs_mean": mean, "rhs_se": se,
                 "rhs_closed_form": closed, "pairs": len(mats), "pairs_enumerated": enumerate_pairs},
        witness=None if status != "fail" else {"lhs": lhs, "rhs_mean": mean})


# ---------------------------------------------------------------------------
# example statistics with a user-supplied K

def statistic_pair(kind: str, params: dict) -> ScorePair:
    if kind == "mww":
        return build_mww(int(params["m"]), int(params["n"]), params["pooled"])
    if kind in ("pearson", "kendall", "spearman"):
        return build_daniels(Sample(params["x"], params["y"]), kind)
    if kind == "chatterjee":
        return chatterjee_pair(int(params["N"]))
    if kind == "graph":
        return build_graph_gamma(params["Ex"], params["Ey"], int(params["n"]))
    raise ValueError(f"unknown statistic {kind!r}")


def example_bound_params(kind: str, params: dict, pair: ScorePair) -> dict:
    n = pair.n
    if kind == "mww":
        return {"m": int(params["m"]), "n": int(params["n"])}
    if kind == "pearson":
        return {"x": params["x"], "y": params["y"]}
    if kind in ("kendall", "spearman", "chatterjee"):
        return {"N": n}
    consts = graph_constants(params["Ex"], params["Ey"], n).printed
    return {"V_a": consts.V_a, "B_a": consts.B_a, "V_d": consts.V_d, "B_d": consts.B_d}


def check_statistic_bounds(kind: str, params: dict, K: KParameter | None, mode: str, grid,
                           replicates: int = 100_000, seed: int | None = None,
                           threads: int = 1) -> VerificationReport:
    """Dominance of an example bound; only meaningful relative to the supplied ``K``."""
    if K is None:
        raise ValueError("a value of K is required; none is known for these bounds")
    pair = statistic_pair(kind, params)
    values = null_values(pair.values, pair.n, mode, replicates, seed, threads)
    tail = _estimate(values, pair.null_mean(), grid, mode, seed)
    bparams = example_bound_params(kind, params, pair)
    raw = np.array([bound_example(kind, bparams, K, float(t), raw=True) for t in tail.grid])
    curve = TailCurve(label=f"{kind}-K", grid=tail.grid, bound=np.minimum(raw, 1.0), raw=raw,
                      constants={"K": K.K})
    report = check_dominance(curve, tail, name=f"statistic-bound:{kind}")
    report.details["conditional_on"] = f"supplied K={K.K}"
    return report
