"""Score-matrix representations of classical permutation statistics.

Each builder returns a :class:`ScorePair` ``(C, A)`` such that the statistic
under relabelling ``pi`` is ``offset + scale * sum_ij C[i, j] A[pi(i), pi(j)]``.
At the identity this is the observed statistic.

Ties are rejected for rank-based statistics: every construction here assumes
continuous data.  Graph edges are 1-based in files and 0-based in memory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bound_constants import adjacency, hat_matrix
from .perm_engine import as_permutation, evaluate_dips_batch, exact_expectation
from .tensor_core import Tensor4

KINDS = ("mww", "pearson", "kendall", "spearman", "chatterjee", "graph", "regression", "custom")


@dataclass(frozen=True, eq=False)
class ScorePair:
    C: np.ndarray
    A: np.ndarray
    kind: str
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.C.shape != self.A.shape or self.C.ndim != 2 or self.C.shape[0] != self.C.shape[1]:
            raise ValueError(f"C and A must be square of equal shape, got {self.C.shape}, {self.A.shape}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.C.shape[0]

    def tensor(self) -> Tensor4:
        return Tensor4.from_product(self.C, self.A)

    def raw(self, perms) -> np.ndarray:
        """``sum C[i, j] A[pi(i), pi(j)]`` for each row of ``perms`` (diagonal included)."""
        perms = np.atleast_2d(np.asarray(perms, dtype=np.int64))
        return evaluate_dips_batch(self.tensor(), perms, include_diagonal=True)

    def value(self, perm=None) -> float:
        perm = np.arange(self.n) if perm is None else as_permutation(perm)
        return float(self.offset + self.scale * self.raw(perm[None])[0])

    def values(self, perms) -> np.ndarray:
        return self.offset + self.scale * self.raw(perms)

    def null_mean(self) -> float:
        return self.offset + self.scale * exact_expectation(self.tensor(), include_diagonal=True)


@dataclass(frozen=True, eq=False)
class Sample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.x)


def _reject_ties(values: np.ndarray, what: str) -> None:
    if len(np.unique(values)) != len(values):
        raise ValueError(f"ties in {what} are not supported")


def ranks(values) -> np.ndarray:
    """1-based ranks of distinct values."""
    values = np.asarray(values, dtype=float)
    _reject_ties(values, "ranked data")
    out = np.empty(len(values))
    out[np.argsort(values, kind="stable")] = np.arange(1, len(values) + 1)
    return out


# ---------------------------------------------------------------------------

def build_mww(m: int, n: int, pooled) -> ScorePair:
    """Mann-Whitney count of pairs ``X_i < Y_j``; ``pooled`` is ``X`` then ``Y``."""
    pooled = np.asarray(pooled, dtype=float)
    if m < 1 or n < 1 or pooled.shape != (m + n,):
        raise ValueError(f"pooled sample must have m + n = {m + n} entries")
    _reject_ties(pooled, "the pooled sample")
    N = m + n
    idx = np.arange(N)
    C = ((idx[:, None] < m) & (idx[None, :] >= m)).astype(float)
    A = (pooled[:, None] < pooled[None, :]).astype(float)
    return ScorePair(C, A, "mww")


def mww_direct(x, y) -> int:
    return sum(1 for xi in x for yj in y if xi < yj)


def _daniels_scores(v: np.ndarray, score: str) -> np.ndarray:
    if score == "pearson":
        return v[:, None] - v[None, :]
    if score == "kendall":
        _reject_ties(v, "kendall data")
        return np.sign(v[:, None] - v[None, :])
    if score == "spearman":
        r = ranks(v)
        return r[:, None] - r[None, :]
    raise ValueError(f"unknown Daniels score {score!r}")


def build_daniels(sample: Sample, score: str) -> ScorePair:
    """Generalised correlation ``sum c_ij a_ij / sqrt(sum c^2 sum a^2)``."""
    if len(sample) < 2:
        raise ValueError("need at least two observations")
    C = _daniels_scores(sample.x, score)
    A = _daniels_scores(sample.y, score)
    denom = math.sqrt(float(np.sum(C ** 2)) * float(np.sum(A ** 2)))
    if denom == 0:
        raise ValueError("constant sample: the correlation denominator is zero")
    return ScorePair(C, A, score, scale=1.0 / denom)


def pearson_direct(x, y) -> float:
    xc, yc = np.asarray(x) - np.mean(x), np.asarray(y) - np.mean(y)
    return float(xc @ yc / math.sqrt(float(xc @ xc) * float(yc @ yc)))


def kendall_direct(x, y) -> float:
    n = len(x)
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            s += np.sign(x[i] - x[j]) * np.sign(y[i] - y[j])
    return float(2 * s / (n * (n - 1)))


def spearman_direct(x, y) -> float:
    n = len(x)
    d = ranks(x) - ranks(y)
    return float(1 - 6 * np.sum(d ** 2) / (n * (n * n - 1)))


# ---------------------------------------------------------------------------

def chatterjee_pair(n: int) -> ScorePair:
    if n < 2:
        raise ValueError("xi needs n >= 2")
    idx = np.arange(n)
    C = (idx[:, None] - idx[None, :] == 1).astype(float)
    A = np.abs(idx[:, None] - idx[None, :]).astype(float)
    return ScorePair(C, A, "chatterjee", scale=-3.0 / (n * n - 1), offset=1.0)


def chatterjee_xi(p) -> float:
    """``1 - 3/(n^2 - 1) * sum |p[i+1] - p[i]|``, cross-checked against the DIPS form."""
    p = as_permutation(p)
    n = len(p)
    if n < 2:
        raise ValueError("xi needs n >= 2")
    direct = 1.0 - 3.0 / (n * n - 1) * float(np.sum(np.abs(np.diff(p))))
    via_dips = chatterjee_pair(n).value(p)
    if abs(direct - via_dips) > 1e-12 * max(1.0, abs(direct)):
        raise AssertionError(f"xi forms disagree: {direct} vs {via_dips}")
    return direct


def chatterjee_rank_permutation(sample: Sample) -> np.ndarray:
    """Ranks of ``y`` (0-based) listed in increasing order of ``x``."""
    _reject_ties(sample.x, "x")
    r = ranks(sample.y).astype(np.int64) - 1
    return r[np.argsort(sample.x, kind="stable")]


# ---------------------------------------------------------------------------

def build_graph_gamma(Ex, Ey, n: int) -> ScorePair:
    """Common ordered edges of two graphs on ``range(n)`` (0-based edges)."""
    return ScorePair(adjacency(Ex, n), adjacency(Ey, n), "graph")


def regression_bias_statistic(X, e, treated_count: int) -> tuple[Tensor4, float]:
    """Sum of ``q_ij`` over a uniformly random treated set of the given size.

    Returns the product tensor for ``sum c_ij q_{pi(i) pi(j)}`` with
    ``c = 1(i, j < treated_count)``, and its exact mean.
    """
    H = hat_matrix(X)
    e = np.asarray(e, dtype=float)
    n = H.shape[0]
    if e.shape != (n,):
        raise ValueError("e must have one entry per row of X")
    if not 1 <= treated_count <= n:
        raise ValueError(f"treated_count must lie in [1, {n}], got {treated_count}")
    idx = np.arange(n)
    C = ((idx[:, None] < treated_count) & (idx[None, :] < treated_count)).astype(float)
    t = Tensor4.from_product(C, H * e[None, :])
    return t, exact_expectation(t, include_diagonal=True)


# ---------------------------------------------------------------------------
# file formats

def load_sample_csv(path) -> Sample:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "y"]:
            raise ValueError(f"{path}: expected header 'x,y'")
        rows = [(float(r["x"]), float(r["y"])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    x, y = zip(*rows)
    return Sample(np.array(x), np.array(y))


def parse_graph(obj: dict) -> tuple[int, list[tuple[int, int]]]:
    """``{"n": int, "edges": [[u, v], ...]}`` with 1-based vertices -> 0-based edges."""
    try:
        n = int(obj["n"])
        edges = [(int(u) - 1, int(v) - 1) for u, v in obj["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed graph JSON: {exc}") from exc
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u + 1}, {v + 1}) is outside 1..{n}")
    return n, edges


def load_graph_json(path) -> tuple[int, list[tuple[int, int]]]:
    return parse_graph(json.loads(Path(path).read_text()))
