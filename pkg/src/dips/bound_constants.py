"""Norms and the constants that enter the tail bounds.

The permutation-maximised operator norm ``B`` is reported as an interval:
exact (by enumeration) for small ``n``, otherwise a local-search lower end and
a certified Frobenius upper end.  Bounds downstream always consume the upper
end.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .perm_engine import RngSeed, all_permutations
from .tensor_core import Tensor4, double_center, hoeffding_decompose

EXACT_CAP_B = 7
B_RESTARTS = 100
KRYLOV_SIZE = 20
EXACT_CAP_NU = 5


class NonConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    method: str = "exact"

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @classmethod
    def point(cls, value: float, method: str = "exact") -> "Interval":
        return cls(value, value, method)

    def contains(self, x: float, rtol: float = 0.0) -> bool:
        slack = rtol * max(abs(self.lower), abs(self.upper), abs(x))
        return self.lower - slack <= x <= self.upper + slack


@dataclass(frozen=True)
class BoundConstants:
    frob: float
    opnorm: float
    B: Interval
    V: float
    nu: float | None = None
    methods: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CorollaryConstants:
    V_a: float
    B_a: float
    V_d: float
    B_d: Interval

    def to_json(self) -> dict:
        out = asdict(self)
        out["methods"] = {"V_a": "closed-form", "B_a": "closed-form",
                          "V_d": "closed-form", "B_d": self.B_d.method}
        return out


@dataclass(frozen=True)
class PowerResult:
    value: np.ndarray | float
    iterations: int
    converged: np.ndarray | bool


# ---------------------------------------------------------------------------
# operator norm

def _start_vectors(q: int) -> np.ndarray:
    # all-ones start, perturbed so it is never orthogonal to the top singular
    # vector (doubly centred matrices annihilate the ones vector)
    v = np.ones(q) / math.sqrt(q)
    r = np.random.default_rng(0x5EED).standard_normal(q)
    v = v + 0.5 * r / np.linalg.norm(r)
    return v / np.linalg.norm(v)


def power_iteration(M, tol: float = 1e-10, max_iter: int = 10_000) -> PowerResult:
    """Largest singular value of ``M`` (or of each matrix in a stack).

    Iterates on ``M^T M``.  The Rayleigh quotient increases monotonically to
    the top eigenvalue; iteration stops once the eigen-residual, or the
    extrapolated remaining change, drops below ``tol`` relative.  A final
    Rayleigh-Ritz step on a small Krylov space handles nearly tied top values,
    where the extrapolation is unreliable.  Convergence is reported only when
    an eigen-residual is below ``tol``.
    """
    M = np.asarray(M, dtype=float)
    single = M.ndim == 2
    if single:
        M = M[None]
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    G = np.swapaxes(M, -1, -2) @ M
    batch, q = G.shape[0], G.shape[-1]
    v = np.broadcast_to(_start_vectors(q), (batch, q)).copy()
    theta = np.zeros(batch)
    prev_delta = np.full(batch, np.inf)
    done = np.zeros(batch, dtype=bool)
    certified = np.zeros(batch, dtype=bool)
    scale = np.abs(G).max(axis=(1, 2))
    restarted = np.zeros(batch, dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        w = np.einsum("bij,bj->bi", G, v)
        wnorm = np.linalg.norm(w, axis=1)
        # start vector in the null space of a nonzero matrix: one random restart
        stalled = (~done) & (~restarted) & (wnorm <= 1e-14 * scale) & (scale > 0)
        if stalled.any():
            r = np.random.default_rng(it).standard_normal((int(stalled.sum()), q))
            v[stalled] = r / np.linalg.norm(r, axis=1, keepdims=True)
            restarted |= stalled
            w = np.einsum("bij,bj->bi", G, v)
            wnorm = np.linalg.norm(w, axis=1)
        new_theta = np.einsum("bi,bi->b", v, w)
        resid = np.linalg.norm(w - new_theta[:, None] * v, axis=1)
        delta = np.abs(new_theta - theta)
        ratio = np.where(prev_delta > 0, delta / np.where(prev_delta > 0, prev_delta, 1.0), 0.0)
        remaining = np.where(ratio < 1, delta * ratio / np.maximum(1 - ratio, 1e-300), np.inf)
        small_resid = resid <= tol * new_theta
        newly = (~done) & (
            small_resid
            | ((it > 2) & (delta <= tol * new_theta) & (remaining <= tol * new_theta)))
        certified |= newly & small_resid
        theta = np.where(done, theta, np.maximum(theta, new_theta))
        done |= newly
        if done.all():
            break
        prev_delta = np.where(done, prev_delta, delta)
        upd = (~done) & (wnorm > 0)
        v[upd] = w[upd] / wnorm[upd, None]
    for b in np.flatnonzero(~certified):
        ritz, ok = _krylov_refine(G[b], v[b], tol)
        theta[b] = max(theta[b], ritz)
        certified[b] = ok
    sigma = np.sqrt(np.maximum(theta, 0.0))
    if single:
        return PowerResult(float(sigma[0]), it, bool(certified[0]))
    return PowerResult(sigma, it, certified)


def _krylov_refine(G: np.ndarray, v: np.ndarray, tol: float, size: int = KRYLOV_SIZE) -> tuple[float, bool]:
    """Rayleigh-Ritz on the Krylov space of ``v``; resolves nearly tied top eigenvalues.

    The Ritz value is a Rayleigh quotient, so it never exceeds the true maximum.
    """
    q = G.shape[0]
    basis = np.zeros((q, min(size, q)))
    x = v / np.linalg.norm(v)
    k = 0
    for k in range(basis.shape[1]):
        basis[:, k] = x
        x = G @ x
        # two Gram-Schmidt passes keep the basis orthonormal
        for _ in range(2):
            x = x - basis[:, :k + 1] @ (basis[:, :k + 1].T @ x)
        nx = np.linalg.norm(x)
        if nx <= 1e-14 * max(np.abs(G).max(), 1e-300):
            break
        x = x / nx
    Q = basis[:, :k + 1]
    vals, vecs = np.linalg.eigh(Q.T @ G @ Q)
    y = Q @ vecs[:, -1]
    theta = float(vals[-1])
    resid = float(np.linalg.norm(G @ y - theta * y))
    return theta, resid <= tol * max(theta, 1e-300)


def operator_norm(M, tol: float = 1e-10, max_iter: int = 10_000):
    """Spectral norm via power iteration; warns if it fails to converge."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    res = power_iteration(M, tol=tol, max_iter=max_iter)
    if not np.all(res.converged):
        warnings.warn(f"power iteration did not converge in {res.iterations} iterations; "
                      "returning the best iterate", NonConvergenceWarning, stacklevel=2)
    return res.value


def frobenius_norm(M) -> float:
    return float(np.sqrt(np.sum(np.square(M))))


# ---------------------------------------------------------------------------
# B: max over sigma of ||[d(i, j, sigma(i), sigma(j))]||_op

def permuted_matrices(t: Tensor4, perms: np.ndarray) -> np.ndarray:
    """Stack of matrices ``[w(i, j, s(i), s(j))]_{ij}``, one per row of ``perms``."""
    perms = np.asarray(perms, dtype=np.int64)
    if perms.ndim == 1:
        perms = perms[None]
    n = t.n
    if t.is_product:
        return t.c[None] * t.a[perms[:, :, None], perms[:, None, :]]
    idx = np.arange(n)
    ij = (idx[:, None] * n + idx[None, :]) * n * n
    return t.dense.reshape(-1)[ij[None] + perms[:, :, None] * n + perms[:, None, :]]


def _norms_of(t: Tensor4, perms: np.ndarray, chunk: int = 2048) -> np.ndarray:
    # batched LAPACK SVD: many small matrices, where power iteration is ~20x slower
    out = np.empty(len(perms))
    for lo in range(0, len(perms), chunk):
        mats = permuted_matrices(t, perms[lo:lo + chunk])
        out[lo:lo + chunk] = np.linalg.svd(mats, compute_uv=False)[:, 0]
    return out


def _transpositions(n: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64)


def local_search_B(t: Tensor4, start: np.ndarray, max_steps: int = 10_000) -> tuple[float, np.ndarray]:
    """Steepest ascent over transpositions from ``start``."""
    sigma = np.array(start, dtype=np.int64)
    best = float(_norms_of(t, sigma[None])[0])
    swaps = _transpositions(t.n)
    rows = np.arange(len(swaps))
    for _ in range(max_steps):
        cand = np.broadcast_to(sigma, (len(swaps), t.n)).copy()
        cand[rows, swaps[:, 0]] = sigma[swaps[:, 1]]
        cand[rows, swaps[:, 1]] = sigma[swaps[:, 0]]
        vals = _norms_of(t, cand)
        k = int(np.argmax(vals))
        if vals[k] <= best * (1 + 1e-12):
            break
        best, sigma = float(vals[k]), cand[k]
    return best, sigma


def entrywise_bound_matrix(t: Tensor4) -> np.ndarray:
    """``M[i, j] = max_{k, l} |w(i, j, k, l)|``."""
    if t.is_product:
        return np.abs(t.c) * np.max(np.abs(t.a))
    return np.abs(t.dense).max(axis=(2, 3))


def permuted_opnorm_B(t: Tensor4, exact_cap: int = EXACT_CAP_B, restarts: int = B_RESTARTS,
                      seed: int = 0, threads: int = 1) -> Interval:
    """Interval for ``max_sigma ||[w(i, j, sigma(i), sigma(j))]||_op``.

    Exhaustive when ``n <= exact_cap``.  Otherwise the lower end is the best of
    ``restarts`` seeded local searches (restart ``r`` uses stream ``r``) and
    the upper end is ``||M||_F`` for the entrywise bound matrix ``M``.
    """
    if not t.is_square:
        raise ValueError("B is defined for square tensors")
    n = t.n
    if n <= exact_cap:
        value = float(_norms_of(t, all_permutations(n)).max())
        return Interval.point(value, "exact")
    upper = frobenius_norm(entrywise_bound_matrix(t))

    def run(r: int) -> float:
        if r == 0:
            start = np.arange(n)
        else:
            start = RngSeed(seed, r).generator().permutation(n)
        return local_search_B(t, start)[0]

    if restarts <= 0:
        lower = float(_norms_of(t, np.arange(n)[None])[0])
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            lower = max(pool.map(run, range(restarts)))
    else:
        lower = max(run(r) for r in range(restarts))
    return Interval(lower, max(upper, lower), "heuristic-interval")


# ---------------------------------------------------------------------------
# V and the corollary constants

def diagonal_slice(t: Tensor4) -> np.ndarray:
    """``s[i, k] = w(i, i, k, k)``."""
    if t.is_product:
        return np.outer(np.diag(t.c), np.diag(t.a))
    return np.einsum("iikk->ik", t.dense)


def variance_V(d: Tensor4) -> float:
    """Variance proxy: mean squared double-centred diagonal slice plus ``sum d^2 / n^2``."""
    if not d.is_square:
        raise ValueError("V is defined for square tensors")
    n = d.n
    xi = double_center(diagonal_slice(d))
    if d.is_product:
        sum_sq = float(np.sum(d.c ** 2) * np.sum(d.a ** 2))
    else:
        sum_sq = float(np.sum(d.dense ** 2))
    return float(np.sum(xi ** 2) / n + sum_sq / n ** 2)


def corollary_constants(w: Tensor4, exact_cap: int = EXACT_CAP_B, restarts: int = B_RESTARTS,
                        seed: int = 0) -> CorollaryConstants:
    dec = hoeffding_decompose(w)
    n = w.n
    return CorollaryConstants(
        V_a=float(n * np.sum(dec.a_w ** 2)),
        B_a=float(n * np.max(np.abs(dec.a_w))),
        V_d=variance_V(dec.d_w),
        B_d=permuted_opnorm_B(dec.d_w, exact_cap=exact_cap, restarts=restarts, seed=seed),
    )


def main_constants(d: Tensor4, exact_cap: int = EXACT_CAP_B, restarts: int = B_RESTARTS,
                   seed: int = 0) -> BoundConstants:
    """``B`` and ``V`` for a degenerate tensor, plus norms of the identity matrix slice."""
    mat = permuted_matrices(d, np.arange(d.n))[0]
    B = permuted_opnorm_B(d, exact_cap=exact_cap, restarts=restarts, seed=seed)
    return BoundConstants(frob=frobenius_norm(mat), opnorm=float(operator_norm(mat)), B=B,
                          V=variance_V(d),
                          methods={"frob": "closed-form", "opnorm": "exact", "B": B.method,
                                   "V": "closed-form"})


# ---------------------------------------------------------------------------
# Bennett parameter nu

def _block_selections(rows: np.ndarray, m: int) -> np.ndarray:
    """For each row, the candidate multisets: top ``p`` plus bottom ``m - p`` entries, sorted.

    Shape ``(rows, m + 1, m)``.
    """
    srt = np.sort(rows, axis=1)
    n = srt.shape[1]
    sel = [np.sort(np.concatenate([srt[:, :m - p], srt[:, n - p:]], axis=1), axis=1)
           for p in range(m + 1)]
    return np.stack(sel, axis=1)


def _nu_block_max(x: np.ndarray, y: np.ndarray, m: int) -> float:
    """Max of ``sum_k x[s_k] y[t_k]`` over injections ``s, t`` of ``range(m)``.

    An exchange argument shows some optimum uses the top ``p`` and bottom
    ``m - p`` entries of ``x`` (likewise ``q`` for ``y``) paired in sorted
    order, so it suffices to scan ``p, q``.
    """
    xsel = _block_selections(np.asarray(x)[None], m)[0]
    ysel = _block_selections(np.asarray(y)[None], m)[0]
    return float(np.max(xsel @ ysel.T))


def _nu_greedy_max(x: np.ndarray, y: np.ndarray, m: int) -> float:
    xs, ys = list(np.sort(x)), list(np.sort(y))
    total = 0.0
    for _ in range(m):
        top, bottom = xs[-1] * ys[-1], xs[0] * ys[0]
        if top >= bottom:
            total += top
            xs.pop(), ys.pop()
        else:
            total += bottom
            xs.pop(0), ys.pop(0)
    return total


def _nu_brute_max_abs(x: np.ndarray, y: np.ndarray, m: int) -> float:
    inj = np.array(list(itertools.permutations(range(len(x)), m)), dtype=np.int64)
    return float(np.max(np.abs(x[inj] @ y[inj].T)))


def bennett_nu(C, A, exact_cap: int = EXACT_CAP_NU, method: str = "block") -> float:
    """``max_{i,j,sigma,sigma'} |sum_{k < n//2} C[i, sigma(k)] A[j, sigma'(k)]|``.

    ``method="block"`` is exact.  ``method="greedy"`` pairs largest-with-largest
    or smallest-with-smallest step by step; it is only a lower bound.  For
    ``n <= exact_cap`` the result is cross-checked against brute force.
    """
    C = np.asarray(C, dtype=float)
    A = np.asarray(A, dtype=float)
    if C.ndim != 2 or C.shape != A.shape or C.shape[0] != C.shape[1]:
        raise ValueError(f"C and A must be square matrices of equal shape, got {C.shape}, {A.shape}")
    if method not in ("block", "greedy"):
        raise ValueError(f"unknown method {method!r}")
    n = C.shape[0]
    m = n // 2
    if m == 0:
        return 0.0
    if method == "block":
        xs = _block_selections(C, m)
        # |sum| is the larger of the max over A and over -A
        ys = np.concatenate([_block_selections(A, m), _block_selections(-A, m)])
        nu = float(np.max(np.einsum("ipk,jqk->ipjq", xs, ys)))
    else:
        nu = max(max(_nu_greedy_max(C[i], A[j], m), _nu_greedy_max(C[i], -A[j], m))
                 for i in range(n) for j in range(n))
    if method == "block" and n <= exact_cap:
        brute = max(_nu_brute_max_abs(C[i], A[j], m) for i in range(n) for j in range(n))
        if not math.isclose(brute, nu, rel_tol=1e-12, abs_tol=1e-12):
            warnings.warn(f"nu mismatch: block {nu} vs brute force {brute}", RuntimeWarning,
                          stacklevel=2)
            nu = brute
    return nu


# ---------------------------------------------------------------------------
# Example-specific constants

@dataclass(frozen=True)
class GraphConstants:
    """Constants for the common-edge count of two graphs.

    ``printed`` holds the four closed-form constants written for this
    statistic; ``general`` is :func:`corollary_constants` applied to the
    product tensor of the two adjacency matrices.
    """

    printed: CorollaryConstants
    general: CorollaryConstants
    centered_degrees_x: np.ndarray
    centered_degrees_y: np.ndarray

    def to_json(self) -> dict:
        return {"printed": self.printed.to_json(), "general": self.general.to_json(),
                "centered_degrees_x": self.centered_degrees_x.tolist(),
                "centered_degrees_y": self.centered_degrees_y.tolist()}


def adjacency(edges, n: int) -> np.ndarray:
    mat = np.zeros((n, n))
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) is outside range({n})")
        mat[u, v] = 1.0
    return mat


def graph_constants(Ex, Ey, n: int, exact_cap: int = EXACT_CAP_B, restarts: int = B_RESTARTS,
                    seed: int = 0) -> GraphConstants:
    """Edges are 0-based ordered pairs; undirected graphs list both orientations."""
    cx, ay = adjacency(Ex, n), adjacency(Ey, n)
    deg_x, deg_y = cx.sum(axis=1), ay.sum(axis=1)
    dtx, dty = deg_x - deg_x.mean(), deg_y - deg_y.mean()
    sx, sy = float(np.sum(dtx ** 2)), float(np.sum(dty ** 2))
    ex, ey = float(cx.sum()), float(ay.sum())
    V_a = sx * sy / n ** 3
    B_a = float(np.max(np.abs(dtx)) * np.max(np.abs(dty))) / n
    V_d = (sx * sy / n ** 5
           + (ex - sx / n - 2 * ex ** 2 / n ** 2) * (ey - sy / n - 2 * ey ** 2 / n ** 2) / n ** 2)
    centered = Tensor4.from_product(double_center(cx), double_center(ay))
    B_d = permuted_opnorm_B(centered, exact_cap=exact_cap, restarts=restarts, seed=seed)
    printed = CorollaryConstants(V_a=V_a, B_a=B_a, V_d=V_d, B_d=B_d)
    general = corollary_constants(Tensor4.from_product(cx, ay), exact_cap=exact_cap,
                                  restarts=restarts, seed=seed)
    return GraphConstants(printed, general, dtx, dty)


@dataclass(frozen=True)
class RegressionConstants:
    Q: np.ndarray
    hat_diag: np.ndarray
    frob_sq: float
    opnorm: Interval
    p1: float
    # (variance coefficient, linear coefficient) of the two bound denominators
    sharp: tuple[float, float]
    crude: tuple[float, float]

    def to_json(self) -> dict:
        return {"frob_sq": self.frob_sq, "opnorm": asdict(self.opnorm), "p1": self.p1,
                "max_hat_diag": float(self.hat_diag.max()),
                "sharp": list(self.sharp), "crude": list(self.crude),
                "methods": {"frob_sq": "closed-form", "opnorm": self.opnorm.method}}


def hat_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    if np.max(np.abs(X.mean(axis=0))) >= 1e-10 * scale:
        raise ValueError("X must be column-centred")
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise ValueError("X^T X is singular")
    return X @ np.linalg.solve(gram, X.T)


def regression_constants(X, e, p1: float) -> RegressionConstants:
    """Constants for the hat-matrix quadratic form ``Q = H diag(e)``.

    ``e`` should be regression residuals on ``X``; then ``Q`` is doubly
    centred, which is checked.
    """
    if not 0 < p1 < 1:
        raise ValueError("p1 must lie in (0, 1)")
    H = hat_matrix(X)
    e = np.asarray(e, dtype=float)
    if e.shape != (H.shape[0],):
        raise ValueError("e must have one entry per row of X")
    Q = H * e[None, :]
    scale = max(1.0, float(np.max(np.abs(e)))) * len(e)
    if max(np.max(np.abs(Q.sum(axis=0))), np.max(np.abs(Q.sum(axis=1)))) > 1e-9 * scale:
        raise ValueError("Q is not doubly centred: e must be orthogonal to the columns of X")
    h = np.diag(H).copy()
    frob_sq = float(np.sum(Q ** 2))
    max_e = float(np.max(np.abs(e))) if len(e) else 0.0
    lower = float(operator_norm(Q)) if frob_sq > 0 else 0.0
    upper = max(lower, min(math.sqrt(frob_sq), max_e))
    p0 = 1 - p1
    lin = max(p1 ** 2, p0 ** 2)
    sharp = (p1 * p0 * frob_sq, lin * upper)
    crude = (p1 * p0 * float(np.sum(e ** 2)) * float(h.max()), lin * max_e)
    return RegressionConstants(Q=Q, hat_diag=h, frob_sq=frob_sq,
                               opnorm=Interval(lower, upper, "heuristic-interval"), p1=p1,
                               sharp=sharp, crude=crude)


def hadamard_permuted(C, A, sigma) -> np.ndarray:
    """``C o A^sigma`` with ``A^sigma[i, j] = A[sigma(i), sigma(j)]``."""
    sigma = np.asarray(sigma, dtype=np.int64)
    return np.asarray(C) * np.asarray(A)[np.ix_(sigma, sigma)]
