"""Permutations of ``range(n)``: sampling, enumeration and DIPS evaluation.

Randomness is addressed by ``(seed, stream)`` pairs.  Monte Carlo work is cut
into fixed-size blocks and block ``b`` always draws from stream ``b``, so a
run is reproducible regardless of how many workers process the blocks.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .tensor_core import IndexSplit, Tensor4

MAX_ENUMERATION_N = 10

#: Replicates per RNG stream in batched Monte Carlo.
BLOCK_SIZE = 4096


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            value = getattr(self, name)
            if not 0 <= value < 2 ** 64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream: int) -> "RngSeed":
        return RngSeed(self.seed, stream)


@dataclass(frozen=True)
class SplitBijection:
    """Independent bijections ``pi1: I -> J`` and ``pi2: I^c -> J^c``.

    ``pi1[r]`` is the image of ``split.I[r]``; likewise for ``pi2`` and ``Ic``.
    """

    split: IndexSplit
    pi1: tuple[int, ...]
    pi2: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.pi1) != list(self.split.J):
            raise ValueError("pi1 must map I onto J")
        if sorted(self.pi2) != list(self.split.Jc):
            raise ValueError("pi2 must map I^c onto J^c")

    def as_mapping(self) -> np.ndarray:
        """The joint map on ``range(n)`` (a permutation with ``I -> J``)."""
        out = np.empty(self.split.n, dtype=np.int64)
        out[list(self.split.I)] = self.pi1
        out[list(self.split.Ic)] = self.pi2
        return out


def as_permutation(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.int64)
    if p.ndim != 1 or not np.array_equal(np.sort(p), np.arange(len(p))):
        raise ValueError(f"not a permutation of range({len(p)}): {p.tolist()}")
    return p


def _inside_out(n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        j = int(rng.integers(0, i + 1))
        if j != i:
            out[i] = out[j]
        out[j] = i
    return out


def sample_uniform(n: int, rng: RngSeed | np.random.Generator) -> np.ndarray:
    """Uniform permutation of ``range(n)`` by the inside-out shuffle."""
    if n < 1:
        raise ValueError("n must be at least 1")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    return _inside_out(n, gen)


def sample_uniform_batch(n: int, size: int, gen: np.random.Generator) -> np.ndarray:
    """``size`` independent uniform permutations as rows, shuffled in lockstep."""
    if n < 1:
        raise ValueError("n must be at least 1")
    out = np.empty((size, n), dtype=np.int64)
    rows = np.arange(size)
    for i in range(n):
        j = gen.integers(0, i + 1, size=size)
        out[:, i] = out[rows, j]
        out[rows, j] = i
    return out


def enumerate_all(n: int) -> Iterator[np.ndarray]:
    """All ``n!`` permutations in lexicographic order."""
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"refusing to enumerate {n}! permutations (cap is n <= {MAX_ENUMERATION_N})")
    if n < 1:
        raise ValueError("n must be at least 1")
    for p in itertools.permutations(range(n)):
        yield np.array(p, dtype=np.int64)


def all_permutations(n: int) -> np.ndarray:
    """``enumerate_all`` stacked into an ``(n!, n)`` array."""
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"refusing to enumerate {n}! permutations (cap is n <= {MAX_ENUMERATION_N})")
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def evaluate_dips(t: Tensor4, p, include_diagonal: bool) -> float:
    """``sum w(i, j, p[i], p[j])`` over all pairs, or over ``i != j``."""
    p = np.asarray(p, dtype=np.int64)
    if not t.is_square or p.shape != (t.n,):
        raise ValueError(f"permutation of length {p.shape} does not match tensor of size {t.shape}")
    return float(evaluate_dips_batch(t, p[None, :], include_diagonal)[0])


def evaluate_dips_batch(t: Tensor4, perms: np.ndarray, include_diagonal: bool) -> np.ndarray:
    """Vectorised :func:`evaluate_dips` over the rows of ``perms``."""
    perms = np.asarray(perms, dtype=np.int64)
    n = t.n
    if not t.is_square or perms.ndim != 2 or perms.shape[1] != n:
        raise ValueError(f"permutations of shape {perms.shape} do not match tensor of size {t.shape}")
    diag = np.arange(n)
    if t.is_product:
        # sum c_ij a_{p(i) p(j)} without expanding the tensor
        a_perm = t.a[perms[:, :, None], perms[:, None, :]]
        total = np.einsum("ij,rij->r", t.c, a_perm)
        if not include_diagonal:
            total = total - np.einsum("i,ri->r", np.diag(t.c), a_perm[:, diag, diag])
        return total
    flat = t.dense.reshape(-1)
    ij = (diag[:, None] * n + diag[None, :]) * n * n
    idx = ij[None] + perms[:, :, None] * n + perms[:, None, :]
    vals = flat[idx]
    if not include_diagonal:
        vals[:, diag, diag] = 0.0
    return vals.sum(axis=(1, 2))


def exact_expectation(t: Tensor4, include_diagonal: bool) -> float:
    """Closed-form mean of the DIPS under a uniform permutation.

    Off the diagonal the pair ``(p[i], p[j])`` is uniform over ordered pairs of
    distinct values; on it ``p[i]`` is uniform over ``range(n)``.
    """
    if not t.is_square:
        raise ValueError("expectation requires a square tensor")
    n = t.n
    if n < 2 and not include_diagonal:
        raise ValueError("the off-diagonal part needs n >= 2")
    if t.is_product:
        c, a = t.c, t.a
        diag_c, diag_a = np.trace(c), np.trace(a)
        off = 0.0
        if n >= 2:
            off = (c.sum() - diag_c) * (a.sum() - diag_a) / (n * (n - 1))
        on = diag_c * diag_a / n
    else:
        w = t.dense
        # s_diag[i, k] = w(i, i, k, k)
        s_diag = np.einsum("iikk->ik", w)
        # pairs i != j and k != l: total sum minus i == j minus k == l plus both
        sum_ij_off_kl_off = (w.sum() - np.einsum("iikl->", w) - np.einsum("ijkk->", w)
                             + s_diag.sum())
        off = sum_ij_off_kl_off / (n * (n - 1)) if n >= 2 else 0.0
        on = s_diag.sum() / n
    return float(off + on) if include_diagonal else float(off)


def sample_split(n: int, rng: RngSeed | np.random.Generator) -> SplitBijection:
    """Uniform ``I, J`` of size ``ceil(n/2)`` with independent uniform bijections."""
    if n < 2:
        raise ValueError("n must be at least 2")
    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    n1 = math.ceil(n / 2)
    I = np.sort(gen.permutation(n)[:n1])
    J = np.sort(gen.permutation(n)[:n1])
    split = IndexSplit(n, tuple(I.tolist()), tuple(J.tolist()))
    Jc = np.array(split.Jc, dtype=np.int64)
    pi1 = np.array(split.J, dtype=np.int64)[_inside_out(n1, gen)]
    pi2 = Jc[_inside_out(n - n1, gen)]
    return SplitBijection(split, tuple(pi1.tolist()), tuple(pi2.tolist()))


def monte_carlo(statistic: Callable[[np.ndarray], np.ndarray], n: int, replicates: int,
                seed: int, threads: int = 1, block_size: int = BLOCK_SIZE) -> np.ndarray:
    """Evaluate ``statistic`` on ``replicates`` uniform permutations.

    ``statistic`` maps an ``(r, n)`` batch of permutations to ``r`` values.
    Block ``b`` draws from stream ``b`` of ``seed`` and results are placed by
    block index, so the output does not depend on ``threads``.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    n_blocks = -(-replicates // block_size)
    out = np.empty(replicates, dtype=float)

    def run(b: int) -> None:
        lo = b * block_size
        hi = min(replicates, lo + block_size)
        gen = RngSeed(seed, b).generator()
        out[lo:hi] = statistic(sample_uniform_batch(n, hi - lo, gen))

    if threads <= 1 or n_blocks == 1:
        for b in range(n_blocks):
            run(b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n_blocks)))
    return out
