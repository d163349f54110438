"""Random test instances: degenerate tensors, centred score matrices, PSD matrices."""

from __future__ import annotations

import numpy as np

from .tensor_core import Tensor4, double_center, hoeffding_decompose


def random_tensor(n: int, gen: np.random.Generator, product: bool = False) -> Tensor4:
    if product:
        return Tensor4.from_product(gen.standard_normal((n, n)), gen.standard_normal((n, n)))
    return Tensor4.from_dense(gen.standard_normal((n, n, n, n)))


def random_degenerate(n: int, gen: np.random.Generator) -> Tensor4:
    """Degenerate part of a Gaussian tensor, rescaled so ``max |d| == 1``."""
    d = hoeffding_decompose(random_tensor(n, gen)).d_w
    return d.scaled(1.0 / d.max_abs())


def centred_zero_diagonal(n: int, gen: np.random.Generator, tol: float = 1e-13) -> np.ndarray:
    """Doubly centred matrix with zero diagonal (needs ``n >= 4`` to be non-trivial).

    The constraints are linear, so a Gaussian matrix is projected onto their
    null space by least squares.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rows = []
    for i in range(n):
        r = np.zeros((n, n)); r[i, :] = 1; rows.append(r.ravel())
        c = np.zeros((n, n)); c[:, i] = 1; rows.append(c.ravel())
        e = np.zeros((n, n)); e[i, i] = 1; rows.append(e.ravel())
    L = np.array(rows)
    x = gen.standard_normal(n * n)
    x = x - L.T @ np.linalg.lstsq(L.T, x, rcond=None)[0]
    x[np.abs(x) < tol] = 0.0
    C = x.reshape(n, n)
    np.fill_diagonal(C, 0.0)
    return C


def centred_matrix(n: int, gen: np.random.Generator) -> np.ndarray:
    return double_center(gen.standard_normal((n, n)))


def psd_unit_diagonal(n: int, gen: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """PSD matrix whose diagonal is at most one."""
    G = gen.standard_normal((n, rank or n))
    A = G @ G.T
    return A / np.max(np.diag(A))


def admissible_rectangular(n: int, m: int, gen: np.random.Generator, product: bool = False) -> Tensor4:
    """Tensor of shape ``(n, m, n, m)`` whose sums over ``(i, k)`` and over ``(j, l)`` vanish."""
    if product:
        # (i, k) and (j, l) centring of c[i, j] a[k, l] does not factor, so build densely
        w = np.einsum("ij,kl->ijkl", gen.standard_normal((n, m)), gen.standard_normal((n, m)))
    else:
        w = gen.standard_normal((n, m, n, m))
    w = w - w.mean(axis=(0, 2), keepdims=True)
    w = w - w.mean(axis=(1, 3), keepdims=True)
    return Tensor4.from_dense(w / np.max(np.abs(w)))
