"""Fourth-order tensors, partial averages and the degenerate decomposition.

A tensor ``w`` is indexed ``w[i, j, k, l]`` with ``i, k`` in ``range(n)`` and
``j, l`` in ``range(m)`` (square tensors have ``m == n``).  It is stored either
densely as a C-ordered ``(n, m, n, m)`` array or in product form
``w[i, j, k, l] = c[i, j] * a[k, l]``.

Slots are numbered 1..4 in the public API, matching the usual
``w(i, j, k, l)`` notation; axes are 0-based internally.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

#: Product-form tensors are never expanded above this size (n**4 doubles).
MAX_DENSE_N = 64

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Tensor4:
    """Real tensor of shape ``(n, m, n, m)``, dense or product form.

    Use :meth:`from_dense` / :meth:`from_product` rather than the raw
    constructor.
    """

    n: int
    m: int
    dense: np.ndarray | None = None
    c: np.ndarray | None = None
    a: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("tensor dimensions must be positive")
        if (self.dense is None) == (self.c is None):
            raise ValueError("exactly one of dense or (c, a) storage is required")
        if self.dense is not None:
            if self.dense.shape != (self.n, self.m, self.n, self.m):
                raise ValueError(
                    f"dense storage has shape {self.dense.shape}, "
                    f"expected {(self.n, self.m, self.n, self.m)}")
            arrays = [self.dense]
        else:
            if self.a is None:
                raise ValueError("product form needs both c and a")
            for name, mat in (("c", self.c), ("a", self.a)):
                if mat.shape != (self.n, self.m):
                    raise ValueError(f"{name} has shape {mat.shape}, expected {(self.n, self.m)}")
            arrays = [self.c, self.a]
        for arr in arrays:
            if not np.all(np.isfinite(arr)):
                raise ValueError("tensor entries must be finite")
            arr.flags.writeable = False

    @classmethod
    def from_dense(cls, data) -> "Tensor4":
        arr = np.array(data, dtype=float, order="C")
        if arr.ndim == 1:
            n = round(len(arr) ** 0.25)
            if n ** 4 != len(arr):
                raise ValueError(f"flat dense data of length {len(arr)} is not n**4")
            arr = arr.reshape(n, n, n, n)
        if arr.ndim != 4 or arr.shape[0] != arr.shape[2] or arr.shape[1] != arr.shape[3]:
            raise ValueError(f"dense tensor must have shape (n, m, n, m), got {arr.shape}")
        return cls(n=arr.shape[0], m=arr.shape[1], dense=arr)

    @classmethod
    def from_product(cls, c, a) -> "Tensor4":
        c = np.array(c, dtype=float)
        a = np.array(a, dtype=float)
        if c.ndim != 2 or c.shape != a.shape:
            raise ValueError(f"c and a must be matrices of equal shape, got {c.shape} and {a.shape}")
        return cls(n=c.shape[0], m=c.shape[1], c=c, a=a)

    @property
    def is_product(self) -> bool:
        return self.c is not None

    @property
    def is_square(self) -> bool:
        return self.n == self.m

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n, self.m, self.n, self.m)

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        if max(self.n, self.m) > MAX_DENSE_N:
            raise ValueError(f"refusing to densify a product tensor with n > {MAX_DENSE_N}")
        return np.einsum("ij,kl->ijkl", self.c, self.a)

    def densified(self) -> "Tensor4":
        return self if self.dense is not None else Tensor4.from_dense(self.to_dense())

    def max_abs(self) -> float:
        if self.dense is not None:
            return float(np.max(np.abs(self.dense)))
        return float(np.max(np.abs(self.c)) * np.max(np.abs(self.a)))

    def scaled(self, factor: float) -> "Tensor4":
        if self.dense is not None:
            return Tensor4.from_dense(self.dense * factor)
        return Tensor4.from_product(self.c * factor, self.a)

    def to_json(self) -> dict:
        out = {"n": self.n}
        if self.m != self.n:
            out["m"] = self.m
        if self.is_product:
            out["form"] = "product"
            out["data"] = {"c": self.c.tolist(), "a": self.a.tolist()}
        else:
            out["form"] = "dense"
            out["data"] = self.dense.ravel().tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Tensor4":
        try:
            n = int(obj["n"])
            m = int(obj.get("m", n))
            form = obj["form"]
            data = obj["data"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed tensor JSON: {exc}") from exc
        if form == "dense":
            arr = np.asarray(data, dtype=float)
            if arr.size != n * m * n * m:
                raise ValueError(f"dense data has {arr.size} entries, expected {n * m * n * m}")
            return cls.from_dense(arr.reshape(n, m, n, m))
        if form == "product":
            t = cls.from_product(data["c"], data["a"])
            if (t.n, t.m) != (n, m):
                raise ValueError("product matrices do not match the declared size")
            return t
        raise ValueError(f"unknown tensor form {form!r}")


@dataclass(frozen=True, eq=False)
class Decomposition:
    """``sum w(i,j,pi(i),pi(j)) = n*sum a_w(i,pi(i)) + sum d_w(...) + constant``."""

    a_w: np.ndarray
    d_w: Tensor4
    constant: float

    def reconstruct(self, perm) -> float:
        """Right-hand side of the decomposition identity at ``perm``."""
        from .perm_engine import evaluate_dips

        perm = np.asarray(perm)
        n = self.d_w.n
        linear = float(self.a_w[np.arange(n), perm].sum())
        return n * linear + evaluate_dips(self.d_w, perm, include_diagonal=True) + self.constant


@dataclass(frozen=True)
class IndexSplit:
    """Pair of index subsets ``I, J`` of ``range(n)``, each of size ``ceil(n/2)``."""

    n: int
    I: tuple[int, ...]
    J: tuple[int, ...]

    def __post_init__(self):
        size = math.ceil(self.n / 2)
        for name, sub in (("I", self.I), ("J", self.J)):
            if len(sub) != size or len(set(sub)) != size:
                raise ValueError(f"{name} must have {size} distinct elements, got {sub}")
            if any(not 0 <= x < self.n for x in sub):
                raise ValueError(f"{name} must be a subset of range({self.n})")
        object.__setattr__(self, "I", tuple(sorted(int(x) for x in self.I)))
        object.__setattr__(self, "J", tuple(sorted(int(x) for x in self.J)))

    @property
    def Ic(self) -> tuple[int, ...]:
        return tuple(x for x in range(self.n) if x not in set(self.I))

    @property
    def Jc(self) -> tuple[int, ...]:
        return tuple(x for x in range(self.n) if x not in set(self.J))


def _slot_axes(slots: Iterable[int]) -> tuple[int, ...]:
    slots = set(slots)
    if not slots:
        raise ValueError("at least one slot is required")
    if not slots <= {1, 2, 3, 4}:
        raise ValueError(f"slots must be drawn from {{1, 2, 3, 4}}, got {sorted(slots)}")
    return tuple(sorted(s - 1 for s in slots))


def partial_average(t: Tensor4, slots: Iterable[int]) -> np.ndarray:
    """Average ``t`` over the given 1-based slots.

    The averaged axes are kept with length one, so the result broadcasts back
    against the full ``(n, m, n, m)`` shape.  Product-form tensors are
    averaged factor by factor and never expanded.
    """
    axes = _slot_axes(slots)
    if t.dense is not None:
        return t.dense.mean(axis=axes, keepdims=True)
    c_axes = tuple(ax for ax in axes if ax < 2)
    a_axes = tuple(ax - 2 for ax in axes if ax >= 2)
    c = t.c.mean(axis=c_axes, keepdims=True) if c_axes else t.c
    a = t.a.mean(axis=a_axes, keepdims=True) if a_axes else t.a
    return c[:, :, None, None] * a[None, None, :, :]


def is_degenerate(t: Tensor4, tol: float = DEGENERACY_TOL) -> bool:
    """True iff every single-slot partial average vanishes up to ``tol * scale``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    scale = max(1.0, t.max_abs())
    worst = max(float(np.max(np.abs(partial_average(t, [s])))) for s in (1, 2, 3, 4))
    return worst <= tol * scale


def _avg(w: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    return w.mean(axis=tuple(axes), keepdims=True) if axes else w


def hoeffding_decompose(t: Tensor4) -> Decomposition:
    """Split a square tensor into its linear part, degenerate part and constant."""
    if not t.is_square:
        raise ValueError("decomposition requires a square tensor (m == n)")
    n = t.n
    w = t.to_dense()
    # w(i,.,k,.) style averages, indexed by the surviving slots
    w_ik = _avg(w, (1, 3))[:, 0, :, 0]
    w_jl = _avg(w, (0, 2))[0, :, 0, :]
    w_i = _avg(w, (1, 2, 3))[:, 0, 0, 0]
    w_j = _avg(w, (0, 2, 3))[0, :, 0, 0]
    w_k = _avg(w, (0, 1, 3))[0, 0, :, 0]
    w_l = _avg(w, (0, 1, 2))[0, 0, 0, :]
    grand = float(w.mean())

    a_w = (w_ik - w_i[:, None] - w_k[None, :] + grand
           + w_jl - w_j[:, None] - w_l[None, :] + grand)

    d = (w
         - _avg(w, (1, 2, 3)) - _avg(w, (0, 2, 3)) - _avg(w, (0, 1, 3)) - _avg(w, (0, 1, 2))
         + _avg(w, (2, 3)) + _avg(w, (1, 3)) + _avg(w, (1, 2))
         + _avg(w, (0, 3)) + _avg(w, (0, 2)) + _avg(w, (0, 1))
         - _avg(w, (3,)) - _avg(w, (2,)) - _avg(w, (1,)) - _avg(w, (0,))
         + grand)
    return Decomposition(a_w=a_w, d_w=Tensor4.from_dense(d), constant=n * n * grand)


def tilde_d_restrict(t: Tensor4, split: IndexSplit) -> Tensor4:
    """Restrict ``t`` to ``I x I^c x J x J^c`` and centre each slot over its block.

    This is the sixteen-term inclusion-exclusion: every subset ``S`` of the
    four slots contributes ``(-1)**|S|`` times the average over ``S``.  The
    result has shape ``(|I|, |I^c|, |J|, |J^c|)``.
    """
    if not t.is_square:
        raise ValueError("restriction requires a square tensor")
    if split.n != t.n:
        raise ValueError(f"split is over range({split.n}) but tensor has n={t.n}")
    if len(split.Ic) == 0:
        raise ValueError("split leaves an empty complement")
    w = t.to_dense()
    block = w[np.ix_(split.I, split.Ic, split.J, split.Jc)]
    out = np.zeros_like(block)
    for r in range(5):
        for axes in itertools.combinations(range(4), r):
            out = out + (-1) ** r * _avg(block, axes)
    return Tensor4.from_dense(out)


def double_center(mat) -> np.ndarray:
    """Subtract row and column means and add back the grand mean."""
    mat = np.asarray(mat, dtype=float)
    return mat - mat.mean(axis=1, keepdims=True) - mat.mean(axis=0, keepdims=True) + mat.mean()


def is_doubly_centered(mat, tol: float = 1e-9) -> bool:
    mat = np.asarray(mat, dtype=float)
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    n = max(mat.shape)
    return (np.max(np.abs(mat.sum(axis=0)), initial=0.0) <= tol * scale * n
            and np.max(np.abs(mat.sum(axis=1)), initial=0.0) <= tol * scale * n)
