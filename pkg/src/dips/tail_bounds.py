"""Tail and moment-generating-function bounds as explicit functions of ``t``.

Two groups of bounds live here:

* explicit-constant bounds (:func:`bound_main_tail`, :func:`bound_main_mgf`,
  :func:`bound_bennett` with ``explicit=True``), which are checked against
  simulation;
* bounds that hold for some unspecified universal constant ``K``.  ``K`` is
  always an argument; any value used with them is illustrative only.

Two-term bounds can exceed one.  Functions return the value clamped to
``[0, 1]`` unless ``raw=True``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .bound_constants import (CorollaryConstants, Interval, bennett_nu, frobenius_norm,
                              operator_norm)
from .tensor_core import is_doubly_centered

MAIN_VAR_COEF = 400_000
MAIN_LIN_COEF = 10_800
MGF_VAR_COEF = 100_000
MGF_LIN_COEF = 5_400
BENNETT_RATE = 120
BENNETT_SCALE = 540

KSOURCES = ("user", "explicit-thm23", "explicit-bennett")


class DegenerateBoundWarning(UserWarning):
    """A bound was evaluated with all-zero constants."""


@dataclass(frozen=True)
class KParameter:
    K: float
    source: str = "user"

    def __post_init__(self):
        if not self.K > 0 or not math.isfinite(self.K):
            raise ValueError(f"K must be a positive finite number, got {self.K}")
        if self.source not in KSOURCES:
            raise ValueError(f"unknown K source {self.source!r}")


def _check_t(t: float) -> None:
    if t < 0 or math.isnan(t):
        raise ValueError(f"t must be non-negative, got {t}")


def _upper(x) -> float:
    return x.upper if isinstance(x, Interval) else float(x)


def _exp_term(K: float, t: float, var: float, lin: float) -> float:
    """``exp(-K t^2 / (var + lin t))``; zero denominators mean a constant statistic."""
    if t == 0:
        return 1.0
    denom = var + lin * t
    if denom <= 0:
        return 0.0
    return math.exp(-K * t * t / denom)


def _clamp(value: float, raw: bool) -> float:
    return value if raw else min(1.0, value)


# ---------------------------------------------------------------------------
# explicit constants

def bound_main_tail(V: float, B_upper: float, t: float) -> float:
    """``exp(-t^2 / (400000 V + 10800 B t))`` for a degenerate DIPS."""
    _check_t(t)
    if V < 0 or B_upper < 0:
        raise ValueError("V and B must be non-negative")
    if t > 0 and V + B_upper * t <= 0:
        raise ValueError("V + B t must be positive for t > 0")
    return _exp_term(1.0, t, MAIN_VAR_COEF * V, MAIN_LIN_COEF * B_upper)


def bound_main_mgf(V: float, B_upper: float, lam: float) -> float:
    """``exp(100000 V lam^2 / (1 - 5400 B lam))`` for ``0 <= lam <= 1/(5400 B)``."""
    if V < 0 or B_upper < 0:
        raise ValueError("V and B must be non-negative")
    if lam < 0 or (B_upper > 0 and lam * MGF_LIN_COEF * B_upper > 1):
        raise ValueError(f"lambda={lam} is outside [0, 1/(5400 B)]")
    if V == 0:
        return 1.0
    denom = 1.0 - MGF_LIN_COEF * B_upper * lam
    if denom <= 0:
        return math.inf
    exponent = MGF_VAR_COEF * V * lam * lam / denom
    return math.exp(exponent) if exponent < 700 else math.inf


def bound_bennett(C, A, nu: float, t: float, explicit: bool = True,
                  K: KParameter | None = None) -> float:
    """Combinatorial Bennett bound for ``sum c_ij a_{pi(i) pi(j)}``.

    ``explicit=True`` uses the constants carried through the proof:
    ``exp(-(t / (120 nu)) log(1 + nu t / ((540 / n) ||C||_op^2 ||A||_F^2)))``.
    Otherwise ``120`` and ``540`` are both replaced by ``K``.
    """
    _check_t(t)
    C = np.asarray(C, dtype=float)
    A = np.asarray(A, dtype=float)
    if C.ndim != 2 or C.shape != A.shape:
        raise ValueError("C and A must have the same shape")
    if not is_doubly_centered(C):
        raise ValueError("C must be doubly centred")
    if np.max(np.abs(np.diag(C)), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(C)))):
        raise ValueError("C must have zero diagonal")
    if not explicit and K is None:
        raise ValueError("the K-form of the bound needs a K parameter")
    if t == 0:
        return 1.0
    if nu <= 0:
        raise ValueError("nu must be positive when t > 0")
    scale = operator_norm(C) ** 2 * frobenius_norm(A) ** 2
    return bennett_from_scale(C.shape[0], nu, scale, t, explicit, K)


def bennett_from_scale(n: int, nu: float, scale: float, t: float, explicit: bool = True,
                       K: KParameter | None = None) -> float:
    """Bennett bound given ``scale = ||C||_op^2 ||A||_F^2``; no validation of ``C``."""
    _check_t(t)
    if t == 0:
        return 1.0
    if nu <= 0:
        raise ValueError("nu must be positive when t > 0")
    rate, spread = (BENNETT_RATE, BENNETT_SCALE) if explicit else (K.K, K.K)
    if scale == 0:
        return 0.0
    return math.exp(-(t / (rate * nu)) * math.log1p(n * nu * t / (spread * scale)))


# ---------------------------------------------------------------------------
# universal-constant bounds

def bound_hanson_wright(C, A_info: Mapping, K: KParameter, t: float) -> float:
    """Hanson-Wright type bound for ``sum c_ij a_{pi(i) pi(j)}``.

    ``A_info`` is ``{"kind": "general", "max_hadamard": x}`` where ``x`` bounds
    ``max_sigma ||C o A^sigma||_op`` (a number or an :class:`Interval`; the
    upper end is used), or ``{"kind": "psd"}``.
    """
    _check_t(t)
    C = np.asarray(C, dtype=float)
    if not is_doubly_centered(C):
        raise ValueError("C must be doubly centred")
    kind = A_info.get("kind")
    frob_sq = frobenius_norm(C) ** 2
    op = float(operator_norm(C)) if frob_sq > 0 else 0.0
    if kind == "general":
        if "max_hadamard" not in A_info:
            raise ValueError("the general variant needs an upper bound on max_sigma ||C o A^sigma||_op")
        lin = op + _upper(A_info["max_hadamard"])
    elif kind == "psd":
        lin = op
    else:
        raise ValueError(f"unknown A kind {kind!r}")
    if t == 0:
        return 1.0
    if frob_sq + lin * t <= 0:
        warnings.warn("C = 0: the statistic is constant; bound reported as 1",
                      DegenerateBoundWarning, stacklevel=2)
        return 1.0
    return _exp_term(K.K, t, frob_sq, lin)


def bound_corollary(consts: CorollaryConstants, K: KParameter, t: float, raw: bool = False) -> float:
    """Two-term bound: linear part plus degenerate part."""
    _check_t(t)
    for name in ("V_a", "B_a", "V_d"):
        if getattr(consts, name) < 0:
            raise ValueError(f"{name} must be non-negative")
    value = (_exp_term(K.K, t, consts.V_a, consts.B_a)
             + _exp_term(K.K, t, consts.V_d, _upper(consts.B_d)))
    return _clamp(value, raw)


EXAMPLE_PARAMS = {
    "mww": ("m", "n"),
    "pearson": ("x", "y"),
    "kendall": ("N",),
    "spearman": ("N",),
    "chatterjee": ("N",),
    "graph": ("V_a", "B_a", "V_d", "B_d"),
    "regression": ("sharp",),
}


def bound_example(statistic: str, params: Mapping, K: KParameter, t: float, raw: bool = False) -> float:
    """Tail bound written out for one of the example statistics.

    Parameters per statistic: ``mww`` (``m``, ``n``); ``pearson`` (samples
    ``x``, ``y``); ``kendall``, ``spearman``, ``chatterjee`` (``N``); ``graph``
    (``V_a``, ``B_a``, ``V_d``, ``B_d``); ``regression`` (``sharp`` or
    ``crude``: a ``(variance, linear)`` coefficient pair).
    """
    _check_t(t)
    if statistic not in EXAMPLE_PARAMS:
        raise ValueError(f"unknown statistic {statistic!r}")
    missing = [k for k in EXAMPLE_PARAMS[statistic] if k not in params]
    if missing:
        raise ValueError(f"missing parameters for {statistic}: {missing}")
    k = K.K
    if statistic == "mww":
        m, n = params["m"], params["n"]
        N = m + n
        value = (_exp_term(k, t, N * m * n, N)
                 + _exp_term(k, t, m * m * n * n / N ** 2, math.sqrt(m * n)))
    elif statistic == "pearson":
        x = np.asarray(params["x"], dtype=float)
        y = np.asarray(params["y"], dtype=float)
        xc, yc = x - x.mean(), y - y.mean()
        sx, sy = np.linalg.norm(xc), np.linalg.norm(yc)
        if sx == 0 or sy == 0:
            raise ValueError("constant sample")
        lin = float(np.max(np.abs(xc)) * np.max(np.abs(yc)) / (sx * sy))
        value = _exp_term(k, t, 1.0 / len(x), lin)
    elif statistic == "kendall":
        N = params["N"]
        value = _exp_term(k * N, t, 1.0, 1.0) + _exp_term(k * N * N, t, 1.0, N)
    elif statistic == "spearman":
        N = params["N"]
        value = _exp_term(k * N, t, 1.0, 1.0)
    elif statistic == "chatterjee":
        N = params["N"]
        value = _exp_term(k * N * N, t, 1.0, N) + _exp_term(k * N, t, 1.0, math.sqrt(N))
    elif statistic == "graph":
        value = (_exp_term(k, t, params["V_a"], params["B_a"])
                 + _exp_term(k, t, params["V_d"], _upper(params["B_d"])))
    else:
        var, lin = params["sharp"]
        value = _exp_term(k, t, var, lin)
    return _clamp(value, raw)


# ---------------------------------------------------------------------------
# curves

@dataclass
class TailCurve:
    label: str
    grid: np.ndarray
    bound: np.ndarray
    raw: np.ndarray
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.bound = np.asarray(self.bound, dtype=float)
        self.raw = np.asarray(self.raw, dtype=float)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly ascending")
        if np.any(self.grid < 0):
            raise ValueError("grid must be non-negative")

    def to_json(self) -> dict:
        return {"label": self.label, "constants": self.constants,
                "grid": self.grid.tolist(), "bound": self.bound.tolist(), "raw": self.raw.tolist()}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "bound", "raw"])
        for row in zip(self.grid, self.bound, self.raw):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def make_grid(t_min: float, t_max: float, points: int) -> np.ndarray:
    if points < 2:
        raise ValueError("a grid needs at least two points")
    if not 0 <= t_min < t_max:
        raise ValueError(f"need 0 <= t_min < t_max, got {t_min}, {t_max}")
    return np.linspace(t_min, t_max, points)


def tail_curve(label: str, fn: Callable[[float], float], grid, constants: dict | None = None,
               raw_fn: Callable[[float], float] | None = None) -> TailCurve:
    """Evaluate ``fn`` (clamped) and ``raw_fn`` (unclamped, defaults to ``fn``) on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    raw = np.array([(raw_fn or fn)(float(t)) for t in grid])
    return TailCurve(label=label, grid=grid, bound=np.minimum(raw, 1.0), raw=raw,
                     constants=constants or {})


def main_tail_curve(V: float, B: Interval | float, grid) -> TailCurve:
    Bu = _upper(B)
    consts = {"V": V, "B": {"lower": B.lower, "upper": B.upper, "method": B.method}
              if isinstance(B, Interval) else {"lower": Bu, "upper": Bu, "method": "exact"}}
    return tail_curve("main-explicit", lambda t: bound_main_tail(V, Bu, t), grid, consts)


def bennett_curve(C, A, grid, nu: float | None = None) -> TailCurve:
    nu = bennett_nu(C, A) if nu is None else nu
    n = np.asarray(C).shape[0]
    # validates C once; the curve reuses the norms
    bound_bennett(C, A, nu, 0.0)
    c_op, a_frob = float(operator_norm(C)), frobenius_norm(A)
    consts = {"nu": nu, "C_op": c_op, "A_frob": a_frob, "n": n}
    scale = c_op ** 2 * a_frob ** 2
    return tail_curve("bennett-explicit", lambda t: bennett_from_scale(n, nu, scale, t), grid, consts)
