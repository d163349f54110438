"""Double-indexed permutation statistics: decomposition, bound constants, tail bounds, checks."""

from .tensor_core import (Decomposition, IndexSplit, Tensor4, hoeffding_decompose, is_degenerate,
                          partial_average, tilde_d_restrict)
from .perm_engine import (RngSeed, enumerate_all, evaluate_dips, exact_expectation, monte_carlo,
                          sample_split, sample_uniform)
from .bound_constants import (BoundConstants, CorollaryConstants, Interval, bennett_nu,
                              corollary_constants, operator_norm, permuted_opnorm_B, variance_V)
from .tail_bounds import KParameter, TailCurve

__all__ = [
    "Decomposition", "IndexSplit", "Tensor4", "hoeffding_decompose", "is_degenerate",
    "partial_average", "tilde_d_restrict", "RngSeed", "enumerate_all", "evaluate_dips",
    "exact_expectation", "monte_carlo", "sample_split", "sample_uniform", "BoundConstants",
    "CorollaryConstants", "Interval", "bennett_nu", "corollary_constants", "operator_norm",
    "permuted_opnorm_B", "variance_V", "KParameter", "TailCurve",
]
