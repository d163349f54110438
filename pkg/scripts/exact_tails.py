"""Exact survival functions at small N next to the explicit bounds, as CSV.

For each size, one random degenerate tensor is enumerated over all N!
permutations.  Columns: n, t, exact survival, main bound, and the ratio
bound / survival (how loose the explicit constants are).

    python3 scripts/exact_tails.py --sizes 5 6 7 --points 40 > tails.csv
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

import numpy as np

from dips.bound_constants import main_constants
from dips.instances import random_degenerate
from dips.perm_engine import all_permutations, evaluate_dips_batch, exact_expectation
from dips.tail_bounds import main_tail_curve, make_grid
from dips.verifier import empirical_tail


@dataclass
class TailsConfig:
    sizes: list[int] = field(default_factory=lambda: [5, 6, 7])
    points: int = 40
    seed: int = 0


def main(cfg: TailsConfig) -> None:
    gen = np.random.default_rng(cfg.seed)
    out = csv.writer(sys.stdout)
    out.writerow(["n", "t", "survival", "bound", "ratio"])
    for n in cfg.sizes:
        d = random_degenerate(n, gen)
        c = main_constants(d)
        values = evaluate_dips_batch(d, all_permutations(n), True)
        grid = make_grid(0.0, float(np.max(values - exact_expectation(d, True))), cfg.points)
        est = empirical_tail(d, "exact", True, grid)
        curve = main_tail_curve(c.V, c.B, grid)
        for t, s, b in zip(grid, est.survival, curve.bound):
            out.writerow([n, f"{t:.6g}", f"{s:.6g}", f"{b:.6g}", f"{b / s:.4g}" if s > 0 else "inf"])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 6, 7])
    ap.add_argument("--points", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    main(TailsConfig(**vars(ap.parse_args())))
