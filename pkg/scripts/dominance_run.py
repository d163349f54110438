"""Monte Carlo dominance run: random degenerate tensors against the explicit-constant tail bound.

Writes one JSON report per tensor and prints a status tally.

    python3 scripts/dominance_run.py --n 20 --tensors 50 --replicates 100000 --out runs/main.jsonl
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dips.bound_constants import bennett_nu, main_constants
from dips.instances import centred_zero_diagonal, random_degenerate
from dips.perm_engine import evaluate_dips_batch, exact_expectation
from dips.tail_bounds import bennett_curve, main_tail_curve, make_grid
from dips.tensor_core import Tensor4
from dips.verifier import TailEstimate, check_dominance, dkw_half_width, null_values, \
    survival_from_values


@dataclass
class RunConfig:
    n: int = 20
    tensors: int = 50
    replicates: int = 100_000
    grid_points: int = 50
    bound: str = "main"  # main | bennett
    seed: int = 0
    threads: int = os.cpu_count() or 1
    out: Path | None = None


def make_case(cfg: RunConfig, gen: np.random.Generator):
    if cfg.bound == "main":
        d = random_degenerate(cfg.n, gen)
        c = main_constants(d, restarts=0)  # the bound only reads the certified upper end of B
        return d, lambda grid: main_tail_curve(c.V, c.B, grid)
    C = centred_zero_diagonal(cfg.n, gen)
    A = gen.uniform(-1.0, 1.0, (cfg.n, cfg.n))
    nu = bennett_nu(C, A)
    return Tensor4.from_product(C, A), lambda grid: bennett_curve(C, A, grid, nu=nu)


def run(cfg: RunConfig) -> Counter:
    gen = np.random.default_rng(cfg.seed)
    tally: Counter = Counter()
    sink = cfg.out.open("w") if cfg.out else None
    start = time.perf_counter()
    for k in range(cfg.tensors):
        tensor, curve_for = make_case(cfg, gen)
        values = null_values(lambda p: evaluate_dips_batch(tensor, p, True), cfg.n, "mc",
                             cfg.replicates, seed=cfg.seed * 100_003 + k, threads=cfg.threads)
        mean = exact_expectation(tensor, True)
        # grid spans the observed deviations; beyond them the survival estimate is 0
        grid = make_grid(0.0, max(float(np.max(values - mean)), 1e-9) * 1.5, cfg.grid_points)
        tail = TailEstimate(grid, survival_from_values(values, mean, grid),
                            dkw_half_width(len(values)), mean, "mc", len(values), cfg.seed)
        rep = check_dominance(curve_for(grid), tail, name=f"{cfg.bound}:{k}")
        tally[rep.status] += 1
        if sink:
            sink.write(rep.to_json_line() + "\n")
    if sink:
        sink.close()
    print(json.dumps({"config": {k: str(v) for k, v in dataclasses.asdict(cfg).items()},
                      "tally": dict(tally), "seconds": round(time.perf_counter() - start, 1)}))
    return tally


def parse_args() -> RunConfig:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in dataclasses.fields(RunConfig):
        kind = Path if f.name == "out" else type(f.default)
        ap.add_argument(f"--{f.name.replace('_', '-')}", type=kind, default=f.default)
    return RunConfig(**vars(ap.parse_args()))


if __name__ == "__main__":
    tally = run(parse_args())
    raise SystemExit(1 if tally["fail"] else 0)
