"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 bad input, 3 a verification check failed.
Options may also come from ``--config file.json`` (keys are option names with
underscores); explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bound_constants as bc
from . import statistics as st
from . import tail_bounds as tb
from . import verifier as vf
from .perm_engine import RngSeed
from .tensor_core import Decomposition, Tensor4, hoeffding_decompose, is_degenerate

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2, 3

# decomposing a statistic's product tensor densifies it (n**4 doubles)
STATS_DECOMPOSE_CAP = 30

DEFAULTS = {
    "seed": 0,
    "replicates": 100_000,
    "grid": None,
    "include_diagonal": None,
    "k": None,
    "mode": "exact",
    "threads": None,
    "exact_cap": bc.EXACT_CAP_B,
    "restarts": bc.B_RESTARTS,
    "bound": "main",
    "checks": "decomposition",
    "statistic": None,
    "decomposition": None,
    "input_y": None,
    "permutations": 5,
    "a_kind": "general",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    input: str | None
    output: str | None
    seed: int
    replicates: int
    grid: tuple[float, float, int] | None
    include_diagonal: bool | None
    k: float | None
    mode: str
    threads: int
    exact_cap: int
    restarts: int
    bound: str
    checks: list[str]
    statistic: str | None
    decomposition: str | None
    input_y: str | None
    permutations: int
    a_kind: str

    def __post_init__(self):
        if self.replicates < 1:
            raise UsageError("--replicates must be at least 1")
        if self.threads < 1:
            raise UsageError("--threads must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise UsageError("--seed must be a 64-bit unsigned integer")

    def grid_points(self) -> np.ndarray:
        if self.grid is None:
            raise UsageError("--grid tmin:tmax:points is required")
        return tb.make_grid(*self.grid)

    def k_param(self) -> tb.KParameter:
        if self.k is None:
            raise UsageError("--k is required: these bounds hold for an unspecified universal K")
        return tb.KParameter(self.k, "user")


def parse_grid(text) -> tuple[float, float, int]:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be tmin:tmax:points, got {text!r}")
    try:
        lo, hi, pts = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from exc
    if not (0 <= lo < hi) or pts < 2:
        raise UsageError(f"grid needs 0 <= tmin < tmax and points >= 2, got {text!r}")
    return lo, hi, pts


def parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if str(value).lower() in ("true", "1", "yes"):
        return True
    if str(value).lower() in ("false", "0", "no"):
        return False
    raise UsageError(f"expected true or false, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dips", description="Concentration bounds for permutation statistics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "decompose": "split a tensor into linear part, degenerate part and constant",
        "constants": "compute the constants entering the bounds",
        "bound": "evaluate a tail bound on a grid",
        "simulate": "empirical survival function (exact or Monte Carlo)",
        "verify": "run verification checks, one JSON line per check",
        "stats": "value, constants and bounds for an example statistic",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON file of option values (flags win)")
        p.add_argument("--input")
        p.add_argument("--output")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--grid", help="tmin:tmax:points")
        p.add_argument("--include-diagonal", dest="include_diagonal", choices=["true", "false"])
        p.add_argument("--k", type=float, help="universal constant; illustrative only")
        p.add_argument("--mode", choices=["exact", "mc"])
        p.add_argument("--threads", type=int)
        p.add_argument("--exact-cap", dest="exact_cap", type=int)
        p.add_argument("--restarts", type=int)
        if name == "bound":
            p.add_argument("--bound", choices=["main", "corollary", "bennett", "hanson-wright"])
            p.add_argument("--a-kind", dest="a_kind", choices=["general", "psd"])
        if name == "verify":
            p.add_argument("--checks", help="comma list of decomposition,decoupling,dominance,"
                                            "randomization")
            p.add_argument("--decomposition", help="decomposition JSON to check instead of recomputing")
            p.add_argument("--permutations", type=int, help="random permutations per decoupling check")
        if name == "stats":
            p.add_argument("--statistic", required=False,
                           choices=["mww", "pearson", "kendall", "spearman", "chatterjee", "graph"])
            p.add_argument("--input-y", dest="input_y", help="second graph for --statistic graph")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ValueError("config must be a JSON object")
        unknown = set(cfg) - set(DEFAULTS) - {"input", "output"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(cfg)
    values.setdefault("input", None)
    values.setdefault("output", None)
    for key, val in vars(args).items():
        if key not in ("command", "config") and val is not None:
            values[key] = val
    if values["threads"] is None:
        values["threads"] = os.cpu_count() or 1
    if values["grid"] is not None:
        values["grid"] = parse_grid(values["grid"])
    if values["include_diagonal"] is not None:
        values["include_diagonal"] = parse_bool(values["include_diagonal"])
    checks = values["checks"]
    values["checks"] = checks if isinstance(checks, list) else [c for c in str(checks).split(",") if c]
    if values["mode"] not in ("exact", "mc"):
        raise UsageError(f"unknown mode {values['mode']!r}")
    fields = RunConfig.__dataclass_fields__
    return RunConfig(command=args.command, **{k: values[k] for k in fields if k != "command"})


# ---------------------------------------------------------------------------
# I/O helpers

def _read_json(path) -> object:
    if path is None:
        raise UsageError("--input is required")
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from exc


def load_tensor(path) -> Tensor4:
    obj = _read_json(path)
    if not isinstance(obj, dict):
        raise ValueError("tensor JSON must be an object")
    return Tensor4.from_json(obj)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=vf._jsonable) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _sibling(path: str | None, suffix: str) -> str | None:
    return None if path is None else str(Path(path).with_suffix(suffix))


def decomposition_to_json(dec: Decomposition) -> dict:
    return {"a_w": dec.a_w.tolist(), "d_w": dec.d_w.to_json(), "constant": dec.constant}


def decomposition_from_json(obj: dict) -> Decomposition:
    try:
        return Decomposition(a_w=np.asarray(obj["a_w"], dtype=float),
                             d_w=Tensor4.from_json(obj["d_w"]), constant=float(obj["constant"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed decomposition JSON: {exc}") from exc


def constants_report(t: Tensor4, cfg: RunConfig) -> dict:
    """Constants for a tensor: corollary constants of ``t`` and main constants of its degenerate part."""
    dec = hoeffding_decompose(t)
    kw = dict(exact_cap=cfg.exact_cap, restarts=cfg.restarts, seed=cfg.seed)
    out = {"n": t.n, "input_degenerate": is_degenerate(t),
           "corollary": bc.corollary_constants(t, **kw).to_json(),
           "degenerate_part": bc.main_constants(dec.d_w, **kw).to_json()}
    if t.is_product:
        out["nu"] = bc.bennett_nu(t.c, t.a)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_decompose(cfg: RunConfig) -> int:
    t = load_tensor(cfg.input)
    dec = hoeffding_decompose(t)
    summary = {"n": t.n, "constant": dec.constant, "max_abs_a_w": float(np.max(np.abs(dec.a_w))),
               "sum_a_w": float(dec.a_w.sum()), "d_w_degenerate": is_degenerate(dec.d_w),
               "input_degenerate": is_degenerate(t)}
    if cfg.output is None:
        sys.stdout.write(_dump({"decomposition": decomposition_to_json(dec), "summary": summary}))
    else:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "decomposition.json").write_text(_dump(decomposition_to_json(dec)))
        (out / "summary.json").write_text(_dump(summary))
    return EXIT_OK


def cmd_constants(cfg: RunConfig) -> int:
    _emit(_dump(constants_report(load_tensor(cfg.input), cfg)), cfg.output)
    return EXIT_OK


def _write_curve(curve: tb.TailCurve, path: str | None) -> None:
    _emit(curve.dumps() + "\n", path)
    if path is not None:
        _emit(curve.to_csv(), _sibling(path, ".csv"))


def cmd_bound(cfg: RunConfig) -> int:
    t = load_tensor(cfg.input)
    grid = cfg.grid_points()
    report = constants_report(t, cfg)
    if cfg.bound == "main":
        deg = report["degenerate_part"]
        V, Bu = deg["V"], deg["B"]["upper"]
        curve = tb.tail_curve("main-explicit", lambda s: tb.bound_main_tail(V, Bu, s), grid)
    elif cfg.bound == "corollary":
        K = cfg.k_param()
        c = report["corollary"]
        consts = bc.CorollaryConstants(c["V_a"], c["B_a"], c["V_d"], bc.Interval(**c["B_d"]))
        curve = tb.tail_curve("corollary-K", lambda s: tb.bound_corollary(consts, K, s), grid,
                              raw_fn=lambda s: tb.bound_corollary(consts, K, s, raw=True))
    elif cfg.bound in ("bennett", "hanson-wright"):
        if not t.is_product:
            raise ValueError(f"the {cfg.bound} bound needs a product-form tensor")
        if cfg.bound == "bennett":
            nu = report["nu"]
            tb.bound_bennett(t.c, t.a, nu, 0.0)  # validates C
            scale = bc.operator_norm(t.c) ** 2 * bc.frobenius_norm(t.a) ** 2
            if cfg.k is None:
                fn = lambda s: tb.bennett_from_scale(t.n, nu, scale, s)  # noqa: E731
                label = "bennett-explicit"
            else:
                K = cfg.k_param()
                fn = lambda s: tb.bennett_from_scale(t.n, nu, scale, s, explicit=False, K=K)  # noqa: E731
                label = "bennett-K"
        else:
            K = cfg.k_param()
            if cfg.a_kind == "psd":
                info = {"kind": "psd"}
            else:
                had = bc.permuted_opnorm_B(t, exact_cap=cfg.exact_cap, restarts=cfg.restarts,
                                           seed=cfg.seed)
                info = {"kind": "general", "max_hadamard": had}
                report["max_hadamard"] = {"lower": had.lower, "upper": had.upper, "method": had.method}
            fn = lambda s: tb.bound_hanson_wright(t.c, info, K, s)  # noqa: E731
            label = f"hanson-wright-{cfg.a_kind}-K"
        curve = tb.tail_curve(label, fn, grid)
    else:
        raise UsageError(f"unknown bound {cfg.bound!r}")
    curve.constants = report
    _write_curve(curve, cfg.output)
    return EXIT_OK


def _require_diagonal(cfg: RunConfig) -> bool:
    if cfg.include_diagonal is None:
        raise UsageError("--include-diagonal true|false is required for raw tensors")
    return cfg.include_diagonal


def survival_csv(tail: vf.TailEstimate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "survival", "half_width"])
    for t, s in zip(tail.grid, tail.survival):
        w.writerow([repr(float(t)), repr(float(s)), repr(float(tail.half_width))])
    return buf.getvalue()


def cmd_simulate(cfg: RunConfig) -> int:
    t = load_tensor(cfg.input)
    tail = vf.empirical_tail(t, cfg.mode, _require_diagonal(cfg), cfg.grid_points(),
                             replicates=cfg.replicates, seed=cfg.seed, threads=cfg.threads)
    out = tail.to_json() | {"include_diagonal": cfg.include_diagonal}
    _emit(_dump(out), cfg.output)
    if cfg.output is not None:
        _emit(survival_csv(tail), _sibling(cfg.output, ".csv"))
    return EXIT_OK


CHECKS = ("decomposition", "decoupling", "dominance", "randomization")


def cmd_verify(cfg: RunConfig) -> int:
    unknown = set(cfg.checks) - set(CHECKS)
    if unknown or not cfg.checks:
        raise UsageError(f"--checks must be a comma list drawn from {CHECKS}")
    t = load_tensor(cfg.input)
    reports = []
    for name in cfg.checks:
        if name == "decomposition":
            dec = None
            if cfg.decomposition:
                dec = decomposition_from_json(_read_json(cfg.decomposition))
            reports.append(vf.check_decomposition(t, dec))
        elif name == "decoupling":
            d = t if is_degenerate(t) else hoeffding_decompose(t).d_w
            gen = RngSeed(cfg.seed, 0).generator()
            sub = [vf.check_decoupling_identity(d, gen.permutation(t.n)) for _ in range(cfg.permutations)]
            worst = min(sub, key=lambda r: r.margin)
            worst.details["permutations"] = cfg.permutations
            worst.status = "fail" if any(r.status == "fail" for r in sub) else "pass"
            reports.append(worst)
        elif name == "dominance":
            d = hoeffding_decompose(t).d_w
            consts = bc.main_constants(d, exact_cap=cfg.exact_cap, restarts=cfg.restarts, seed=cfg.seed)
            grid = cfg.grid_points()
            curve = tb.main_tail_curve(consts.V, consts.B, grid)
            tail = vf.empirical_tail(d, cfg.mode, True, grid, replicates=cfg.replicates,
                                     seed=cfg.seed, threads=cfg.threads)
            reports.append(vf.check_dominance(curve, tail))
        else:
            reports.append(vf.check_randomization_mgf(t, 0.1 / max(1e-300, t.max_abs() * t.n * t.m),
                                                      replicates=cfg.replicates, seed=cfg.seed,
                                                      threads=cfg.threads))
    _emit("".join(r.to_json_line() + "\n" for r in reports), cfg.output)
    return EXIT_VERIFY if any(r.status == "fail" for r in reports) else EXIT_OK


def _mww_samples(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with header ``x,y``; columns may have different lengths (blank cells)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "y"]:
                raise ValueError(f"{path}: expected header 'x,y'")
            rows = list(reader)
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    x = [float(r["x"]) for r in rows if r["x"] not in (None, "")]
    y = [float(r["y"]) for r in rows if r["y"] not in (None, "")]
    return np.array(x), np.array(y)


def cmd_stats(cfg: RunConfig) -> int:
    kind = cfg.statistic
    if kind is None:
        raise UsageError("--statistic is required")
    if cfg.input is None:
        raise UsageError("--input is required")
    out: dict = {"statistic": kind}
    if kind == "mww":
        x, y = _mww_samples(cfg.input)
        pair = st.build_mww(len(x), len(y), np.concatenate([x, y]))
        params = {"m": len(x), "n": len(y), "pooled": np.concatenate([x, y])}
        bparams = {"m": len(x), "n": len(y)}
        value = pair.value()
    elif kind == "graph":
        if cfg.input_y is None:
            raise UsageError("--input-y is required for the graph statistic")
        nx, ex = st.parse_graph(_read_json(cfg.input))
        ny, ey = st.parse_graph(_read_json(cfg.input_y))
        if nx != ny:
            raise ValueError("the two graphs have different vertex counts")
        pair = st.build_graph_gamma(ex, ey, nx)
        g = bc.graph_constants(ex, ey, nx, exact_cap=cfg.exact_cap, restarts=cfg.restarts, seed=cfg.seed)
        p = g.printed
        bparams = {"V_a": p.V_a, "B_a": p.B_a, "V_d": p.V_d, "B_d": p.B_d}
        out["graph_constants"] = g.to_json()
        value = pair.value()
    else:
        sample = st.load_sample_csv(cfg.input)
        if kind == "chatterjee":
            pair = st.chatterjee_pair(len(sample))
            perm = st.chatterjee_rank_permutation(sample)
            value = st.chatterjee_xi(perm)
            bparams = {"N": len(sample)}
        else:
            pair = st.build_daniels(sample, kind)
            value = pair.value()
            bparams = {"x": sample.x, "y": sample.y} if kind == "pearson" else {"N": len(sample)}
    out.update({"n": pair.n, "value": value, "null_mean": pair.null_mean(),
                "corollary": bc.corollary_constants(pair.tensor(), exact_cap=cfg.exact_cap,
                                                    restarts=cfg.restarts, seed=cfg.seed).to_json()
                if pair.n <= STATS_DECOMPOSE_CAP else None})
    if cfg.k is not None and cfg.grid is not None:
        K = cfg.k_param()
        curve = tb.tail_curve(f"{kind}-K", lambda s: tb.bound_example(kind, bparams, K, s), cfg.grid_points(),
                              raw_fn=lambda s: tb.bound_example(kind, bparams, K, s, raw=True))
        out["bound"] = curve.to_json() | {"note": "K is user-supplied; illustrative only"}
    _emit(_dump(out), cfg.output)
    return EXIT_OK


COMMANDS = {"decompose": cmd_decompose, "constants": cmd_constants, "bound": cmd_bound,
            "simulate": cmd_simulate, "verify": cmd_verify, "stats": cmd_stats}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"dips {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"dips {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
