"""Command-line front end for the rate checks and experiments.

Every subcommand is a seeded, reproducible run with machine-readable
output.  Exit codes separate the four outcomes a caller scripts
against: 0 success, 1 a check failed (tolerance exceeded or
statistical rejection), 2 bad usage or parameters, 3 a numerical
refusal (truncation or term cap).

JSON output is canonical: fields appear in a fixed order and floats
are rendered with 17 significant digits, so identical argv, seed and
thread count produce byte-identical documents.  The wall-clock field
stays null unless requested, keeping the default output reproducible.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .chains import (
    RowSamplingError,
    build_falling_chain,
    crp_distribution,
    dirichlet_limit_laws,
    dust_convergence_experiment,
    expected_tables,
    jumps_and_absorption,
    mc_duality_test,
    simulate_fixation_line,
)
from .duality import (
    check_chain_duality,
    check_green_duality,
    check_siegmund_duality,
)
from .kernels import path_seeds, run_paths
from .models import (
    Dirichlet,
    PoissonDirichlet,
    format_model,
    parse_model,
)
from .paintbox import MassPoint, coalesced_count_prob, mc_coalesced_count_prob
from .rates import (
    TruncationFailure,
    block_count_rate,
    block_count_total_rate,
    dirichlet_rate_by_compositions,
    fixation_total_rate_by_summation,
)
from .stirling import gen_stirling

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class RunConfig:
    """Resolved invocation: subcommand, models, numeric flags, sink."""

    subcommand: str
    models: tuple = ()
    i: Optional[int] = None
    j: Optional[int] = None
    n: Optional[object] = None
    t: Optional[object] = None
    reps: Optional[int] = None
    tol: Optional[float] = None
    seed: int = 0
    format: str = "json"
    threads: int = 1
    out: Optional[str] = None
    timing: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"subcommand": self.subcommand}
        if self.models:
            d["models"] = list(self.models)
        for name in ("i", "j", "n", "t", "reps", "tol"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        d["seed"] = self.seed
        d["format"] = self.format
        d["threads"] = self.threads
        if self.out is not None:
            d["out"] = self.out
        for k in sorted(self.extra):
            if self.extra[k] is not None:
                d[k] = self.extra[k]
        return d


# ---------------------------------------------------------------------------
# canonical serialization


def _float_text(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return format(v, ".17g")


def canonical_json(obj) -> str:
    """Deterministic JSON: insertion-ordered keys, 17-digit floats."""
    out = io.StringIO()
    _write_json(obj, out)
    return out.getvalue()


def _write_json(obj, out) -> None:
    if obj is None:
        out.write("null")
    elif obj is True:
        out.write("true")
    elif obj is False:
        out.write("false")
    elif isinstance(obj, str):
        import json as _json

        out.write(_json.dumps(obj))
    elif isinstance(obj, int):
        out.write(str(obj))
    elif isinstance(obj, float):
        out.write(_float_text(obj))
    elif isinstance(obj, Fraction):
        _write_json(float(obj), out)
    elif isinstance(obj, dict):
        out.write("{")
        first = True
        for k, v in obj.items():
            if not first:
                out.write(", ")
            first = False
            _write_json(str(k), out)
            out.write(": ")
            _write_json(v, out)
        out.write("}")
    elif isinstance(obj, (list, tuple)):
        out.write("[")
        first = True
        for v in obj:
            if not first:
                out.write(", ")
            first = False
            _write_json(v, out)
        out.write("]")
    elif isinstance(obj, np.generic):
        _write_json(obj.item(), out)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _exact_text(rv) -> Optional[str]:
    return str(rv.value) if rv.representation == "exact" else None


# ---------------------------------------------------------------------------
# argument plumbing


def _num(text: str):
    """Exact scalar: fractions and short decimals become rationals."""
    text = text.strip()
    try:
        v = Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"cannot parse number {text!r}") from e
    if v.denominator == 1:
        return int(v)
    return v


def _num_list(text: str):
    return tuple(_num(tok) for tok in text.split(",") if tok.strip())


def _int_list(text: str):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok:
            vals.append(int(tok))
    return tuple(vals)


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="coaldual",
        description="Block-counting and fixation-line rates, duality "
                    "checks and limit-law experiments.")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, models=True, reps=None):
        if models:
            p.add_argument("--model", action="append", default=[],
                           metavar="SPEC",
                           help="model description, repeatable")
        p.add_argument("--seed", type=int, default=0)
        if reps is not None:
            p.add_argument("--reps", type=int, default=reps)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--threads", type=int, default=0,
                       help="worker count; 0 uses the available cores, "
                            "1 is the serial reference path")
        p.add_argument("--out", default=None, metavar="PATH")
        p.add_argument("--timing", action="store_true",
                       help="include wall seconds (breaks byte-identity)")

    p = sub.add_parser("rates", help="block-merge rates and their identities")
    common(p)
    p.add_argument("--i", type=int, default=None)
    p.add_argument("--j", type=int, default=None)
    p.add_argument("--imax", type=int, default=None)
    p.add_argument("--table", action="store_true",
                   help="full rate table up to --imax")
    p.add_argument("--bridge", action="store_true",
                   help="check rates against the seating-process law")
    p.add_argument("--cross", action="store_true",
                   help="check the recursion route against direct "
                        "composition sums (finite-box models)")
    p.add_argument("--numeric", choices=("auto", "exact", "float"),
                   default="auto")

    p = sub.add_parser("total-rates",
                       help="line total vs block total one level up")
    common(p)
    p.add_argument("--i", type=int, default=None)
    p.add_argument("--imax", type=int, default=50)

    p = sub.add_parser("duality", help="distributional duality checks")
    common(p, reps=100_000)
    p.add_argument("--imax", type=int, default=20)
    p.add_argument("--mode", choices=("certified", "bound"),
                   default="certified")
    p.add_argument("--numeric", choices=("auto", "exact", "float"),
                   default="auto")
    p.add_argument("--mc", action="store_true",
                   help="two-proportion Monte Carlo test instead of the "
                        "rate-level identity")
    p.add_argument("--i", type=int, default=20)
    p.add_argument("--j", type=_int_list, default=(2,),
                   metavar="J[,J..]")
    p.add_argument("--t", type=_num_list, default=(Fraction(1, 2),),
                   metavar="T[,T..]")
    p.add_argument("--sigma", type=float, default=4.0)

    p = sub.add_parser("green", help="occupation-time duality with boundary")
    common(p)
    p.add_argument("--imax", type=int, default=10)
    p.add_argument("--level", type=int, default=None)

    p = sub.add_parser("appendix",
                       help="summed dual relation of the factorial-ratio "
                            "chain")
    common(p, models=False)
    p.add_argument("--params", action="append", default=[],
                   metavar="a=A,b=B,r=R,t=T[,j=J]",
                   help="chain parameter point, repeatable")
    p.add_argument("--imax", type=int, default=25)
    p.add_argument("--kmax", type=int, default=120)

    p = sub.add_parser("stirling", help="generalized Stirling tables")
    common(p, models=False)
    p.add_argument("--a", type=_num, default=0)
    p.add_argument("--b", type=_num, default=1)
    p.add_argument("--r", type=_num, default=0)
    p.add_argument("--imax", type=int, default=12)

    p = sub.add_parser("paintbox", help="ball-allocation outcome laws")
    common(p, models=False, reps=0)
    p.add_argument("--x", action="append", default=[],
                   metavar="P[,P..]", help="paintbox parts, repeatable")
    p.add_argument("--i", type=int, default=8)
    p.add_argument("--sigma", type=float, default=4.0)

    p = sub.add_parser("simulate", help="sample paths of either chain")
    common(p, reps=1000)
    p.add_argument("--process", required=True,
                   choices=("falling", "rising", "N", "L"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--max-terms", type=int, default=100_000)
    p.add_argument("--level-cap", type=int, default=1_000_000)

    p = sub.add_parser("converge", help="dust-limit moment experiment")
    common(p, reps=20_000)
    p.add_argument("--n", type=_int_list, default=(100, 500, 2000),
                   metavar="N[,N..]")
    p.add_argument("--t", type=_num_list, default=(Fraction(1, 2),),
                   metavar="T[,T..]")
    p.add_argument("--moments", type=_int_list, default=(1, 2))
    p.add_argument("--y", type=_num_list, default=(),
                   metavar="Y[,Y..]", help="scaled line grid")
    p.add_argument("--sigma", type=float, default=4.0)

    p = sub.add_parser("limits", help="finite-box jump and absorption laws")
    common(p, reps=0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--sigma", type=float, default=3.0)
    return top


def _resolve_models(specs) -> list:
    if not specs:
        raise ValueError("at least one --model is required")
    return [parse_model(s) for s in specs]


def _numeric_flag(choice: str) -> Optional[bool]:
    return {"auto": None, "exact": True, "float": False}[choice]


def _threads(requested: int) -> int:
    if requested < 0:
        raise ValueError(f"threads must be >= 0, got {requested}")
    return requested if requested > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (results, checks, csv_rows or None)


def _cmd_rates(args, cfg):
    models = _resolve_models(args.model)
    exact = _numeric_flag(args.numeric)
    results, checks, csv_rows = [], [], None
    if args.table or args.bridge or args.cross:
        if args.imax is None:
            raise ValueError("--imax is required with --table, --bridge "
                             "or --cross")
    if args.table:
        csv_rows = [("model", "i", "j", "value")]
        for m in models:
            for i in range(2, args.imax + 1):
                for j in range(1, i):
                    rv = block_count_rate(m, i, j, exact=exact)
                    results.append({"model": format_model(m), "i": i,
                                    "j": j, "value": float(rv),
                                    "exact": _exact_text(rv)})
                    csv_rows.append((format_model(m), i, j,
                                     _float_text(float(rv))))
    elif args.bridge:
        tol = args.tol if args.tol is not None else 1e-10
        for m in models:
            if not isinstance(m, (Dirichlet, PoissonDirichlet)):
                raise ValueError(
                    f"{type(m).__name__} has no seating construction")
            worst_abs = 0.0
            worst_rel = 0.0
            worst_mean = 0.0
            for i in range(2, args.imax + 1):
                dist = crp_distribution(m, i, exact=exact)
                for j in range(1, i):
                    rv = block_count_rate(m, i, j, exact=exact).value
                    diff = abs(float(rv) - float(dist[j]))
                    worst_abs = max(worst_abs, diff)
                    if float(dist[j]) > 0:
                        worst_rel = max(worst_rel, diff / float(dist[j]))
                mean = float(sum(k * p for k, p in enumerate(dist)))
                gap = abs(float(expected_tables(m, i, exact=exact)) - mean)
                worst_mean = max(worst_mean, gap / mean)
            checks.append({
                "identity": "merge rate equals seating occupancy law",
                "model": format_model(m),
                "window": f"1 <= j < i <= {args.imax}",
                "max_abs_residual": worst_abs,
                "max_rel_residual": worst_rel,
                "tolerance": tol,
                "passed": bool(worst_rel <= tol)})
            checks.append({
                "identity": "expected table count matches the law mean",
                "model": format_model(m),
                "window": f"i <= {args.imax}",
                "max_rel_residual": worst_mean,
                "tolerance": tol,
                "passed": bool(worst_mean <= tol)})
    elif args.cross:
        for m in models:
            if not isinstance(m, Dirichlet):
                raise ValueError(
                    "the composition route needs a finite-box model, "
                    f"got {type(m).__name__}")
            worst = Fraction(0)
            for i in range(2, args.imax + 1):
                for j in range(1, i):
                    a = block_count_rate(m, i, j, exact=True).value
                    b = dirichlet_rate_by_compositions(m, i, j).value
                    worst = max(worst, abs(a - b))
            checks.append({
                "identity": "recursion route equals composition sums",
                "model": format_model(m),
                "window": f"1 <= j < i <= {args.imax}",
                "max_abs_residual": float(worst),
                "tolerance": 0.0,
                "passed": bool(worst == 0)})
    else:
        if args.i is None or args.j is None:
            raise ValueError("rates needs --i and --j (or a table/check "
                             "mode with --imax)")
        csv_rows = [("model", "i", "j", "value")]
        for m in models:
            rv = block_count_rate(m, args.i, args.j, exact=exact)
            results.append({"model": format_model(m), "i": args.i,
                            "j": args.j, "value": float(rv),
                            "exact": _exact_text(rv)})
            csv_rows.append((format_model(m), args.i, args.j,
                             _float_text(float(rv))))
    return results, checks, csv_rows


def _cmd_total_rates(args, cfg):
    models = _resolve_models(args.model)
    tol = args.tol if args.tol is not None else 1e-9
    results, checks = [], []
    if args.i is not None:
        for m in models:
            summed = fixation_total_rate_by_summation(m, args.i)
            closed = block_count_total_rate(m, args.i + 1)
            results.append({"model": format_model(m), "i": args.i,
                            "line_total": float(summed),
                            "block_total_next": float(closed)})
        return results, checks, None
    for m in models:
        worst_rel, worst_i = 0.0, None
        for i in range(1, args.imax + 1):
            summed = float(fixation_total_rate_by_summation(m, i))
            closed = float(block_count_total_rate(m, i + 1))
            rel = abs(summed - closed) / closed if closed else abs(summed)
            if rel > worst_rel:
                worst_rel, worst_i = rel, i
        results.append({"model": format_model(m), "imax": args.imax,
                        "max_rel_residual": worst_rel,
                        "worst_i": worst_i})
        checks.append({
            "identity": "line total rate equals block total one level up",
            "model": format_model(m),
            "window": f"i <= {args.imax}",
            "max_rel_residual": worst_rel,
            "tolerance": tol,
            "passed": bool(worst_rel <= tol)})
    return results, checks, None


def _report_as_check(rep, extra=None) -> dict:
    d = rep.to_dict()
    if extra:
        d = {**extra, **d}
    return d


def _cmd_duality(args, cfg):
    models = _resolve_models(args.model)
    results, checks = [], []
    if not args.mc:
        tol = args.tol if args.tol is not None else 1e-9
        exact = _numeric_flag(args.numeric)
        for m in models:
            rep = check_siegmund_duality(m, args.imax, tol, exact=exact,
                                         mode=args.mode)
            checks.append({"model": format_model(m), **rep.to_dict()})
            results.append({"model": format_model(m),
                            "max_abs_residual": rep.max_abs_residual,
                            "passed": rep.passed})
        return results, checks, None
    combos = [(m, j, t) for m in models for j in args.j for t in args.t]
    for k, (m, j, t) in enumerate(combos):
        rep = mc_duality_test(m, args.i, j, float(t), reps=args.reps,
                              seed=args.seed + 977 * k, sigma=args.sigma,
                              threads=_threads(args.threads))
        checks.append(_report_as_check(rep, {"model": format_model(m)}))
        diff = rep.rows[2]
        results.append({"model": format_model(m), "i": args.i, "j": j,
                        "t": float(t), "difference": diff.estimate,
                        "stderr": diff.stderr, "passed": rep.passed})
    return results, checks, None


def _cmd_green(args, cfg):
    models = _resolve_models(args.model)
    tol = args.tol if args.tol is not None else 1e-6
    results, checks = [], []
    for m in models:
        rep = check_green_duality(m, imax=args.imax, tol=tol,
                                  level=args.level)
        for part, name in ((rep.corrected, "corrected"),
                           (rep.finite_level, "finite-level")):
            checks.append({"model": format_model(m), "form": name,
                           **part.to_dict()})
        results.append({
            "model": format_model(m),
            "uncorrected_max_residual": float(rep.uncorrected_max_residual),
            "uncorrected_worst": list(rep.uncorrected_worst)
            if rep.uncorrected_worst else None,
            "boundary": {str(k): float(v) for k, v in rep.boundary.items()},
            "note": rep.note})
    return results, checks, None


def _parse_chain_params(text: str):
    vals = {"j": 1}
    for part in text.split(","):
        key, _, raw = part.partition("=")
        key = key.strip()
        if key not in ("a", "b", "r", "t", "j"):
            raise ValueError(f"unknown chain parameter {key!r}")
        vals[key] = int(raw) if key == "j" else _num(raw)
    missing = {"a", "b", "r", "t"} - set(vals)
    if missing:
        raise ValueError(f"chain parameters missing {sorted(missing)}")
    return vals


def _cmd_appendix(args, cfg):
    if not args.params:
        raise ValueError("at least one --params point is required")
    tol = args.tol if args.tol is not None else 1e-9
    results, checks = [], []
    for text in args.params:
        p = _parse_chain_params(text)
        rep = check_chain_duality(p["a"], p["b"], p["r"], p["t"], p["j"],
                                  tol=tol, imax=args.imax, kmax=args.kmax)
        d = rep.to_dict()
        d["params"] = {k: float(p[k]) for k in ("a", "b", "r", "t")}
        d["j"] = p["j"]
        checks.append(d)
        results.append({"params": d["params"], "j": p["j"],
                        "max_abs_residual": rep.max_abs_residual,
                        "passed": rep.passed})
    return results, checks, None


def _cmd_stirling(args, cfg):
    results = []
    csv_rows = [("i", "j", "value")]
    for i in range(0, args.imax + 1):
        for j in range(0, i + 1):
            v = gen_stirling(i, j, args.a, args.b, args.r)
            exact = isinstance(v, (int, Fraction))
            results.append({"i": i, "j": j,
                            "value": float(v),
                            "exact": str(v) if exact else None})
            csv_rows.append((i, j, str(v) if exact
                             else _float_text(float(v))))
    return results, [], csv_rows


def _cmd_paintbox(args, cfg):
    if not args.x:
        raise ValueError("at least one --x paintbox is required")
    results, checks = [], []
    for idx, text in enumerate(args.x):
        parts = _num_list(text)
        x = MassPoint(parts)
        pmf = [coalesced_count_prob(args.i, x, j)
               for j in range(1, args.i + 1)]
        total = sum(pmf)
        results.append({
            "x": [float(p) for p in parts],
            "i": args.i,
            "pmf": [float(p) for p in pmf],
            "exact": [str(p) if isinstance(p, (int, Fraction)) else None
                      for p in pmf]})
        checks.append({
            "identity": "outcome law row-normalizes",
            "x": [float(p) for p in parts],
            "max_abs_residual": abs(float(total) - 1.0),
            "tolerance": 0.0,
            "passed": bool(total == 1)})
        if args.reps:
            rng = np.random.default_rng(
                np.random.SeedSequence([args.seed, idx]))
            worst = 0.0
            ok = True
            for j in range(1, args.i + 1):
                est, se = mc_coalesced_count_prob(args.i, x, j, args.reps,
                                                  rng)
                gap = abs(est - float(pmf[j - 1]))
                worst = max(worst, gap - args.sigma * se)
                if gap > args.sigma * se + 1e-12:
                    ok = False
            checks.append({
                "identity": "sampled allocations match the exact law",
                "x": [float(p) for p in parts],
                "reps": args.reps,
                "sigma": args.sigma,
                "worst_excess": worst,
                "passed": bool(ok)})
    return results, checks, None


def _cmd_simulate(args, cfg):
    models = _resolve_models(args.model)
    if len(models) != 1:
        raise ValueError("simulate takes exactly one --model")
    model = models[0]
    falling = args.process in ("falling", "N")
    reps = args.reps
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    csv_rows = [("rep", "init", "t", "value")]
    if falling:
        chain = build_falling_chain(model, args.n)
        batch = run_paths(chain, np.full(reps, args.n, dtype=np.int64),
                          args.t,
                          path_seeds(np.random.SeedSequence(args.seed),
                                     reps),
                          threads=_threads(args.threads))
        values = [int(s) for s in batch.states]
        results = {
            "process": "falling",
            "model": format_model(model),
            "n": args.n, "t": args.t, "reps": reps,
            "mean": float(np.mean(batch.states)),
            "min": int(batch.states.min()),
            "max": int(batch.states.max()),
            "mean_jumps": float(np.mean(batch.jumps)),
            "absorbed_fraction": float(np.mean(batch.states == 1))}
        for k, v in enumerate(values):
            csv_rows.append((k, args.n, _float_text(args.t), v))
        return results, [], csv_rows
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    finals = []
    jumps = []
    for k in range(reps):
        p = simulate_fixation_line(model, args.n, args.t, rng=rng,
                                   max_terms=args.max_terms,
                                   level_cap=args.level_cap)
        finals.append(p.final_state)
        jumps.append(p.n_jumps)
        csv_rows.append((k, args.n, _float_text(args.t),
                         "inf" if p.final_state == math.inf
                         else int(p.final_state)))
    finite = [v for v in finals if v != math.inf]
    results = {
        "process": "rising",
        "model": format_model(model),
        "n": args.n, "t": args.t, "reps": reps,
        "infinite_fraction": (reps - len(finite)) / reps,
        "mean_finite": float(np.mean(finite)) if finite else None,
        "max_finite": int(max(finite)) if finite else None,
        "mean_jumps": float(np.mean(jumps))}
    return results, [], csv_rows


def _cmd_converge(args, cfg):
    models = _resolve_models(args.model)
    bias_tol = args.tol if args.tol is not None else 0.05
    results, checks = [], []
    for k, (m, t) in enumerate([(m, t) for m in models for t in args.t]):
        rep = dust_convergence_experiment(
            m, n_list=args.n, t=float(t), moments=args.moments,
            reps=args.reps, seed=args.seed + 977 * k, sigma=args.sigma,
            threads=_threads(args.threads), y_grid=args.y,
            bias_tol=bias_tol)
        checks.append(_report_as_check(rep, {"model": format_model(m)}))
        per_moment = {}
        for row in rep.rows:
            if not row.name.startswith("E (N/n)^"):
                continue
            order = int(row.name.split("^")[1].split(" ")[0])
            per_moment.setdefault(order, []).append(row)
        for order, rows in sorted(per_moment.items()):
            errs = [abs(r.estimate - r.reference) for r in rows]
            ses = [r.stderr for r in rows]
            monotone = all(
                errs[a + 1] <= errs[a] + 2.0 * (ses[a] + ses[a + 1])
                for a in range(len(errs) - 1))
            checks.append({
                "identity": f"moment {order} error decays over n",
                "model": format_model(m),
                "t": float(t),
                "errors": errs,
                "passed": bool(monotone)})
        results.append({"model": format_model(m), "t": float(t),
                        "passed": rep.passed})
    return results, checks, None


def _cmd_limits(args, cfg):
    models = _resolve_models(args.model)
    tol = args.tol if args.tol is not None else 0.05
    results, checks = [], []
    for m in models:
        if not isinstance(m, Dirichlet):
            raise ValueError(
                "limit laws need a finite-box model, got "
                f"{type(m).__name__}")
        laws = dirichlet_limit_laws(m.N, m.alpha)
        tv = laws.tv_to_limit(args.n)
        results.append({
            "model": format_model(m),
            "n": args.n,
            "jump_pmf_limit": [float(p) for p in laws.jump_pmf_limit],
            "expected_absorption_limit":
                float(laws.expected_absorption_limit),
            "tv_to_limit": float(tv),
            "absorption_mean": float(laws.absorption_mean(args.n))})
        checks.append({
            "identity": "jump-count law is near its limit",
            "model": format_model(m),
            "n": args.n,
            "tv": float(tv),
            "tolerance": tol,
            "passed": bool(float(tv) <= tol)})
        checks.append(_matrix_power_check(m, laws, args.n))
        if args.reps:
            rep = jumps_and_absorption(m, args.n, reps=args.reps,
                                       seed=args.seed, sigma=args.sigma,
                                       threads=_threads(args.threads))
            tau = next(r for r in rep.rows if "absorption" in r.name)
            limit = float(laws.expected_absorption_limit)
            gap = abs(tau.estimate - limit)
            allow = (args.sigma * tau.stderr
                     + abs(tau.reference - limit))
            checks.append({
                "identity": "sampled absorption mean approaches the limit",
                "model": format_model(m),
                "n": args.n, "reps": args.reps,
                "estimate": tau.estimate,
                "limit": limit,
                "sigma": args.sigma,
                "passed": bool(gap <= allow)})
    return results, checks, None


def _matrix_power_check(model, laws, n) -> dict:
    # independent route: push the start mass through the embedded jump
    # chain of the falling process and read off the step-count law
    chain = build_falling_chain(model, n)
    mass = {n: 1.0}
    want = laws.jump_pmf(n)
    worst = 0.0
    absorbed = 0.0
    for k in range(len(want)):
        here = mass.get(1, 0.0) - absorbed
        worst = max(worst, abs(here - float(want[k])))
        absorbed = mass.get(1, 0.0)
        nxt = {}
        for s, p in mass.items():
            if s <= 1:
                nxt[s] = nxt.get(s, 0.0) + p
                continue
            lo, hi = chain.row_ptr[s], chain.row_ptr[s + 1]
            probs = np.diff(chain.cum[lo:hi], prepend=0.0)
            for c, q in zip(chain.col[lo:hi], probs):
                nxt[int(c)] = nxt.get(int(c), 0.0) + p * float(q)
        mass = nxt
    return {
        "identity": "jump-count law matches embedded-chain matrix powers",
        "model": format_model(model),
        "n": n,
        "max_abs_residual": worst,
        "tolerance": 1e-10,
        "passed": bool(worst <= 1e-10)}


_HANDLERS = {
    "rates": _cmd_rates,
    "total-rates": _cmd_total_rates,
    "duality": _cmd_duality,
    "green": _cmd_green,
    "appendix": _cmd_appendix,
    "stirling": _cmd_stirling,
    "paintbox": _cmd_paintbox,
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "limits": _cmd_limits,
}

_CSV_COMMANDS = frozenset({"rates", "stirling", "simulate"})


def _make_config(args) -> RunConfig:
    extra = {}
    for name in ("imax", "mode", "numeric", "mc", "sigma", "process",
                 "moments", "y", "params", "x", "table", "bridge",
                 "cross", "kmax", "level", "a", "b", "r", "max_terms",
                 "level_cap"):
        if hasattr(args, name):
            v = getattr(args, name)
            if isinstance(v, tuple):
                v = [float(e) if isinstance(e, (float, Fraction)) else e
                     for e in v]
            elif isinstance(v, Fraction):
                v = float(v)
            if v is None or v is False or v == []:
                continue
            extra[name] = v
    t = getattr(args, "t", None)
    if isinstance(t, tuple):
        t = [float(e) for e in t]
    n = getattr(args, "n", None)
    if isinstance(n, tuple):
        n = list(n)
    return RunConfig(
        subcommand=args.command,
        models=tuple(getattr(args, "model", ()) or ()),
        i=getattr(args, "i", None),
        j=(list(args.j) if isinstance(getattr(args, "j", None), tuple)
           else getattr(args, "j", None)),
        n=n, t=t,
        reps=getattr(args, "reps", None),
        tol=args.tol,
        seed=args.seed,
        format=args.format,
        threads=args.threads,
        out=args.out,
        timing=args.timing,
        extra=extra)


def _emit(doc: dict, csv_rows, cfg: RunConfig) -> None:
    if cfg.format == "csv":
        sink = io.StringIO()
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerows(csv_rows)
        text = sink.getvalue()
    else:
        text = canonical_json(doc) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    """Execute one invocation and return the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if not e.code else EXIT_USAGE
    cfg = _make_config(args)
    if cfg.format == "csv" and args.command not in _CSV_COMMANDS:
        sys.stderr.write(
            f"error: {args.command} has no tabular payload; csv is for "
            f"{', '.join(sorted(_CSV_COMMANDS))}\n")
        return EXIT_USAGE
    started = time.perf_counter()
    try:
        results, checks, csv_rows = _HANDLERS[args.command](args, cfg)
    except (TruncationFailure, RowSamplingError) as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERICAL
    except (ValueError, TypeError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    elapsed = time.perf_counter() - started
    checks = [{("passed" if k == "pass" else k): v for k, v in c.items()}
              for c in checks]
    failed = any(c.get("passed") is False for c in checks)
    doc = {
        "command": args.command,
        "config": cfg.to_dict(),
        "results": results,
        "checks": checks,
        "timing": elapsed if cfg.timing else None,
    }
    if cfg.format == "csv" and csv_rows is None:
        sys.stderr.write("error: this invocation produced no tabular "
                         "payload; use json\n")
        return EXIT_USAGE
    _emit(doc, csv_rows, cfg)
    return EXIT_CHECK_FAILED if failed else EXIT_PASS


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
