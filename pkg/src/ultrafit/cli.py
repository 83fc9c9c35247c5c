"""Command-line entry point: ``ultrafit {fit,exact,eval,gen,bench}``.

Every command that produces a report writes JSON with the keys
``command, params, seed, distortion_max, dominance_violation_max,
approx_factor, runtime_ms, counters`` (absent values are null).  The default
seed comes from ``ULTRAFIT_SEED`` when set.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
import time

import numpy as np

from . import kernels
from .dataset import PointSet, dedupe, generate_uniform, load_csv, save_csv, standardize
from .dendro import Dendrogram, FitParams, distortion, exact_fit, fit
from .errors import UltrafitError
from .kt import HarvestParams, harvest_edges

log = logging.getLogger("ultrafit")

QUADRATIC_WARN_N = 100_000
REPORT_KEYS = (
    "command",
    "params",
    "seed",
    "distortion_max",
    "dominance_violation_max",
    "approx_factor",
    "runtime_ms",
    "counters",
)


def _default_seed() -> int:
    raw = os.environ.get("ULTRAFIT_SEED")
    if raw is None or not raw.strip():
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise SystemExit(f"ULTRAFIT_SEED must be an integer, got {raw!r}") from None


def _positive(kind):
    def parse(text):
        x = kind(text)
        if x <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return x

    return parse


def _at_least_one(text):
    x = float(text)
    if not x >= 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return x


def _multiplier(text):
    if text in ("strict", "sqrt"):
        return text
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected strict, sqrt or a number >= 1") from None
    if not x >= 1:
        raise argparse.ArgumentTypeError(f"numeric multiplier must be >= 1, got {text}")
    return x


def _sizes(text):
    try:
        out = [int(float(s)) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not out or min(out) < 2:
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return out


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _report(args, **fields) -> dict:
    rep = {k: None for k in REPORT_KEYS}
    rep["command"] = args.argv
    rep["seed"] = getattr(args, "seed", None)
    rep.update(fields)
    return rep


def _emit(rep: dict, path: str | None) -> None:
    text = json.dumps(rep, indent=2, sort_keys=False, default=_json_default)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_points(args) -> PointSet:
    ps = load_csv(args.input, has_header=args.header)
    if args.dedupe:
        ps, _ = dedupe(ps)
    if args.standardize:
        ps = standardize(ps)
    return ps


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="points CSV, one point per row")
    p.add_argument("--header", action="store_true", help="skip the first row of the input")
    p.add_argument("--dedupe", action="store_true", help="drop repeated points (first occurrence kept)")
    p.add_argument("--standardize", action="store_true", help="z-score every column (after --dedupe)")


def _fit_params(args) -> FitParams:
    c = args.c
    if c is None:
        c = (args.gamma or 1.0) * (args.alpha or 1.0)
    return FitParams(
        c=c,
        gamma=args.gamma,
        alpha=args.alpha,
        multiplier=args.multiplier,
        seed=args.seed,
        lsh_width=args.lsh_width,
        lsh_safety=args.lsh_safety,
        afn_c_l=args.afn_cl,
        afn_c_m=args.afn_cm,
        r_min=args.r_min,
        r_max=args.r_max,
    )


def _eval_fields(den: Dendrogram, ps: PointSet, baseline: Dendrogram | None) -> tuple[dict, dict]:
    rep = distortion(den, ps)
    fields = {
        "distortion_max": rep.dist_max,
        "dominance_violation_max": rep.dominance_violation_max,
    }
    ms = {"eval": rep.runtime_ms}
    if baseline is None:
        t0 = time.perf_counter()
        baseline = exact_fit(ps).dendrogram
        ms["baseline"] = (time.perf_counter() - t0) * 1e3
    base = distortion(baseline, ps)
    ms["eval"] += base.runtime_ms
    fields["approx_factor"] = rep.dist_max / base.dist_max
    fields["baseline_distortion"] = base.dist_max
    fields["argmax_pair"] = rep.argmax_pair
    return fields, ms


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    ps = _load_points(args)
    params = _fit_params(args)
    res = fit(ps, params)
    res.dendrogram.write_csv(args.output)
    if args.dump_edges:
        _dump_edges(ps, params, args.dump_edges)
    if args.dump_cutweights:
        res.cut_weights.write_csv(args.dump_cutweights)
    fields, ms = {}, dict(res.runtime_ms)
    if args.eval:
        fields, ems = _eval_fields(res.dendrogram, ps, None)
        ms.update(ems)
    p = params.as_dict()
    p.update(n=ps.n, d=ps.d, backend=kernels.backend())
    _emit(_report(args, params=p, runtime_ms=ms, counters=res.counters, **fields), args.report)
    return 0


def _dump_edges(ps: PointSet, params: FitParams, path: str) -> None:
    from .dendro import scale_for

    if params.gamma <= 1:
        log.warning("--dump-edges ignored: gamma = 1 uses the exact MST")
        return
    hp = HarvestParams(width=params.lsh_width, safety=params.lsh_safety, seed=params.seed)
    try:
        res = harvest_edges(ps, params.gamma, scale_for(ps, params), hp)
    except ValueError as exc:
        log.warning("--dump-edges ignored: %s", exc)
        return
    res.edges.write_csv(path)


def cmd_exact(args) -> int:
    ps = _load_points(args)
    if ps.n > QUADRATIC_WARN_N:
        log.warning("exact fit is quadratic; n=%d will be slow", ps.n)
    res = exact_fit(ps)
    res.dendrogram.write_csv(args.output)
    if args.dump_cutweights:
        res.cut_weights.write_csv(args.dump_cutweights)
    fields, ms = {}, dict(res.runtime_ms)
    if not args.no_eval and ps.n >= 2:
        rep = distortion(res.dendrogram, ps)
        fields = {
            "distortion_max": rep.dist_max,
            "dominance_violation_max": rep.dominance_violation_max,
            "approx_factor": 1.0,
            "argmax_pair": rep.argmax_pair,
        }
        ms["eval"] = rep.runtime_ms
    params = {"c": 1.0, "gamma": 1.0, "alpha": 1.0, "n": ps.n, "d": ps.d}
    _emit(_report(args, params=params, runtime_ms=ms, counters=res.counters, **fields), args.report)
    return 0


def cmd_eval(args) -> int:
    ps = _load_points(args)
    den = Dendrogram.read_csv(args.dendrogram)
    if den.n != ps.n:
        raise UltrafitError(f"dendrogram has {den.n} leaves but the input has {ps.n} points")
    base = None
    if args.baseline:
        base = Dendrogram.read_csv(args.baseline)
        if base.n != ps.n:
            raise UltrafitError(f"baseline has {base.n} leaves but the input has {ps.n} points")
    fields, ms = _eval_fields(den, ps, base)
    _emit(_report(args, params={"n": ps.n, "d": ps.d}, runtime_ms=ms, counters={}, **fields), args.report)
    return 0


def cmd_gen(args) -> int:
    ps = generate_uniform(args.n, args.dim, args.seed)
    save_csv(ps, args.output or sys.stdout)
    return 0


def _median_run(fn, repeats: int) -> tuple[float, object]:
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times), out


def cmd_bench(args) -> int:
    if args.backend:
        kernels.use_backend(args.backend)
    params = FitParams(c=args.c, multiplier=args.multiplier, seed=args.seed, lsh_safety=args.lsh_safety)
    rows = []
    for n in args.sizes:
        ps = generate_uniform(n, args.dim, args.seed)
        ms, res = _median_run(lambda: fit(ps, params), args.repeats)
        kt_c = res.counters.get("kt", {})
        cw_c = res.counters.get("cut_weights", {})
        row = {
            "n": n,
            "dim": args.dim,
            "c": args.c,
            "backend": kernels.backend(),
            "fast_ms": ms,
            "tree_ms": res.runtime_ms["tree"],
            "cut_weights_ms": res.runtime_ms["cut_weights"],
            "edges": kt_c.get("edges_unique"),
            "rounds": kt_c.get("rounds"),
            "collisions": kt_c.get("collisions"),
            "afn_queries": cw_c.get("queries"),
            "exact_ms": None,
            "slope": None,
        }
        if args.exact:
            row["exact_ms"], _ = _median_run(lambda: exact_fit(ps), args.repeats)
        if rows:
            prev = rows[-1]
            row["slope"] = math.log(ms / prev["fast_ms"]) / math.log(n / prev["n"])
        rows.append(row)
        log.info("n=%d fast=%.0f ms exact=%s", n, ms, row["exact_ms"])
    _write_rows(rows, args.output)
    return 0


def _write_rows(rows: list[dict], path: str | None) -> None:
    if path and path.endswith(".json"):
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=2, default=_json_default)
            fh.write("\n")
        return
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)
    finally:
        if path:
            fh.close()


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ultrafit", description="Approximate best ultrametric fit of Euclidean points.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", required=True)
    seed = _default_seed()

    f = sub.add_parser("fit", help="approximate fit (gamma-KT + approximate cut weights)")
    _add_input(f)
    f.add_argument("--output", required=True, help="dendrogram CSV to write")
    f.add_argument("--report", help="JSON report path (default: stdout)")
    f.add_argument("--c", type=_at_least_one, default=None, help="overall factor; gamma = alpha = sqrt(c)")
    f.add_argument("--gamma", type=_at_least_one, default=None)
    f.add_argument("--alpha", type=_at_least_one, default=None)
    f.add_argument("--multiplier", type=_multiplier, default="sqrt", help="strict, sqrt (default) or a number >= 1")
    f.add_argument("--seed", type=int, default=seed)
    f.add_argument("--lsh-width", type=_positive(float), default=4.0)
    f.add_argument("--lsh-safety", type=_positive(float), default=1.0)
    f.add_argument("--afn-cl", type=_positive(float), default=1.0, help="constant in the number of AFN directions")
    f.add_argument("--afn-cm", type=_positive(float), default=1.0, help="constant in the AFN candidate cap")
    f.add_argument("--r-min", type=_positive(float), default=None)
    f.add_argument("--r-max", type=_positive(float), default=None)
    f.add_argument("--dump-edges", metavar="CSV")
    f.add_argument("--dump-cutweights", metavar="CSV")
    f.add_argument("--eval", action="store_true", help="also compute distortion and approx factor (quadratic)")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("exact", help="optimal fit (exact MST + exact cut weights)")
    _add_input(e)
    e.add_argument("--output", required=True)
    e.add_argument("--report")
    e.add_argument("--seed", type=int, default=seed)
    e.add_argument("--dump-cutweights", metavar="CSV")
    e.add_argument("--no-eval", action="store_true", help="skip the distortion evaluation")
    e.set_defaults(func=cmd_exact)

    v = sub.add_parser("eval", help="distortion of a dendrogram against an (exact) baseline")
    _add_input(v)
    v.add_argument("--dendrogram", required=True)
    v.add_argument("--baseline", help="baseline dendrogram CSV (default: compute the exact fit)")
    v.add_argument("--report")
    v.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen", help="uniform random points in [0,1]^dim")
    g.add_argument("--n", type=_positive(int), required=True)
    g.add_argument("--dim", type=_positive(int), required=True)
    g.add_argument("--seed", type=int, default=seed)
    g.add_argument("--output")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="runtime of the approximate fit over a size grid")
    b.add_argument("--sizes", type=_sizes, required=True, help="comma-separated, e.g. 10000,20000,40000")
    b.add_argument("--dim", type=_positive(int), default=10)
    b.add_argument("--c", type=_at_least_one, default=9.0)
    b.add_argument("--multiplier", type=_multiplier, default="sqrt")
    b.add_argument("--lsh-safety", type=_positive(float), default=1.0)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--seed", type=int, default=seed)
    b.add_argument("--backend", choices=("compiled", "python"))
    b.add_argument("--exact", action="store_true", help="also time the exact fit")
    b.add_argument("--output", help="CSV (or .json) path; default stdout")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    args.argv = ["ultrafit", *argv]
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    if getattr(args, "cmd", None) == "bench" and args.repeats < 1:
        ap.error("--repeats must be >= 1")
    if getattr(args, "cmd", None) == "gen" and args.n < 1:
        ap.error("--n must be >= 1")
    try:
        return args.func(args)
    except (UltrafitError, OSError, ValueError) as exc:
        print(f"ultrafit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
