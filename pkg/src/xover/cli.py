"""Command-line interface: ``xover {oa,check,eval,sweep,search,simulate}``.

Exit codes: 0 success, 1 validation error, 2 computational degeneracy,
3 I/O error. Failures print a JSON object to standard error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any

import numpy as np

from . import __version__
from .design import (
    OaSpec,
    construct_oa,
    is_binary,
    is_oa_type1_strength2,
    is_uniform_on_subjects,
    parse_design,
    serialize_design,
)
from .errors import UnsupportedShapeError, XoverError
from .model import load_config
from .optimality import (
    REFERENCE_MODES,
    criteria,
    default_r_grid,
    exchange_search,
    exhaustive_search,
    reference_oa,
    sweep,
)
from .simulate import SimConfig, validate_dispersion


def num(x: float | None) -> float | None:
    """Round to 10 significant digits; non-finite values become null."""
    if x is None or not math.isfinite(x):
        return None
    return float(f"{x:.10g}")


def fmt(x: float) -> str:
    return f"{x:.10g}"


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _load_design(path: str, t: int | None):
    text = _read_text(path)
    if t is None:
        # infer t from the largest label present
        probe = parse_design(text, 26 if any(c.isalpha() for c in text) else 10**6)
        t = max(2, int(probe.layout.max()))
    return parse_design(text, t)


def _echo(args: argparse.Namespace, **extra: Any) -> dict[str, Any]:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {"version": __version__, "command": args.command, "args": params, **extra}


def _criteria_json(c) -> dict[str, Any]:
    return {
        "phiA": num(c.phiA),
        "logPhiD": num(c.logPhiD),
        "phiE": num(c.phiE),
        "zetas": [[num(z) for z in block] for block in c.per_block_zetas],
        "estimable": c.estimable,
    }


def cmd_oa(args) -> int:
    d = construct_oa(OaSpec(args.t, args.lam))
    _emit(serialize_design(d, letters=args.letters), args.out)
    return 0


def cmd_check(args) -> int:
    d = _load_design(args.design, args.t)
    try:
        oa_ok, lam = is_oa_type1_strength2(d)
    except UnsupportedShapeError:
        oa_ok, lam = False, None
    out = _echo(args, t=d.t, p=d.p, n=d.n)
    out.update(binary=is_binary(d), uniformOnSubjects=is_uniform_on_subjects(d), oaTypeI=oa_ok, **{"lambda": lam})
    _emit(_dump(out), args.out)
    return 0


def cmd_eval(args) -> int:
    d = _load_design(args.design, args.t)
    cfg = load_config(args.config)
    out = _echo(args, study=cfg.to_dict(), t=d.t, p=d.p, n=d.n)
    out.update(_criteria_json(criteria(d, cfg)))
    _emit(_dump(out), args.out)
    return 0


def cmd_sweep(args) -> int:
    d0 = _load_design(args.design, args.t)
    cfg = load_config(args.config)
    dstar = reference_oa(d0) if args.ref == "auto" else _load_design(args.ref, d0.t)
    grid = default_r_grid(args.r_min, args.r_max, args.steps)
    res = sweep(d0, dstar, cfg, grid, reference=args.ref_info)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "effA", "effD", "effE"])
    for row in res.rows:
        w.writerow([fmt(row.r), fmt(row.effA), fmt(row.effD), fmt(row.effE)])
    _emit(buf.getvalue(), args.out)
    summary = _echo(args, study=cfg.to_dict(), referenceDesign=serialize_design(dstar))
    for key, val in res.summary.items():
        summary[key] = val if key == "skipped" else num(val)
    summary["skippedR"] = [num(r) for r in res.skipped]
    text = _dump(summary)
    if args.summary:
        _emit(text, args.summary)
    elif args.out in (None, "-"):
        sys.stdout.write("\n" + text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_search(args) -> int:
    cfg = load_config(args.config)
    if args.mode == "exhaustive":
        res = exhaustive_search(args.t, args.n, cfg, args.criterion)
    else:
        res = exchange_search(args.t, args.n, cfg, args.criterion, restarts=args.restarts, seed=args.seed)
    out = _echo(args, study=cfg.to_dict())
    out.update(
        criterion=res.criterion,
        finite=res.finite,
        bestValue=num(res.best_value),
        evaluated=res.evaluated,
        optimaCount=len(res.optima_set),
        bestDesign=serialize_design(res.best_design).splitlines() if res.finite else None,
        bestIsOA=bool(res.finite and is_oa_type1_strength2(res.best_design)[0]),
    )
    if res.finite and args.out:
        _emit(serialize_design(res.best_design), args.out)
    _emit(_dump(out), args.json)
    return 0 if res.finite else 2


def cmd_simulate(args) -> int:
    d = _load_design(args.design, args.t)
    cfg = load_config(args.config)
    rep = validate_dispersion(d, cfg, sim=SimConfig(args.reps, args.seed), keep_estimates=bool(args.estimates_csv))
    out = _echo(args, study=cfg.to_dict())
    out.update(
        relFrobeniusError=num(rep.rel_frobenius_error),
        crossBlockRel=num(rep.cross_block_rel),
        reps=rep.reps_used,
        seed=rep.seed,
        empiricalG=[[num(x) for x in row] for row in rep.empirical_G],
        theoreticalG=[[num(x) for x in row] for row in rep.theoretical_G],
    )
    if args.estimates_csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in rep.estimates:
            w.writerow([fmt(x) for x in row])
        _emit(buf.getvalue(), args.estimates_csv)
    _emit(_dump(out), args.out)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.exit(_fail("UsageError", message, 1))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="xover", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oa", help="construct an orthogonal array OA_I(lambda t(t-1), t, t, 2)")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=int, default=1)
    p.add_argument("--letters", action="store_true", help="write labels as A, B, ...")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oa)

    p = sub.add_parser("check", help="report design class membership")
    p.add_argument("--design", required=True)
    p.add_argument("--t", type=int, help="treatment count (default: largest label)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eval", help="A/D/E criteria for a design")
    p.add_argument("--design", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--t", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="efficiency of a design along a correlation grid")
    p.add_argument("--design", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--ref", default="auto", help="'auto' (OA with matching n) or a design CSV")
    p.add_argument("--ref-info", choices=REFERENCE_MODES, default="direct",
                   help="how the reference information matrix is computed")
    p.add_argument("--t", type=int)
    p.add_argument("--r-min", type=float, default=-0.45)
    p.add_argument("--r-max", type=float, default=0.95)
    p.add_argument("--steps", type=int, default=141)
    p.add_argument("--out", help="efficiency CSV (default stdout)")
    p.add_argument("--summary", help="summary JSON path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("search", help="search the binary class for an optimal design")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--criterion", choices=["A", "D", "E"], default="A")
    p.add_argument("--mode", choices=["exhaustive", "exchange"], default="exhaustive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out", help="best-design CSV")
    p.add_argument("--json", help="result JSON path (default stdout)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("simulate", help="Monte Carlo check of the contrast dispersion")
    p.add_argument("--design", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--t", type=int)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--estimates-csv", help="raw per-replicate contrast estimates")
    p.set_defaults(func=cmd_simulate)
    return ap


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exitCode": code}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except XoverError as exc:
        return _fail(type(exc).__name__, str(exc), exc.exit_code)
    except OSError as exc:
        return _fail(type(exc).__name__, str(exc), 3)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
