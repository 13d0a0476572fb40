"""Command line interface: ``besselvar <subcommand> ...``.

Single-table outputs go to --out, else to $BESSELVAR_OUT/<subcommand>.csv
when that variable is set, else to stdout.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from typing import List, Optional

import numpy as np

from .config import OUT_ENV, RunConfig
from .errors import BesselVarError, ConfigError
from .experiments import EXPERIMENTS, emit_profile, run_suite, write_rows
from .kernels import POISSON_QUANTITIES, heat_eval, poisson_eval
from .measure import Grid, GridFunction, MeasureContext, interval_normalize
from .oscvar import TimeGrid, default_time_grid, operator_values
from .semigroup import apply, default_maximal_times, maximal
from .spaces import bmo_family, bmo_norm, cz_decompose, make_atom, validate_atom

KERNEL_QUANTITIES = POISSON_QUANTITIES + ("heat",)


# ------------------------------------------------------------------ helpers


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _lambda(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("lambda must be positive")
    return v


def _x_grid(text: str) -> np.ndarray:
    """'geom:lo:hi:n', 'lin:lo:hi:n' or a comma list."""
    parts = text.split(":")
    try:
        if parts[0] in ("geom", "lin") and len(parts) == 4:
            lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
            return np.geomspace(lo, hi, n) if parts[0] == "geom" else np.linspace(lo, hi, n)
        return np.array(_floats(text))
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"bad point specification {text!r}")


def read_function(ctx: MeasureContext, path: str, extend: str = "zero") -> GridFunction:
    """Read a CSV with columns node,value (header optional)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise ConfigError(f"{path}: bad row {rec!r}")
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two (node, value) rows")
    nodes, values = map(np.array, zip(*rows))
    outside = (0.0, 0.0) if extend == "zero" else (float(values[0]), float(values[-1]))
    return GridFunction(Grid.from_nodes(ctx, nodes), values, outside, os.path.basename(path))


def _open_out(args, name: str):
    if args.out:
        return open(args.out, "w", newline="")
    env = os.environ.get(OUT_ENV)
    if env:
        os.makedirs(env, exist_ok=True)
        return open(os.path.join(env, f"{name}.csv"), "w", newline="")
    return contextlib.nullcontext(sys.stdout)


def _write_table(args, name: str, header: List[str], rows):
    with _open_out(args, name) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _time_grid(args, f: GridFunction, kind) -> TimeGrid:
    if args.tmax is None:
        return default_time_grid(f, kind, args.slots, args.refine)
    return TimeGrid.dyadic(args.tmax, args.slots, args.refine)


# -------------------------------------------------------------- subcommands


def cmd_kernel_eval(args):
    ctx = MeasureContext(args.lam)
    if args.points:
        pts = np.loadtxt(args.points, delimiter=",", ndmin=2, comments="#", skiprows=args.skip_header)
        t, x, y = pts[:, 0], pts[:, 1], pts[:, 2]
    else:
        if args.t is None or args.x is None or args.y is None:
            raise ConfigError("give --t, --x and --y, or --points")
        t, x, y = np.broadcast_arrays(*(np.array(v, float) for v in (args.t, args.x, args.y)))
    if args.kind == "heat":
        e = heat_eval(ctx, t, x, y)
    else:
        e = poisson_eval(ctx, args.kind, t, x, y)
    _write_table(args, "kernel-eval", ["t", "x", "y", "value", "est_error"], zip(t, x, y, e.value, e.error))
    return 0


def cmd_apply(args):
    ctx = MeasureContext(args.lam)
    f = read_function(ctx, args.f, args.extend)
    out_grid = Grid.from_nodes(ctx, args.x_grid) if args.x_grid is not None else None
    g = apply(ctx, args.kind, f, args.t, out_grid)
    _write_table(args, "apply", ["x", "value"], zip(g.grid.nodes, g.values))
    return 0


def cmd_maximal(args):
    ctx = MeasureContext(args.lam)
    f = read_function(ctx, args.f, args.extend)
    times = default_maximal_times(f, args.kind, args.q, args.count, args.tmax)
    rows = []
    for x in args.x_grid:
        r = maximal(ctx, args.kind, f, float(x), times)
        rows.append((x, r.value, r.gap, r.t_argmax))
    _write_table(args, "maximal", ["x", "value", "refinement_gap", "t_argmax"], rows)
    return 0


def _operator(args, which: str):
    ctx = MeasureContext(args.lam)
    f = read_function(ctx, args.f, args.extend)
    grid = _time_grid(args, f, args.kind)
    ov = operator_values(ctx, args.kind, [f], args.x_grid, grid, args.rho)
    vals = getattr(ov, which)[0]
    gaps = getattr(ov, f"{which}_gap")[0]
    desc = grid.describe()
    _write_table(
        args, which, ["x", "value", "stability_gap", "time_grid"], [(x, v, g, desc) for x, v, g in zip(ov.xs, vals, gaps)]
    )
    return 0


def cmd_oscillation(args):
    return _operator(args, "oscillation")


def cmd_variation(args):
    if not args.rho > 2:
        raise ConfigError("the variation operator needs --rho > 2")
    return _operator(args, "variation")


def cmd_cz(args):
    ctx = MeasureContext(args.lam)
    f = read_function(ctx, args.f, "zero")
    cz = cz_decompose(ctx, f, args.eta)
    prefix = args.out or os.path.join(os.environ.get(OUT_ENV, "."), "cz_")
    d = os.path.dirname(prefix)
    if d:
        os.makedirs(d, exist_ok=True)
    nodes = f.grid.nodes
    write_rows(prefix + "g.csv", [{"node": float(x), "value": float(v)} for x, v in zip(nodes, cz.good.values)])
    intervals = []
    for j, ((b, iv), (lo, hi)) in enumerate(zip(cz.bad_parts, cz.cells)):
        write_rows(
            prefix + f"bad_{j}.csv",
            [{"node": float(nodes[i]), "value": float(b.values[i])} for i in range(lo, hi + 1)],
        )
        intervals.append({"j": j, "left": iv.left, "right": iv.right, "first_cell": lo, "last_cell": hi})
    with open(prefix + "intervals.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["j", "left", "right", "first_cell", "last_cell"])
        w.writeheader()
        w.writerows(intervals)
    print(json.dumps(cz.constants, default=float))
    return 0


def cmd_bmo(args):
    ctx = MeasureContext(args.lam)
    f = read_function(ctx, args.f, args.extend)
    opts = dict(kv.split("=", 1) for kv in args.family.split(",") if kv)
    level = int(opts.get("level", 0))
    r_range = None
    if "rmin" in opts or "rmax" in opts:
        r_range = (float(opts["rmin"]), float(opts["rmax"]))
    fam = bmo_family(f.grid, r_range, level)
    value = bmo_norm(ctx, f, fam)
    _write_table(args, "bmo-norm", ["value", "intervals", "family"], [(value, len(fam), args.family or "level=0")])
    return 0


def cmd_atom(args):
    ctx = MeasureContext(args.lam)
    x, r = args.interval
    rng = np.random.default_rng(args.seed)
    a = make_atom(ctx, interval_normalize(x, r), args.shape, rng=rng)
    rep = validate_atom(ctx, a)
    _write_table(args, "atom", ["node", "value"], zip(a.profile.grid.nodes, a.profile.values))
    print(json.dumps({"passed": rep.passed, **{k: getattr(rep, k) for k in ("support_slack", "size_slack", "mean_slack")}}),
          file=sys.stderr)
    return 0 if rep.passed else 1


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.experiment:
        names = [n for part in args.experiment for n in part.split(",") if n]
        for n in names:
            if n not in EXPERIMENTS and n != "all":
                raise _UsageError(f"unknown experiment {n!r}; valid: {', '.join(EXPERIMENTS)}")
        cfg.experiments = names
    if getattr(args, "all", False):
        cfg.experiments = ["all"]
    if args.lambdas:
        cfg.lambdas = args.lambdas
    if args.seed is not None:
        cfg.seed = args.seed
    if args.scale is not None:
        cfg.scale = args.scale
    if args.out:
        cfg.out_dir = args.out
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    cfg.validate()
    return cfg


class _UsageError(Exception):
    pass


def cmd_verify(args):
    if not args.all and not args.experiment and not args.config:
        raise _UsageError("give --all, --experiment NAME[,NAME...] or --config FILE")
    cfg = _config_from_args(args)

    def progress(r):
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.label:40s} {r.runtime:8.2f}s", flush=True)

    reports = run_suite(cfg, write=True, progress=progress)
    ok = all(r.passed for r in reports)
    print(f"{'all passed' if ok else 'FAILURES'}: {sum(r.passed for r in reports)}/{len(reports)}; "
          f"summary in {os.path.join(cfg.output_dir(), 'summary.json')}")
    return 0 if ok else 1


def cmd_profile(args):
    cfg = _config_from_args(args)
    sections = tuple(s for s in args.sections.split(",") if s) if args.sections is not None else (
        "theta-quad", "halfline-quad", "variation-dp", "cz")
    rows = emit_profile(cfg, sections)
    args.out = args.table
    _write_table(args, "profile", ["section", "parameter", "seconds"],
                 [(r["section"], r["parameter"], r["seconds"]) for r in rows])
    return 0


# ------------------------------------------------------------------- parser


def _common(p, kind=True, f=True):
    p.add_argument("--lambda", dest="lam", type=_lambda, required=True, help="Bessel parameter lambda > 0")
    if kind:
        p.add_argument("--kind", choices=["poisson", "heat"], default="poisson")
    if f:
        p.add_argument("--f", required=True, help="CSV of node,value rows")
        p.add_argument("--extend", choices=["zero", "constant"], default="zero",
                       help="value of f outside its nodes (default zero)")
    p.add_argument("--out", help="output CSV (default: $%s/<command>.csv or stdout)" % OUT_ENV)


def _time_args(p):
    p.add_argument("--tmax", type=float, help="largest anchor time (default: 10 diam supp f, squared for heat)")
    p.add_argument("--slots", type=int, default=40)
    p.add_argument("--refine", type=int, default=8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="besselvar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    F = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("kernel-eval", help="evaluate kernels and derivatives", formatter_class=F,
                       epilog="columns: t,x,y,value,est_error")
    p.add_argument("--lambda", dest="lam", type=_lambda, required=True)
    p.add_argument("--kind", choices=KERNEL_QUANTITIES, default="p",
                   help="p (Poisson), its derivatives, or heat")
    p.add_argument("--t", type=_floats)
    p.add_argument("--x", type=_floats)
    p.add_argument("--y", type=_floats)
    p.add_argument("--points", help="CSV of t,x,y rows")
    p.add_argument("--skip-header", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel_eval)

    p = sub.add_parser("apply", help="apply a semigroup at one time", formatter_class=F, epilog="columns: x,value")
    _common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x-grid", type=_x_grid, help="output points (default: the grid of f plus a decade each side)")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("maximal", help="maximal function on a geometric time grid", formatter_class=F,
                       epilog="columns: x,value,refinement_gap,t_argmax")
    _common(p)
    p.add_argument("--x-grid", type=_x_grid, required=True)
    p.add_argument("--tmax", type=float)
    p.add_argument("--q", type=float, default=0.8)
    p.add_argument("--count", type=int, default=60)
    p.set_defaults(func=cmd_maximal)

    for name, func in (("oscillation", cmd_oscillation), ("variation", cmd_variation)):
        p = sub.add_parser(name, help=f"{name} operator", formatter_class=F,
                           epilog="columns: x,value,stability_gap,time_grid")
        _common(p)
        p.add_argument("--rho", type=float, default=3.0)
        p.add_argument("--x-grid", type=_x_grid, required=True,
                       help="'geom:lo:hi:n', 'lin:lo:hi:n' or comma list")
        _time_args(p)
        p.set_defaults(func=func)

    p = sub.add_parser("cz-decompose", help="Calderon-Zygmund decomposition", formatter_class=F,
                       epilog="writes <prefix>g.csv (node,value), <prefix>bad_<j>.csv (node,value),\n"
                              "<prefix>intervals.csv (j,left,right,first_cell,last_cell);\n"
                              "f must sit on nodes k*delta, k = 0..2^J - 1")
    p.add_argument("--lambda", dest="lam", type=_lambda, required=True)
    p.add_argument("--f", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--out", help="output prefix (default: $%s/cz_)" % OUT_ENV)
    p.set_defaults(func=cmd_cz)

    p = sub.add_parser("bmo-norm", help="BMO lower bound over an interval lattice", formatter_class=F,
                       epilog="columns: value,intervals,family")
    _common(p, kind=False)
    p.add_argument("--family", default="level=0", help="level=K[,rmin=R,rmax=R]")
    p.set_defaults(func=cmd_bmo)

    p = sub.add_parser("atom", help="build and validate an H^1 atom", formatter_class=F, epilog="columns: node,value")
    p.add_argument("--lambda", dest="lam", type=_lambda, required=True)
    p.add_argument("--interval", type=_floats, required=True, help="center,radius")
    p.add_argument("--shape", choices=["haar", "bump-pair", "random"], default="haar")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_atom)

    for name, func in (("verify", cmd_verify), ("profile", cmd_profile)):
        p = sub.add_parser(name, help="run the acceptance suite" if name == "verify" else "time the hot paths",
                           formatter_class=F,
                           epilog=("experiments: " + ", ".join(EXPERIMENTS)) if name == "verify"
                           else "columns: section,parameter,seconds")
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--lambda", dest="lambdas", type=_floats, help="comma-separated lambda values")
        p.add_argument("--seed", type=int)
        p.add_argument("--scale", type=float, help="multiplier for trial counts")
        p.add_argument("--experiment", action="append", default=[])
        if name == "verify":
            p.add_argument("--all", action="store_true")
            p.add_argument("--workers", type=int)
            p.add_argument("--out", help="output directory (default: $%s or ./besselvar-out)" % OUT_ENV)
        else:
            p.add_argument("--sections", help="comma list of theta-quad,halfline-quad,variation-dp,cz")
            p.add_argument("--table", help="output CSV")
            p.add_argument("--out", help=argparse.SUPPRESS)
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.error(str(exc))
    except BesselVarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
