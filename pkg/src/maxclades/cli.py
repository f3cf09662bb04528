"""Command-line entry point: exact tables, distributions, constants, simulation, verification.

Every command echoes its resolved configuration to stderr and writes its
result to stdout or, with ``--out``, atomically to a file.  Reals are printed
with 17 significant digits so output round-trips and repeats byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numba as nb

from . import exact
from .errors import MaxCladesError
from .mc import MODELS, SimConfig, fmt, raw_csv, run_experiment, summaries_csv, summaries_json

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def resolve_cutoff(rule: str, n: int) -> int:
    """Cutoff N from ``sqrt``, ``sqrtloglog`` or an explicit integer."""
    if rule == "sqrt":
        return math.ceil(math.sqrt(n))
    if rule == "sqrtloglog":
        return math.ceil(math.sqrt(n * math.log(math.log(n)))) if n >= 3 else n
    try:
        N = int(rule)
    except ValueError:
        raise UsageError(f"bad --cutoff {rule!r}: use sqrt, sqrtloglog or an integer") from None
    if N < 0:
        raise UsageError("--cutoff must be nonnegative")
    return min(N, n)


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    folder = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(out))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _echo(command: str, config: dict) -> dict:
    meta = {"command": command, "config": config}
    print(json.dumps(meta, sort_keys=True), file=sys.stderr)
    return meta


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(meta: dict, **body) -> str:
    return json.dumps({"meta": meta, **body}, indent=2, sort_keys=True) + "\n"


def _set_threads(k: int) -> None:
    if k < 1:
        raise UsageError("--threads must be at least 1")
    nb.set_num_threads(min(k, nb.config.NUMBA_NUM_THREADS))


# Commands -------------------------------------------------------------------

def cmd_exact(args) -> int:
    nmax = args.nmax if args.nmax is not None else (args.n if args.n is not None else 100)
    if nmax < 1:
        raise UsageError("--nmax must be at least 1")
    tables = exact.build_psi(nmax, exact.build_mu_nu(nmax))
    cutoffs = [resolve_cutoff(args.cutoff, n) for n in range(1, nmax + 1)]
    meta = _echo("exact", {"nmax": nmax, "cutoff": args.cutoff})
    header = ("n", "mu", "nu", "psi", "var_G", "N", "var_Gprime")
    rows = []
    for n, N in zip(range(1, nmax + 1), cutoffs):
        rows.append([str(n), fmt(tables.mu[n]), fmt(tables.nu[n]), fmt(tables.psi[n]),
                     fmt(exact.var_G_exact(n, tables)), str(N),
                     fmt(exact.var_Gprime_exact(n, N, tables))])
    if args.format == "json":
        _write(_json_text(meta, rows=[dict(zip(header, r)) for r in rows]), args.out)
    else:
        _write(_csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_dist(args) -> int:
    cap = args.cap if args.cap is not None else (args.n if args.n is not None else 64)
    ps = args.p or [1.5, 2.5, 3.0]
    dist = exact.build_f_dist(cap)
    meta = _echo("dist", {"cap": cap, "p": ps})
    header = ["n", "mean", "variance", "m3", "m4", "p_single"]
    header += [f"abs_{fmt(p)}" for p in ps] + [f"sum_f_abs_{fmt(p)}" for p in ps]
    rows = []
    for n in range(1, cap + 1):
        row = [str(n), fmt(dist.mean(n))]
        row += [fmt(exact.central_moment(n, k, dist)) for k in (2, 3, 4)]
        row.append(fmt(dist[n][1]))
        row += [fmt(exact.abs_central_moment(n, p, dist)) for p in ps]
        row += [fmt(exact.sum_f_abs_exact(n, p, dist)) for p in ps]
        rows.append(row)
    if args.format == "json":
        pmf = {str(n): [fmt(x) for x in dist[n]] for n in range(cap + 1)}
        _write(_json_text(meta, moments=[dict(zip(header, r)) for r in rows], pmf=pmf), args.out)
    else:
        _write(_csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_constants(args) -> int:
    nmax = args.nmax if args.nmax is not None else 10**6
    lam = args.lam if args.lam is not None else 2.0
    K = args.chain_depth if args.chain_depth is not None else 20
    meta = _echo("constants", {"nmax": nmax, "lambda": lam, "chain_depth": K})
    a = exact.alpha_closed()
    s = exact.alpha_series(nmax)
    alt = math.fsum((-1) ** (k - 1) * exact.e_fk_ct(k) for k in range(1, K + 1))
    items = [
        ("alpha_closed", a),
        ("alpha_series", s),
        ("alpha_series_error", abs(s - a)),
        ("alternating_chain_sum", alt),
        ("alternating_chain_error", abs(alt - a)),
        ("hyp1f1_1_1_m2", exact.kummer_1f1_unit(1.0, -2.0)),
        ("hyp1f1_1_lambda_m2", exact.kummer_1f1_unit(lam, -2.0)),
        ("e_f_ct_lambda", exact.e_f_ct_lambda(lam)),
    ]
    if lam > 1:
        trunc = min(nmax, 10**5)
        items.append(("e_F_ct_lambda", exact.e_F_ct_lambda(lam)))
        items.append(("genfunc_residual", exact.genfunc_residual(lam, trunc)))
    if args.format == "json":
        _write(_json_text(meta, constants={k: fmt(v) for k, v in items}), args.out)
    else:
        _write(_csv_text(("name", "value"), [(k, fmt(v)) for k, v in items]), args.out)
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    model = args.model or "bst-split"
    K = args.chain_depth if args.chain_depth is not None else 20
    R = args.samples if args.samples is not None else 1000
    common = dict(model=model, K=K, R=R, seed=args.seed, workers=args.threads,
                  p=tuple(args.p) if args.p else SimConfig.p)
    if model == "ct-clock":
        return SimConfig(lam=args.lam if args.lam is not None else 1.0,
                         cap=args.cap if args.cap is not None else SimConfig.cap,
                         N=None if args.cutoff == "sqrt" else int(args.cutoff), **common)
    if args.n is None:
        raise UsageError("simulate needs --n for the search-tree models")
    return SimConfig(n=args.n, N=resolve_cutoff(args.cutoff, args.n), **common)


def cmd_simulate(args) -> int:
    try:
        config = _sim_config(args)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _set_threads(args.threads)
    meta = _echo("simulate", config.resolved())
    result = run_experiment(config)
    if args.raw:
        if args.raw not in result.summaries:
            raise UsageError(f"--raw {args.raw!r} is not a recorded statistic")
        _write(raw_csv(result, args.raw), args.out)
    elif args.format == "json":
        _write(summaries_json(result, {"command": meta["command"]}), args.out)
    else:
        _write(summaries_csv(result), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    _set_threads(args.threads)
    _echo("verify", {"quick": args.quick, "threads": args.threads})
    results = run_all(quick=args.quick, workers=args.threads,
                      report=lambda r: print(r.line(), flush=True))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {', '.join(map(str, failed))}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_OK


# Parser ------------------------------------------------------------------------

def _positive_float(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--n", type=int, help="tree size")
    g.add_argument("--nmax", type=int, help="largest n in exact tables or series")
    g.add_argument("--cap", type=int, help="distribution cap, or node cap for clock trees")
    g.add_argument("--samples", type=int, help="number of Monte Carlo replicates")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--model", choices=MODELS)
    g.add_argument("--lambda", dest="lam", type=_positive_float, help="doomsday clock rate")
    g.add_argument("--cutoff", default="sqrt", help="sqrt (default), sqrtloglog or an integer")
    g.add_argument("--chain-depth", type=int, help="longest green chain to count")
    g.add_argument("--p", type=float, action="append", help="absolute moment order (repeatable)")
    g.add_argument("--out", help="write to this file instead of stdout")
    g.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = _Parser(prog="maxclades", description="Maximal clades in random binary search trees.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("exact", parents=[common], help="mu/nu/psi tables with var G and var G'")
    sub.add_parser("dist", parents=[common], help="exact distribution moments of F")
    sub.add_parser("constants", parents=[common], help="alpha, 1F1 values and clock-tree formulas")
    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo summaries")
    sp.add_argument("--raw", metavar="STAT", help="emit raw samples of one statistic instead")
    vp = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    vp.add_argument("--quick", action="store_true", help="fewer replicates")
    return parser


COMMANDS = {"exact": cmd_exact, "dist": cmd_dist, "constants": cmd_constants,
            "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, MaxCladesError) as e:
        print(f"maxclades {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
