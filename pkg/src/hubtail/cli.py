"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 computation error, 3 oracle-check failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__, streams
from .constants import EXCEED_BATCH, k_of_a_constant
from .errors import HubtailError
from .graphstats import EDGE_CAP, WeightVector, sample_edge_count, summarize
from .oracle import run_checks
from .rare_event import (
    CONVERGENCE_COLUMNS,
    EstimatorConfig,
    convergence_table,
    estimate,
    hub_empirical_law,
    ks_by_coordinate,
    limit_hub_law_sample,
    resolve_eps,
)
from .weights import parse_distribution

SCHEMA_VERSION = 1
DEFAULT_DIST = "pareto:alpha=2,xmin=1"
# flags that never change numeric output and are left out of the echoed config
_NOT_ECHOED = {"workers", "out", "config", "command", "func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _eps(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"eps must be 'auto' or a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("eps must be positive")
    return value


def _n_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n list {text!r}") from None


def _clean(obj):
    """Make an object JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump_json(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2) + "\n"


def _csv_text(header, rows, comments: dict) -> str:
    buf = io.StringIO()
    for key, value in comments.items():
        buf.write(f"# {key}: {json.dumps(_clean(value), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _config(args, **overrides) -> EstimatorConfig:
    kw = dict(
        method=getattr(args, "method", "planted"),
        trials=args.trials,
        seed=args.seed,
        eps=getattr(args, "eps", "auto"),
        k_override=getattr(args, "k_override", None),
        batch=args.batch,
        workers=args.workers,
        total=getattr(args, "total", False),
        remainder_trials=getattr(args, "remainder_trials", None),
    )
    kw.update(overrides)
    return EstimatorConfig(**kw)


def cmd_constants(args) -> int:
    d = parse_distribution(args.dist)
    p = k_of_a_constant(d, args.a, args.trials, args.seed, batch=args.batch, workers=args.workers)
    payload = {"schema_version": SCHEMA_VERSION, "dist": d.describe(), **p.to_dict(), "config": _echo(args)}
    _emit(args, _dump_json(payload))
    return 0


def cmd_simulate(args) -> int:
    d = parse_distribution(args.dist)
    mu = d.mean()
    if args.eps == "auto":
        if args.a is None:
            raise UsageError("--eps auto needs --a (eps = eta(a) / 2)")
        _, eps, _ = resolve_eps(d, args.a, EstimatorConfig(trials=1))
    else:
        eps = args.eps
    edges = not args.no_edges and args.n <= EDGE_CAP
    rows = []
    for trial in range(args.trials):
        rng = streams.stream(args.seed, streams.TAG_WEIGHTS, args.n, trial)
        wv = WeightVector(np.asarray(d.sample(rng, args.n), dtype=float), mu)
        e = sample_edge_count(wv, rng) if edges else None
        g = summarize(wv, eps, top=2, E_n=e)
        tops = list(g.top_weights) + [None] * (2 - len(g.top_weights))
        rows.append([trial, g.S_n, g.M_n, g.E_n, g.N_eps, *tops])
    header = ["trial", "S_n", "M_n", "E_n", "N_eps", "top1", "top2"]
    meta = {"schema_version": SCHEMA_VERSION, "dist": d.describe(), "mu": mu, "eps": eps, "config": _echo(args)}
    if args.emit == "json":
        _emit(args, _dump_json({**meta, "rows": [dict(zip(header, r)) for r in rows]}))
    else:
        _emit(args, _csv_text(header, rows, meta))
    return 0


def cmd_estimate(args) -> int:
    d = parse_distribution(args.dist)
    result = estimate(d, args.n, args.a, _config(args), target=args.target)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "dist": d.describe(),
        "target": args.target,
        "n": args.n,
        "a": args.a,
        "estimates": {k: v.to_dict() for k, v in result.items() if k != "z"},
        "config": _echo(args),
    }
    if "z" in result:
        payload["agreement_z"] = result["z"]
    _emit(args, _dump_json(payload))
    return 0


def cmd_convergence(args) -> int:
    d = parse_distribution(args.dist)
    remainder = args.remainder_trials
    if remainder is None and not args.total:
        remainder = 0
    rows = convergence_table(d, args.a, args.n, _config(args, remainder_trials=remainder), k_trials=args.k_trials)
    meta = {"schema_version": SCHEMA_VERSION, "dist": d.describe(), "config": _echo(args)}
    flagged = [r["n"] for r in rows if not math.isfinite(r["ratio"])]
    if flagged:
        meta["ratio_undefined_at_n"] = flagged
        print(f"warning: asymptote is zero at n = {flagged}; ratio undefined", file=sys.stderr)
    if args.output == "json":
        _emit(args, _dump_json({**meta, "rows": rows}))
    else:
        _emit(args, _csv_text(CONVERGENCE_COLUMNS, [[r[c] for c in CONVERGENCE_COLUMNS] for r in rows], meta))
    return 0


def cmd_hublaw(args) -> int:
    d = parse_distribution(args.dist)
    emp = hub_empirical_law(d, args.n, args.a, _config(args))
    lim = limit_hub_law_sample(d, args.a, args.limit_trials, args.seed)
    k = lim.tuples.shape[1]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "dist": d.describe(),
        "n": args.n,
        "a": args.a,
        "k": k,
        "eps": emp.eps,
        "empirical_points": int(emp.tuples.shape[0]),
        "ess": emp.ess,
        "limit_points": int(lim.tuples.shape[0]),
        "limit_acceptance": lim.acceptance,
        "empty": emp.empty,
        "config": _echo(args),
    }
    if emp.empty:
        print("warning: no planted trial hit the threshold; empirical hub law is empty", file=sys.stderr)
        summary["ks"] = None
    else:
        summary["ks"] = ks_by_coordinate(emp.tuples, lim.tuples, weights_a=emp.weights)
    header = ["source", "weight"] + [f"top{j + 1}" for j in range(k)]
    rows = [["empirical", w, *t] for w, t in zip(emp.weights.tolist(), emp.tuples.tolist())]
    rows += [["limit", 1.0 / lim.tuples.shape[0], *t] for t in lim.tuples.tolist()]
    if args.output == "json":
        _emit(args, _dump_json({**summary, "empirical": emp.tuples, "limit": lim.tuples}))
    else:
        _emit(args, _csv_text(header, rows, summary))
    return 0


def cmd_oracle(args) -> int:
    results = run_checks(args.check, seed=args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 3


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hubtail", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file with flag values; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, trials, output=("json", "csv"), default_output="json", batch=1000):
        p.add_argument("--dist", default=DEFAULT_DIST)
        p.add_argument("--trials", type=int, default=trials)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--batch", type=int, default=batch, help="trials per deterministic partition")
        p.add_argument("--workers", type=int, default=None, help="worker threads (default $HUBTAIL_WORKERS or 1)")
        if output:
            p.add_argument("--output", choices=output, default=default_output)
        p.add_argument("--out", help="write to this file instead of stdout")

    p = sub.add_parser("constants", help="eta(a), k(a) and the Monte Carlo prefactor K(a)")
    common(p, 10**6, output=("json",), batch=EXCEED_BATCH)
    p.add_argument("--a", type=float, required=True)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("simulate", help="per-realisation S_n, M_n, E_n, N_eps and top weights")
    common(p, 1000, output=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=_eps, default="auto")
    p.add_argument("--a", type=float, default=None, help="used to resolve --eps auto")
    p.add_argument("--emit", choices=("csv", "json"), default="csv")
    p.add_argument("--no-edges", action="store_true", help="skip the O(n^2) edge draw")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="tail probability of S_n, M_n or E_n")
    common(p, 100_000, output=("json",))
    p.add_argument("--target", choices=("sn", "mn", "en"), default="sn")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--method", choices=("naive", "planted", "both"), default="planted")
    p.add_argument("--eps", type=_eps, default="auto")
    p.add_argument("--k-override", type=int, default=None)
    p.add_argument("--total", action="store_true", help="add the naive N != k part for an unbiased total")
    p.add_argument("--remainder-trials", type=int, default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("convergence", help="planted estimates against the asymptote over several n")
    common(p, 100_000, default_output="csv")
    p.add_argument("--n", type=_n_list, required=True, help="comma-separated list, e.g. 250,500,1000")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--eps", type=_eps, default="auto")
    p.add_argument("--k-trials", type=int, default=10**6, help="Monte Carlo trials behind K(a)")
    p.add_argument("--total", action="store_true", help="ratio of the full tail, adding the naive N != k part")
    p.add_argument("--remainder-trials", type=int, default=None, help="naive trials for N != k (default 0, or trials/10 with --total)")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("hublaw", help="empirical hub weights / n against the limit law")
    common(p, 40_000, default_output="csv")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--eps", type=_eps, default="auto")
    p.add_argument("--limit-trials", type=int, default=10_000)
    p.set_defaults(func=cmd_hublaw)

    p = sub.add_parser("oracle", help="exact-oracle and bound verifier suite")
    p.add_argument("--check", choices=("all", "bounds", "pmf", "enumeration"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if isinstance(cfg.get("n"), str):
        cfg["n"] = _n_list(cfg["n"])
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
            for a in sp._actions:
                if a.dest in cfg:
                    a.required = False


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (HubtailError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
