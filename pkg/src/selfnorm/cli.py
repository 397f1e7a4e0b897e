"""Command-line front end: run, verify, sweep-breakdown, moments, oracle."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .breakdown import sweep_breakdown
from .config import load_config, parse_law_string
from .distributions import CohortSpec, moments
from .errors import ConfigError, SelfNormError
from .oracles import crude_mc_tail, gaussian_selfnorm_tail, rademacher_tail
from .runner import rows_to_csv, rows_to_json, run_grid, with_overrides
from .tilted import conjugate_estimate
from .verify import SUITES, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_STRICT = 0, 1, 2


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = with_overrides(load_config(args.config), args.seed, args.out, args.format)
    rows = run_grid(cfg, args.jobs)
    text = rows_to_json(rows) if cfg.out_format == "json" else rows_to_csv(rows)
    if cfg.out_path:
        Path(cfg.out_path).write_text(text, encoding="utf-8")
        violated = sum(r.hypothesis_violated for r in rows)
        print(f"{len(rows)} rows -> {cfg.out_path} ({violated} with violated hypotheses)")
    else:
        sys.stdout.write(text)
    if args.strict and any(r.hypothesis_violated for r in rows):
        print("strict: hypothesis violated on at least one row", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suites(args.suite)
    _emit(json.dumps(report, indent=1) + "\n", args.out)
    for name, s in report["suites"].items():
        print(f"{name}: {s['passed']}/{s['total']} {'ok' if s['ok'] else 'FAILED'}", file=sys.stderr)
    return EXIT_OK if report["ok"] else 3


def cmd_sweep(args) -> int:
    dist = parse_law_string(args.law)
    rows = sweep_breakdown(dist, _floats(args.c), _ints(args.n), args.tau)
    if args.format == "json":
        text = json.dumps([asdict(r) for r in rows], indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = list(asdict(rows[0]))
        w.writerow(cols)
        for r in rows:
            w.writerow(["%.17g" % v if isinstance(v, float) else v for v in asdict(r).values()])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


def cmd_moments(args) -> int:
    tm = moments(parse_law_string(args.law), args.b)
    _emit(json.dumps(asdict(tm), indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    dist = parse_law_string(args.law)
    cohort = CohortSpec.iid(dist, args.n)
    method = args.method
    if method == "BINOMIAL":
        t = rademacher_tail(args.n, args.x)
        res = {"p": t.p, "log_p": t.log_p, "abs_err": t.abs_err, "method": t.method.value}
    elif method == "T_INTEGRAL":
        t = gaussian_selfnorm_tail(args.n, args.x)
        res = {"p": t.p, "log_p": t.log_p, "abs_err": t.abs_err, "method": t.method.value}
    else:
        if args.seed is None:
            raise ConfigError("--seed is required for Monte Carlo oracles")
        if method == "CRUDE_MC":
            t = crude_mc_tail(cohort, args.x, args.samples, args.seed)
            res = {"p": t.p, "se": t.abs_err, "method": t.method.value}
        else:
            e = conjugate_estimate(cohort, args.x, args.samples, args.seed)
            res = {"p": e.p_hat, "se": e.se, "method": "TILTED_MC", "surrogate": e.surrogate}
    res = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in res.items()}
    _emit(json.dumps({"n": args.n, "x": args.x, **res}) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="selfnorm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evaluate a config grid")
    r.add_argument("config")
    r.add_argument("--strict", action="store_true", help="exit 2 if any row violates a hypothesis")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run self-check suites")
    v.add_argument("suite", nargs="?", default="all", choices=SUITES + ("all",))
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep-breakdown", help="exact ratios along x = c n^tau")
    s.add_argument("--law", default="rademacher")
    s.add_argument("--c", default="0,1,2")
    s.add_argument("--n", default="256,1024,4096,16384")
    s.add_argument("--tau", type=float, default=0.25)
    s.add_argument("--out")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("moments", help="truncated moments at scale b")
    m.add_argument("--law", required=True)
    m.add_argument("--b", type=float, required=True)
    m.add_argument("--out")
    m.set_defaults(func=cmd_moments)

    o = sub.add_parser("oracle", help="reference tail probability")
    o.add_argument("--law", default="rademacher")
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--x", type=float, required=True)
    o.add_argument("--method", choices=("BINOMIAL", "T_INTEGRAL", "CRUDE_MC", "TILTED_MC"), default="BINOMIAL")
    o.add_argument("--samples", type=int, default=100_000)
    o.add_argument("--seed", type=int)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SelfNormError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
