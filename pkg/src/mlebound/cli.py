"""Command-line entry point: ``mlebound {bound,simulate,table1,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import matrix
from .bound import LowAcceptance, closed_form_normal, general_bound
from .mc import QuadratureError, SimConfig, standardized_trials, table1
from .model import DegenerateSample, NormalModel, NormalParams
from .testfn import get_test_function
from .verify import run_checks

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (
    matrix.NotPositiveDefinite,
    matrix.EigenNonConvergence,
    DegenerateSample,
    LowAcceptance,
    QuadratureError,
)

BOUND_COLUMNS = ["n", "mode", "r1_term", "mse_term", "a1_term", "a2_term", "total", "epsilon", "moment_source", "std_err"]
TABLE_COLUMNS = ["n", "trials", "mean_h", "q_h", "std_err", "bound", "error"]


class UsageError(Exception):
    pass


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _json_value(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else _fmt(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_rows(rows: list[dict], columns: list[str], fmt: str, stream) -> None:
    if fmt == "csv":
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    else:
        for row in rows:
            stream.write(json.dumps({c: _json_value(row[c]) for c in columns}) + "\n")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(float(tok)) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or comma list, got {text!r}")
    if not values or any(float(tok) != int(float(tok)) for tok in text.split(",") if tok.strip()):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return values


def _epsilon(text: str) -> float:
    if text.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"epsilon must be a number or 'inf', got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("epsilon must be positive")
    return value


def _workers(text: str):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"workers must be a positive integer or 'auto', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


def _bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="file of 'key = value' lines mirroring the flags; flags win")
    common.add_argument("--mu", type=float, default=1.0)
    common.add_argument("--sigma2", type=float, default=1.0)
    common.add_argument("--seed", type=_seed, default=None, help="master seed (fallback: $MLEBOUND_SEED, then 0)")
    common.add_argument("--h", default="inverse-quadratic", help="test function name")
    common.add_argument("--workers", type=_workers, default=1)
    common.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    common.add_argument("--output", default="-", help="output path, '-' for stdout")

    parser = argparse.ArgumentParser(
        prog="mlebound",
        description="Normal-approximation error bounds for MLEs, with Monte Carlo checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", parents=[common], help="compute the error bound")
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--mode", choices=["general", "simplified", "closed-form", "paper-constants"], default="closed-form")
    p.add_argument("--epsilon", type=_epsilon, default=math.inf)
    p.add_argument("--trials", type=int, default=10**4, help="simulated datasets for the A and MSE terms")
    p.add_argument("--moments", choices=["mc", "analytic"], default="mc", help="xi moment source for general/simplified")
    p.add_argument("--moment-samples", type=int, default=10**6)

    for name, help_text in (("simulate", "simulate standardized MLEs"), ("table1", "reproduce the N(1,1) table")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--n", type=_int_list, required=name == "simulate", default=[10**3, 10**4, 10**5])
        p.add_argument("--trials", type=int, default=10**4)
        p.add_argument("--exact-ehz", type=_bool, nargs="?", const=True, default=False,
                       help="compare against quadrature E h(Z) instead of the published 0.461")
        p.add_argument("--full", action="store_true", help="lift the desk-scale cap of 1e9 draws per n")
        if name == "simulate":
            p.add_argument("--per-trial", action="store_true", help="emit trial,w1,...,wd,h_value rows")

    sub.add_parser("verify", parents=[common], help="run the oracle self-checks")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        parser.error(f"cannot read config file: {exc}")
    extra = []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            parser.error(f"{args.config}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false") and flag in ("--full", "--per-trial"):
            if value.lower() == "true":
                extra.append(flag)
            continue
        extra += [flag, value]
    # config first so explicit flags, parsed later, override it
    return parser.parse_args([argv[0], *extra, *argv[1:]])


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("MLEBOUND_SEED")
    if env is None:
        return 0
    try:
        return _seed(env)
    except (ValueError, argparse.ArgumentTypeError):
        raise UsageError(f"MLEBOUND_SEED must be a 64-bit unsigned integer, got {env!r}")


def cmd_bound(args, seed, out) -> int:
    h = get_test_function(args.h)
    theta0 = NormalParams(args.mu, args.sigma2).as_array()
    model = NormalModel()
    if args.mode == "simplified" and math.isfinite(args.epsilon):
        raise UsageError("--mode simplified requires --epsilon inf")
    rows = []
    for n in args.n:
        if n < 2:
            raise UsageError("every --n must be >= 2")
        if args.mode == "closed-form":
            b = closed_form_normal(n, h)
        else:
            moments = "published" if args.mode == "paper-constants" else args.moments
            b = general_bound(
                model, theta0, n, h,
                epsilon=args.epsilon, moments=moments, trials=args.trials,
                moment_samples=args.moment_samples, seed=seed, workers=args.workers,
            )
        rows.append(b.as_dict())
    write_rows(rows, BOUND_COLUMNS, args.format, out)
    return EXIT_OK


def _sim_config(args, seed) -> SimConfig:
    return SimConfig(
        mu=args.mu, sigma2=args.sigma2, n_list=sorted(args.n), trials=args.trials,
        master_seed=seed, h=args.h, workers=args.workers,
        exact_ehz=bool(args.exact_ehz), allow_full=args.full,
    )


def _report_validity(report) -> int:
    bad = report.validity_violations()
    for row in bad:
        print(f"validity failure: q_h={row.q_h:.6g} exceeds bound={row.bound:.6g} at n={row.n}", file=sys.stderr)
    return EXIT_VERIFY if bad else EXIT_OK


def cmd_table1(args, seed, out) -> int:
    config = _sim_config(args, seed)
    report = table1(config)
    write_rows([r.as_dict() for r in report.rows], TABLE_COLUMNS, args.format, out)
    return _report_validity(report)


def cmd_simulate(args, seed, out) -> int:
    config = _sim_config(args, seed)
    if not args.per_trial:
        report = table1(config)
        write_rows([r.as_dict() for r in report.rows], TABLE_COLUMNS, args.format, out)
        return _report_validity(report)

    if len(config.n_list) != 1:
        raise UsageError("--per-trial takes a single --n")
    config.validate()
    h = get_test_function(args.h)
    n = config.n_list[0]
    w, _ = standardized_trials(NormalModel(), [args.mu, args.sigma2], n, config.trials, seed, config.workers)
    values = h(w)
    columns = ["trial", *(f"w{j + 1}" for j in range(w.shape[1])), "h_value"]
    rows = [
        {"trial": i, **{f"w{j + 1}": w[i, j] for j in range(w.shape[1])}, "h_value": values[i]}
        for i in range(w.shape[0])
    ]
    write_rows(rows, columns, args.format, out)
    return EXIT_OK


def cmd_verify(args, seed, out) -> int:
    results = run_checks(seed=seed)
    for r in results:
        out.write(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


COMMANDS = {"bound": cmd_bound, "table1": cmd_table1, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK

    try:
        seed = _resolve_seed(args)
        if args.command != "verify":
            get_test_function(args.h)
        out = sys.stdout if args.output == "-" else open(args.output, "w", encoding="utf-8", newline="")
    except (UsageError, KeyError, OSError) as exc:
        print(f"mlebound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args, seed, out)
    except NUMERIC_ERRORS as exc:
        print(f"mlebound: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError) as exc:
        print(f"mlebound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if out is not sys.stdout:
            out.close()


if __name__ == "__main__":
    sys.exit(main())
