"""
Command-line interface: ``skewt {fit,init,simulate,compare,profile,table}``.

Exit status is 0 on success, 1 when a numerical routine fails and 2 for
usage, parse and domain errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .errors import DegenerateSampleError, DomainError, NumericalError
from .harness import (
    FAMILIES,
    METHODS,
    ExperimentConfig,
    d_tables,
    format_table,
    records_from_csv,
    records_to_csv,
    run_experiment,
    table_to_csv,
    timing_table,
)
from .inversion import table_csv
from .mple import deviance_grid, fit, start_for
from .multivariate import MSTParams, mst_sample
from .univariate import STParams, st_sample

SCHEMA_VERSION = 1
EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class ParseError(ValueError):
    """Malformed input file; the message carries the line number."""


# ---------------------------------------------------------------- input


def read_table(path: str) -> Tuple[List[str], np.ndarray]:
    """Read a comma-separated numeric table with a mandatory header row."""
    if path == "-":
        text = sys.stdin.read()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"{path}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError(f"{path}: line 1: file is empty (a header row is required)")
    header = [h.strip() for h in rows[0]]
    if any(h == "" for h in header) or len(set(header)) != len(header):
        raise ParseError(f"{path}: line 1: header names must be nonempty and distinct")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise ParseError(f"{path}: line {lineno}: not a number: {bad!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError(f"{path}: line {lineno}: non-finite value")
        data.append(vals)
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _columns(header, data, names: Optional[str], what: str) -> np.ndarray:
    idx = []
    for name in names.split(","):
        name = name.strip()
        if name not in header:
            raise DomainError(f"{what} column {name!r} not found; available: {', '.join(header)}")
        idx.append(header.index(name))
    return data[:, idx]


def load_data(args) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    header, data = read_table(args.input)
    response = args.response or header[0]
    y = _columns(header, data, response, "response")
    if y.shape[1] == 1:
        y = y[:, 0]
    X = None
    if args.covariates:
        Z = _columns(header, data, args.covariates, "covariate")
        X = np.column_stack([np.ones(len(data)), Z])
    if len(data) == 0:
        raise DomainError("the data section is empty")
    return y, X


def _env_seed(seed: Optional[int]) -> Optional[int]:
    if seed is not None:
        return seed
    env = os.environ.get("SKEWT_SEED")
    if env is None or env.strip() == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise DomainError(f"SKEWT_SEED must be an integer, got {env!r}") from None


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------- output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(text: str, path: Optional[str]):
    if path and path != "-":
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_json(payload: dict, path: Optional[str]):
    body = {"schema_version": SCHEMA_VERSION, **payload}
    _emit(json.dumps(_jsonable(body), indent=2) + "\n", path)


def _start_dict(start) -> dict:
    return {
        "method": start.method,
        "params": start.params.as_dict(),
        "clamped_M": start.clamped_M,
        "clamped_G": start.clamped_G,
        "info": start.info,
    }


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    y, X = load_data(args)
    method = args.method.upper()
    penalized = not args.no_penalty
    methods = ["M2", "M3"] if method == "BEST" else [method]
    fits = [fit(y, X, m, penalized=penalized, max_iter=args.max_iter) for m in methods]
    key = (lambda r: r.penalized_loglik) if penalized else (lambda r: r.loglik)
    best = max(range(len(fits)), key=lambda i: key(fits[i]))
    out = []
    for i, r in enumerate(fits):
        d = r.as_dict()
        d["start"] = _start_dict(r.start)
        d["message"] = r.message
        d["best"] = i == best
        out.append(d)
    payload = {"command": "fit", "n": int(np.shape(y)[0]), "penalized": penalized}
    if len(out) == 1:
        payload.update(out[0])
    else:
        payload["fits"] = out
        payload["best_method"] = fits[best].method_tag
    _emit_json(payload, args.output)
    return EXIT_OK


def cmd_init(args) -> int:
    y, X = load_data(args)
    start = start_for(args.method.upper(), y, X)
    _emit_json({"command": "init", "n": int(np.shape(y)[0]), **_start_dict(start)}, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _env_seed(args.seed)
    if args.n < 0:
        raise DomainError("--n must be nonnegative")
    if args.alpha is not None:
        d = len(args.alpha)
        Omega = np.eye(d) if args.Omega is None else np.asarray(args.Omega, float)
        if Omega.size != d * d:
            raise DomainError(f"--Omega needs {d * d} entries for d = {d}")
        xi = np.full(d, args.xi) if args.xi_vec is None else np.asarray(args.xi_vec, float)
        p = MSTParams(xi.reshape(1, d), Omega.reshape(d, d), args.alpha, args.nu)
        draws = mst_sample(args.n, p, seed=seed) if args.n else np.empty((0, d))
        header = [f"y{j + 1}" for j in range(d)]
    else:
        p = STParams(args.xi, args.omega, args.lam, args.nu)
        draws = (st_sample(args.n, p, seed=seed) if args.n else np.empty(0)).reshape(-1, 1)
        header = ["y"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in draws:
        w.writerow([repr(float(v)) for v in row])
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def _write_tables(records, out_dir: Optional[Path], stream) -> None:
    tabs = d_tables(records) + [timing_table(records)]
    text = "\n".join(format_table(t) for t in tabs)
    stream.write(text)
    if out_dir is not None:
        (out_dir / "tables.txt").write_text(text, encoding="utf-8")
        (out_dir / "tables.csv").write_text("".join(table_to_csv(t) for t in tabs), encoding="utf-8")


def cmd_compare(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    if args.from_records:
        records = records_from_csv(Path(args.from_records).read_text(encoding="utf-8"))
        _write_tables(records, out_dir, sys.stdout)
        return EXIT_OK
    seed = _env_seed(args.seed)
    replicates = 2000 if args.full_scale else args.replicates
    cfg = ExperimentConfig(
        family=args.family,
        lambdas=tuple(args.lambdas),
        nus=tuple(args.nus),
        ns=tuple(args.ns),
        replicates=replicates,
        seed=0 if seed is None else seed,
        methods=tuple(m.upper() for m in args.methods),
        penalized=not args.no_penalty,
    )
    def progress(i, total):
        if args.verbose and (i % 50 == 0 or i == total):
            print(f"[{i}/{total}]", file=sys.stderr)

    records = run_experiment(cfg, jobs=args.jobs, progress=progress)
    if out_dir is not None:
        (out_dir / "records.csv").write_text(records_to_csv(records, cfg.methods), encoding="utf-8")
    _write_tables(records, out_dir, sys.stdout)
    return EXIT_OK


def _symmetric_grid(center: float, half: float, size: int) -> np.ndarray:
    return center + np.linspace(-half, half, size)


def cmd_profile(args) -> int:
    y, X = load_data(args)
    if np.ndim(y) != 1:
        raise DomainError("profile deviance is available for a single response only")
    penalized = not args.no_penalty
    fits = [fit(y, X, m, penalized=penalized) for m in ("M2", "M3")]
    key = (lambda r: r.penalized_loglik) if penalized else (lambda r: r.loglik)
    gfit = max(fits, key=key)
    lam_hat, nu_hat = float(gfit.params.lam), float(gfit.params.nu)
    size = args.grid_size
    if args.lambda_range:
        lams = np.linspace(args.lambda_range[0], args.lambda_range[1], size)
    else:
        lams = _symmetric_grid(lam_hat, max(3.0, abs(lam_hat)), size)
    if args.log_nu_range:
        log_nus = np.linspace(args.log_nu_range[0], args.log_nu_range[1], size)
    else:
        log_nus = _symmetric_grid(math.log(nu_hat), 2.5, size)
    grid = deviance_grid(y, X, lams, np.exp(log_nus), penalized=penalized, global_fit=gfit)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "log_nu", "deviance", "kind"])
    for i, lam in enumerate(lams):
        for j, ln in enumerate(log_nus):
            dv = grid.deviance[i, j]
            w.writerow([repr(float(lam)), repr(float(ln)), "" if math.isnan(dv) else repr(float(dv)), "grid"])
    fit_val = key(gfit)
    w.writerow([repr(lam_hat), repr(math.log(nu_hat)), repr(2.0 * (grid.reference - fit_val)), "fit"])
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_table(args) -> int:
    _emit(table_csv(), args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_data_args(p):
    p.add_argument("input", help="CSV file with a header row, or '-' for stdin")
    p.add_argument("--response", "-y", help="response column(s), comma separated (default: first column)")
    p.add_argument("--covariates", "-x", help="covariate columns, comma separated; an intercept is always added")
    p.add_argument("--output", "-o", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skewt", description="Skew-t fitting with quantile-based starting values.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="maximum (penalized) likelihood fit")
    _add_data_args(p)
    p.add_argument("--method", default="m2", type=str.lower, choices=["m0", "m2", "m3", "best"],
                   help="starting point: m0 cumulants, m2 quantile inversion, m3 simplified; best runs m2 and m3")
    p.add_argument("--no-penalty", action="store_true", help="plain likelihood instead of the penalized one")
    p.add_argument("--max-iter", type=int, default=500)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("init", help="preliminary estimate only")
    _add_data_args(p)
    p.add_argument("--method", default="m1", type=str.lower, choices=["m0", "m1", "m3"])
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("simulate", help="draw a skew-t sample as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--nu", type=float, default=math.inf)
    p.add_argument("--alpha", type=_floats, help="multivariate slant vector; switches to the d-dimensional family")
    p.add_argument("--Omega", type=_floats, help="row-major d x d scale matrix (default identity)")
    p.add_argument("--xi-vec", type=_floats, help="multivariate location (default: --xi in every component)")
    p.add_argument("--seed", type=int, help="random seed (falls back to SKEWT_SEED)")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="simulation study comparing M0, M2 and M3")
    p.add_argument("--family", choices=FAMILIES, default="simple")
    p.add_argument("--lambdas", type=_floats, default=[0.0, 2.0, 8.0])
    p.add_argument("--nus", type=_floats, default=[1.0, 3.0, 8.0])
    p.add_argument("--ns", type=_ints, default=[50, 100, 250, 500])
    p.add_argument("--replicates", "-N", type=int, default=200)
    p.add_argument("--full-scale", action="store_true", help="use 2000 replicates per cell")
    p.add_argument("--methods", type=lambda s: s.split(","), default=list(METHODS))
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", "-j", type=int, default=1)
    p.add_argument("--no-penalty", action="store_true")
    p.add_argument("--out-dir", help="directory for records.csv, tables.csv and tables.txt")
    p.add_argument("--from-records", help="rebuild the tables from an existing records.csv")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("profile", help="profile deviance over a (lambda, log nu) grid")
    _add_data_args(p)
    p.add_argument("--grid-size", type=int, default=51)
    p.add_argument("--lambda-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--log-nu-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--no-penalty", action="store_true")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("table", help="print the inversion coefficient table as CSV")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_table)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if getattr(args, "grid_size", 2) < 2:
        print("skewt: error: --grid-size must be at least 2", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, DomainError, DegenerateSampleError) as exc:
        print(f"skewt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"skewt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
