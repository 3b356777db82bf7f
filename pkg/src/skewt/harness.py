"""
Simulation harness comparing the M0, M2 and M3 fitting routes.

Each replicate draws a sample, fits it with every requested method and
stores the maximized penalized log-likelihoods and wall-clock times in a
:class:`ComparisonRecord`.  Frequency tables of the log-likelihood
differences ``D_hk = logL_h - logL_k`` and of the timings are pure
functions of the list of records, so they can be rebuilt from the
per-replicate CSV file alone.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .mple import maximize, start_for
from .multivariate import MSTParams, mst_sample
from .univariate import STParams, st_sample

__all__ = [
    "FAMILIES",
    "METHODS",
    "D_BINS",
    "T_BINS",
    "D_PAIRS",
    "ExperimentConfig",
    "ComparisonRecord",
    "design_matrix",
    "generate_sample",
    "replicate_seed",
    "run_replicate",
    "run_experiment",
    "records_to_csv",
    "records_from_csv",
    "bin_index",
    "frequency_table",
    "d_tables",
    "timing_table",
    "format_table",
    "table_to_csv",
    "FrequencyTable",
]

FAMILIES = ("simple", "regression-A", "regression-B", "regression-C", "bivariate")
METHODS = ("M0", "M2", "M3")
D_PAIRS = (("M2", "M0"), ("M2", "M3"), ("M3", "M0"))

# Right-closed interval edges; the outer bins are open towards infinity.
D_EDGES = (-20.0, -2.0, -0.2, 0.0, 0.2, 2.0, 20.0)
T_EDGES = (-0.25, -0.1, -0.05, 0.0, 0.05, 0.1, 0.25)


def _labels(edges):
    fmt = lambda v: f"{v:g}"  # noqa: E731
    out = [f"(-inf,{fmt(edges[0])}]"]
    out += [f"({fmt(a)},{fmt(b)}]" for a, b in zip(edges, edges[1:])]
    out.append(f"({fmt(edges[-1])},inf]")
    return tuple(out)


D_BINS = _labels(D_EDGES)
T_BINS = _labels(T_EDGES)
MISSING = "NA"

BIVARIATE_OMEGA = np.array([[1.0, 0.5], [0.5, 1.0]])
BIVARIATE_ALPHA_DIR = np.array([1.0, 2.0])


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation experiment: a family crossed with (lambda, nu, n) values."""

    family: str = "simple"
    lambdas: Tuple[float, ...] = (0.0, 2.0, 8.0)
    nus: Tuple[float, ...] = (1.0, 3.0, 8.0)
    ns: Tuple[int, ...] = (50, 100, 250, 500)
    replicates: int = 200
    seed: int = 0
    methods: Tuple[str, ...] = METHODS
    penalized: bool = True
    max_iter: int = 500

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.replicates < 1:
            raise DomainError("replicates must be at least 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise DomainError(f"methods must be a nonempty subset of {METHODS}")
        if any(v <= 0 for v in self.nus):
            raise DomainError("nu values must be positive")
        if any(n < 10 for n in self.ns):
            raise DomainError("sample sizes must be at least 10")
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in self.methods))

    def cells(self) -> List[Tuple[float, float, int]]:
        """All (lambda, nu, n) cells; the bivariate family drops n = 50."""
        out = []
        for lam, nu, n in itertools.product(self.lambdas, self.nus, self.ns):
            if self.family == "bivariate" and n == 50:
                continue
            out.append((float(lam), float(nu), int(n)))
        return out


@dataclass
class ComparisonRecord:
    """Outcome of all requested methods on one simulated sample."""

    family: str
    lam: float
    nu: float
    n: int
    replicate: int
    loglik: Dict[str, float] = field(default_factory=dict)
    times: Dict[str, float] = field(default_factory=dict)
    converged: Dict[str, bool] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)

    @property
    def cell(self) -> str:
        return f"{self.family}|{self.lam:g}|{self.nu:g}|{self.n}"

    def D(self, h: str, k: str) -> float:
        """``loglik[h] - loglik[k]``; NaN when either method is missing or failed."""
        a = self.loglik.get(h, math.nan)
        b = self.loglik.get(k, math.nan)
        return a - b

    def timing(self, key: str) -> float:
        t = self.times
        if key in t:
            return t[key]
        if "-" in key:
            a, b = key.split("-")
            return t.get(a, math.nan) - t.get(b, math.nan)
        return math.nan


# ---------------------------------------------------------------- sampling


def design_matrix(family: str, n: int) -> Optional[np.ndarray]:
    """Regression design on ``n`` equally spaced points of [-1, 1]; None otherwise."""
    if not family.startswith("regression-"):
        return None
    x = np.linspace(-1.0, 1.0, n)
    case = family[-1]
    cols = [np.ones(n), x]
    if case == "A":
        cols.append(np.sqrt(1.0 + x))
    elif case == "B":
        cols.append(np.sin(3.0 * x))
    elif case == "C":
        cols += [np.sin(3.0 * x), x / (1.0 + 0.8 * x)]
    else:
        raise DomainError(f"unknown regression case {case!r}")
    return np.column_stack(cols)


def generate_sample(family: str, lam: float, nu: float, n: int, rng) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Draw ``(y, X)`` for one replicate; ``X`` is None for intercept-only families."""
    if family == "bivariate":
        p = MSTParams(np.zeros((1, 2)), BIVARIATE_OMEGA, lam * BIVARIATE_ALPHA_DIR, nu)
        return mst_sample(n, p, seed=rng), None
    eps = st_sample(n, STParams(0.0, 1.0, lam, nu), seed=rng)
    X = design_matrix(family, n)
    if X is None:
        return eps, None
    return X @ np.ones(X.shape[1]) + eps, X


def replicate_seed(seed: int, family: str, lam: float, nu: float, n: int, rep: int) -> np.random.SeedSequence:
    """Seed for one replicate, independent of execution order."""
    key = zlib.crc32(f"{family}|{lam!r}|{nu!r}|{n}".encode())
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key, int(rep)])


# ---------------------------------------------------------------- running

# Any exception inside one fit is recorded against that method; a study of
# thousands of samples must not stop because one of them is pathological.
_FIT_ERRORS = (Exception,)


def _run_method(method, y, X, cfg, rec: ComparisonRecord):
    t0 = time.perf_counter()
    try:
        start = start_for(method, y, X)
        t_init = time.perf_counter() - t0
        res = maximize(start, y, X, penalized=cfg.penalized, max_iter=cfg.max_iter)
    except _FIT_ERRORS as exc:
        rec.errors[method] = f"{type(exc).__name__}: {exc}"
        return None
    total = time.perf_counter() - t0
    rec.loglik[method] = res.penalized_loglik if cfg.penalized else res.loglik
    rec.converged[method] = bool(res.converged)
    rec.times["t" + method[1]] = total
    return t_init


def run_replicate(cfg: ExperimentConfig, lam: float, nu: float, n: int, rep: int) -> ComparisonRecord:
    rng = np.random.default_rng(replicate_seed(cfg.seed, cfg.family, lam, nu, n, rep))
    y, X = generate_sample(cfg.family, lam, nu, n, rng)
    rec = ComparisonRecord(cfg.family, lam, nu, n, rep)
    for m in cfg.methods:
        t_init = _run_method(m, y, X, cfg, rec)
        if m == "M2" and t_init is not None:
            rec.times["t1"] = t_init
    return rec


def _run_task(args):
    cfg, lam, nu, n, rep = args
    return run_replicate(cfg, lam, nu, n, rep)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, progress=None) -> List[ComparisonRecord]:
    """
    Run every replicate of every cell.

    Records come back in (cell, replicate) order regardless of ``jobs``,
    and each replicate has its own seed, so serial and parallel runs give
    the same log-likelihoods.
    """
    tasks = [(cfg, lam, nu, n, r) for lam, nu, n in cfg.cells() for r in range(cfg.replicates)]
    if jobs <= 1:
        out = []
        for i, t in enumerate(tasks):
            out.append(_run_task(t))
            if progress:
                progress(i + 1, len(tasks))
        return out
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))


# ---------------------------------------------------------------- persistence

_TIME_KEYS = ("t0", "t1", "t2", "t3")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def records_to_csv(records: Sequence[ComparisonRecord], methods: Sequence[str] = METHODS) -> str:
    header = ["family", "lambda", "nu", "n", "replicate"]
    header += [f"loglik_{m}" for m in methods]
    header += [f"converged_{m}" for m in methods]
    header += list(_TIME_KEYS)
    header += [f"D_{h[1]}{k[1]}" for h, k in D_PAIRS]
    header += [f"error_{m}" for m in methods]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in records:
        row = [r.family, _fmt(r.lam), _fmt(r.nu), r.n, r.replicate]
        row += [_fmt(r.loglik.get(m, math.nan)) for m in methods]
        row += ["" if m not in r.converged else int(r.converged[m]) for m in methods]
        row += [_fmt(r.times.get(k, math.nan)) for k in _TIME_KEYS]
        row += [_fmt(r.D(h, k)) for h, k in D_PAIRS]
        row += [r.errors.get(m, "") for m in methods]
        w.writerow(row)
    return buf.getvalue()


def records_from_csv(text: str) -> List[ComparisonRecord]:
    """Inverse of :func:`records_to_csv` (derived D columns are recomputed, not read)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        rec = ComparisonRecord(row["family"], float(row["lambda"]), float(row["nu"]), int(row["n"]), int(row["replicate"]))
        for key, val in row.items():
            if val in ("", None):
                continue
            if key.startswith("loglik_"):
                rec.loglik[key[7:]] = float(val)
            elif key.startswith("converged_"):
                rec.converged[key[10:]] = bool(int(val))
            elif key in _TIME_KEYS:
                rec.times[key] = float(val)
            elif key.startswith("error_"):
                rec.errors[key[6:]] = val
        out.append(rec)
    return out


# ---------------------------------------------------------------- tables


def bin_index(value: float, edges: Sequence[float] = D_EDGES) -> Optional[int]:
    """Index of the right-closed bin holding ``value``; None for NaN."""
    if math.isnan(value):
        return None
    return int(np.searchsorted(np.asarray(edges), value, side="left"))


@dataclass
class FrequencyTable:
    title: str
    row_name: str
    rows: List[str]
    columns: List[str]
    counts: np.ndarray  # (len(rows), len(columns)); last column counts missing values

    def total(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def frequency_table(values: Iterable[Tuple[str, float]], row_order, edges, labels, title, row_name) -> FrequencyTable:
    rows = [str(r) for r in row_order]
    counts = np.zeros((len(rows), len(labels) + 1), dtype=int)
    pos = {r: i for i, r in enumerate(rows)}
    for key, v in values:
        j = bin_index(v, edges)
        counts[pos[str(key)], len(labels) if j is None else j] += 1
    return FrequencyTable(title, row_name, rows, list(labels) + [MISSING], counts)


def _key(v):
    return f"{v:g}" if isinstance(v, float) else str(v)


def d_tables(records: Sequence[ComparisonRecord]) -> List[FrequencyTable]:
    """D_hk crossed with n and with nu, for each pair whose methods were run."""
    present = set()
    for r in records:
        present |= set(r.loglik) | set(r.errors)
    ns = sorted({r.n for r in records})
    nus = sorted({r.nu for r in records})
    out = []
    for h, k in D_PAIRS:
        if h not in present or k not in present:
            continue
        name = f"D_{h[1]}{k[1]}"
        for attr, order in (("n", ns), ("nu", nus)):
            vals = [(_key(getattr(r, attr)), r.D(h, k)) for r in records]
            out.append(frequency_table(vals, [_key(v) for v in order], D_EDGES, D_BINS, f"{name} x {attr}", attr))
    return out


def timing_table(records: Sequence[ComparisonRecord]) -> FrequencyTable:
    """Frequencies of t0..t3 and of the differences t2-t0, t2-t3, t3-t0."""
    keys = ["t0", "t1", "t2", "t3", "t2-t0", "t2-t3", "t3-t0"]
    present = set()
    for r in records:
        present |= set(r.times)
    keys = [k for k in keys if all(part in present for part in k.split("-"))]
    vals = [(k, r.timing(k)) for r in records for k in keys]
    return frequency_table(vals, keys, T_EDGES, T_BINS, "timing (seconds)", "time")


def format_table(tab: FrequencyTable) -> str:
    """Aligned plain-text rendering with a totals row."""
    head = [tab.row_name] + tab.columns
    body = [[r] + [str(c) for c in row] for r, row in zip(tab.rows, tab.counts)]
    body.append(["total"] + [str(c) for c in tab.total()])
    widths = [max(len(row[j]) for row in [head] + body) for j in range(len(head))]
    line = lambda row: "  ".join(s.rjust(w) for s, w in zip(row, widths))  # noqa: E731
    return "\n".join([tab.title, line(head)] + [line(r) for r in body]) + "\n"


def table_to_csv(tab: FrequencyTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", tab.row_name] + tab.columns)
    for r, row in zip(tab.rows, tab.counts):
        w.writerow([tab.title, r] + [int(c) for c in row])
    return buf.getvalue()
