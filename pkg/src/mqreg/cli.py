"""Command-line front end: ``mqreg fit | tune | simulate``.

Exit codes: 0 success, 2 bad input or configuration, 3 fit failure,
4 tuning-constant selector did not converge (outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .exceptions import MQError
from .fitting import Dataset, MQConfig, _scale_tag, fit
from .inference import sandwich_cov
from .simlab import (TUNING_SCENARIOS, ScaleStudyConfig, TuningStudyConfig, fmt,
                     run_scale_study, run_tuning_study, scale_summary, tuning_summary)
from .tuning import CGrid, default_q_grid, select_c_av, select_c_inv

EXIT_OK, EXIT_CONFIG, EXIT_FIT, EXIT_NOCONV = 0, 2, 3, 4
_MISSING = {"", "na", "nan", "null", "none"}


class InputError(Exception):
    """Unreadable or malformed input; maps to exit code 2."""


# ------------------------------------------------------------------- input

def read_dataset(path, response, covariates=(), intercept=True):
    """Read selected numeric columns of a headed CSV into a :class:`Dataset`.

    Rows with a missing value in any selected column are dropped; the
    number dropped is returned alongside the data.
    """
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, header required") from None
        header = [h.strip() for h in header]
        cols = [response, *covariates]
        for col in cols:
            if col not in header:
                raise InputError(f"{path}: column {col!r} not found in header")
        idx = [header.index(col) for col in cols]
        rows, dropped = [], 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            vals = []
            for col, j in zip(cols, idx):
                raw = rec[j].strip() if j < len(rec) else ""
                if raw.lower() in _MISSING:
                    vals = None
                    break
                try:
                    v = float(raw)
                except ValueError:
                    raise InputError(f"{path}: line {lineno}, column {col!r}: "
                                     f"non-numeric value {raw!r}") from None
                if not math.isfinite(v):
                    vals = None
                    break
                vals.append(v)
            if vals is None:
                dropped += 1
            else:
                rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no complete rows in the selected columns")
    arr = np.array(rows, dtype=float)
    y, Z = arr[:, 0], arr[:, 1:]
    names = list(covariates)
    if intercept:
        Z = np.column_stack([np.ones(len(y)), Z])
        names = ["(Intercept)"] + names
    if Z.shape[1] == 0:
        raise InputError("no covariates and no intercept: empty design")
    return Dataset(y, Z, tuple(names)), dropped


# ------------------------------------------------------------------ output

def _table_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer))
                    and not isinstance(v, bool) else v for v in r])
    return buf.getvalue()


def _json_text(header, rows, **extra):
    payload = dict(extra)
    payload["rows"] = [dict(zip(header, (v.item() if isinstance(v, np.generic) else v for v in r)))
                       for r in rows]
    return json.dumps(payload, indent=2, allow_nan=True) + "\n"


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


def _side_path(out, suffix):
    if out is None:
        return None
    p = Path(out)
    return p.with_name(f"{p.stem}_{suffix}.csv")


def _report_rows(data, fits):
    """One ``coef`` and one ``se`` row per (estimator, q) fit."""
    rows = []
    for label, f in fits:
        se = sandwich_cov(data, f).se
        head = [label, f.config.q, f.config.c, f.config.scale]
        rows.append(head + ["coef", *f.beta.tolist()])
        rows.append(head + ["se", *se.tolist()])
    return rows


def _report_header(data):
    return ["estimator", "q", "c", "scale", "stat", *data.names]


# ---------------------------------------------------------------- commands

def _load(args):
    covs = [c.strip() for c in args.covariates.split(",") if c.strip()] if args.covariates else []
    data, dropped = read_dataset(args.input, args.response, covs, not args.no_intercept)
    if dropped:
        warnings.warn(f"dropped {dropped} row(s) with missing values", UserWarning, stacklevel=2)
    return data


def cmd_fit(args):
    data = _load(args)
    fits = []
    for q in args.q:
        f = fit(data, MQConfig(q=q, c=args.c, scale=args.scale))
        fits.append((f"MQ(c={args.c:g})", f))
    header = _report_header(data)
    rows = _report_rows(data, fits)
    text = _json_text(header, rows) if args.json else _table_text(header, rows)
    _emit(text, args.out)
    return EXIT_OK


def cmd_tune(args):
    data = _load(args)
    grid = CGrid.parse(args.grid, 0.02 if args.method == "av" else 0.1) if args.grid else None
    trace_rows, fits, converged, notes = [], [], True, []
    if args.method == "av":
        for q in args.q:
            res = select_c_av(data, q, grid, scale=args.scale)
            converged &= res.converged
            if res.note:
                notes.append(f"q={q:g}: {res.note}")
            trace_rows += [["MQ AV", q, c, v] for c, v in res.trace]
            fits.append(("MQ AV", res.fit))
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            res = select_c_inv(data, default_q_grid(args.q_step), grid, scale=args.scale)
        for w in caught:
            notes.append(str(w.message))
        converged = res.converged
        trace_rows = [["MQ Inv", "", c, v] for c, v in res.trace]
        for q in args.q:
            fits.append(("MQ Inv", fit(data, MQConfig(q=q, c=res.c_opt, scale=args.scale))))
    header = _report_header(data)
    rows = _report_rows(data, fits)
    trace_header = ["estimator", "q", "c", "criterion"]
    trace_path = args.trace or _side_path(args.out, "trace")
    if args.json:
        text = _json_text(header, rows, converged=bool(converged), notes=notes,
                          trace=[dict(zip(trace_header, r)) for r in trace_rows])
    else:
        text = _table_text(header, rows)
    _emit(text, args.out)
    if trace_path is not None:
        _emit(_table_text(trace_header, trace_rows), trace_path)
    for n in notes:
        print(f"mqreg: {n}", file=sys.stderr)
    if not converged:
        print("mqreg: tuning-constant selection did not converge", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_simulate(args):
    if args.study == "scale":
        cfg = ScaleStudyConfig()
        if args.c:
            cfg.cs = tuple(args.c)
        if args.families:
            cfg.families = tuple(args.families.split(","))
        if args.methods:
            cfg.methods = tuple(_scale_tag(m) for m in args.methods.split(","))
        if args.asy_n is not None:
            cfg.asy_n = args.asy_n
    else:
        cfg = TuningStudyConfig()
        if args.scenarios:
            cfg.scenarios = tuple(args.scenarios.split(","))
            bad = [s for s in cfg.scenarios if s not in TUNING_SCENARIOS]
            if bad:
                raise InputError(f"unknown scenario(s) {bad}; choose from {list(TUNING_SCENARIOS)}")
        if args.n:
            cfg.n_list = tuple(args.n)
        if args.grid:
            cfg.av_grid = CGrid.parse(args.grid, 0.02)
    if args.study == "scale" and args.n:
        if len(args.n) != 1:
            raise InputError("the scale study takes a single --n")
        cfg.n = args.n[0]
    if args.q:
        cfg.qs = tuple(args.q)
    if args.reps is not None:
        cfg.reps = args.reps
    if args.seed is not None:
        cfg.seed = args.seed
    if cfg.reps < 1:
        raise InputError("--reps must be at least 1")

    if args.study == "scale":
        res = run_scale_study(cfg)
        summary = scale_summary(res)
    else:
        res = run_tuning_study(cfg)
        summary = tuning_summary(res)
    header = list(summary.columns)
    srows = summary.itertuples(index=False, name=None)
    if args.json:
        _emit(_json_text(list(res.frame.columns), res.frame.itertuples(index=False, name=None),
                         study=args.study), args.out)
    else:
        _emit(res.to_csv(), args.out)
    spath = args.summary or _side_path(args.out, "summary")
    if spath is not None:
        _emit(_table_text(header, srows), spath)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _q_value(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"q must lie in (0, 1), got {text}")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="mqreg", description="Huber M-quantile regression.")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("input", help="CSV file with a header row")
        sp.add_argument("--response", required=True, help="response column")
        sp.add_argument("--covariates", default="", help="comma-separated covariate columns")
        sp.add_argument("--no-intercept", action="store_true", help="omit the intercept column")
        sp.add_argument("--scale", default="cmad", choices=["nmad", "cmad", "ml", "mm"],
                        type=str.lower, help="scale estimator (default cmad)")
        sp.add_argument("--q", nargs="+", type=_q_value, default=[0.5], help="M-quantile orders")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--json", action="store_true", help="write JSON instead of CSV")

    f = sub.add_parser("fit", help="fit M-quantile regressions at fixed c")
    data_args(f)
    f.add_argument("--c", type=_positive, default=1.345, help="tuning constant (default 1.345)")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("tune", help="select c from the data, then fit")
    data_args(t)
    t.add_argument("--method", choices=["av", "inv"], default="av")
    t.add_argument("--grid", help="candidate grid lo:hi[:step] (default 0.5:4:0.02 av, 0.5:4:0.1 inv)")
    t.add_argument("--q-step", type=float, default=0.01, help="order spacing of the inv ensemble")
    t.add_argument("--trace", help="criterion trace file (default <out>_trace.csv)")
    t.set_defaults(func=cmd_tune)

    s = sub.add_parser("simulate", help="run a simulation study")
    s.add_argument("study", choices=["scale", "tuning"])
    s.add_argument("--n", nargs="+", type=int, help="sample size(s)")
    s.add_argument("--reps", type=int, help="replicates per scenario")
    s.add_argument("--seed", type=int, help="master seed")
    s.add_argument("--q", nargs="+", type=_q_value, help="orders (default per study)")
    s.add_argument("--c", nargs="+", type=_positive, help="tuning constants (scale study)")
    s.add_argument("--grid", help="MQ AV grid lo:hi[:step] (tuning study)")
    s.add_argument("--families", help="comma-separated error families (scale study)")
    s.add_argument("--methods", help="comma-separated scale methods (scale study)")
    s.add_argument("--scenarios", help="comma-separated scenarios (tuning study)")
    s.add_argument("--asy-n", type=int, help="large-sample size for asymptotic variance "
                                             "(default 100000; 0 skips)")
    s.add_argument("--out", help="long-format CSV (default stdout)")
    s.add_argument("--summary", help="summary table file (default <out>_summary.csv)")
    s.add_argument("--json", action="store_true", help="write JSON instead of CSV")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt_warning = warnings.formatwarning
    warnings.formatwarning = lambda msg, *a, **k: f"mqreg: warning: {msg}\n"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default", UserWarning)
            return args.func(args)
    except MQError as exc:
        print(f"mqreg: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (InputError, ValueError) as exc:
        print(f"mqreg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        warnings.formatwarning = fmt_warning


if __name__ == "__main__":
    sys.exit(main())
