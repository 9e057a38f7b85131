"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nulldist
from .linalg import DesignData, DesignError
from .procedure import SelectionConfig, run_selection
from .selectors import Method
from .simbench import load_spec, run_experiment
from .testing import DEFAULT_PERMUTATIONS, TestMode, permutation_pvalue

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_csv_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row.

    Raises :class:`DataError` naming the offending line for ragged rows,
    empty cells and non-numeric cells.
    """
    try:
        fh = open(path, newline="")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        except csv.Error as err:
            raise DataError(f"{path}, line 1: {err}") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}, line 1: duplicate column names")
        rows = []
        try:
            for row in reader:
                line = reader.line_num
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
                vals = []
                for name, cell in zip(header, row):
                    cell = cell.strip()
                    if not cell:
                        raise DataError(f"{path}, line {line}: missing value in column {name!r}")
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataError(f"{path}, line {line}: non-numeric value {cell!r} in column {name!r}") from None
                    if not math.isfinite(v):
                        raise DataError(f"{path}, line {line}: non-finite value in column {name!r}")
                    vals.append(v)
                rows.append(vals)
        except csv.Error as err:
            raise DataError(f"{path}, line {reader.line_num}: {err}") from None
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def load_design(path, response: str, exclude: Sequence[str] = (), subset: str | None = None) -> DesignData:
    """Build a :class:`DesignData` from a CSV file.

    ``subset`` is ``COLUMN=VALUE``: only rows with that value are kept and the
    column is dropped from the design.
    """
    header, table = read_csv_table(path)
    if response not in header:
        raise DataError(f"response column {response!r} not in {path}")
    drop = {response, *exclude}
    missing = [c for c in exclude if c not in header]
    if missing:
        raise DataError(f"excluded columns not found: {', '.join(missing)}")
    if subset:
        col, sep, val = subset.partition("=")
        if not sep or col not in header:
            raise UsageError(f"--subset expects COLUMN=VALUE with a known column, got {subset!r}")
        try:
            target = float(val)
        except ValueError:
            raise UsageError(f"--subset value {val!r} is not numeric") from None
        table = table[table[:, header.index(col)] == target]
        drop.add(col)
    cols = [i for i, h in enumerate(header) if h not in drop]
    if not cols:
        raise DataError("no covariate columns left")
    if table.shape[0] < 4:
        raise DataError(f"need at least 4 observations, got {table.shape[0]}")
    try:
        return DesignData.from_arrays(table[:, cols], table[:, header.index(response)], [header[i] for i in cols])
    except DesignError as err:
        raise DataError(str(err)) from None


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_select(args) -> int:
    data = load_design(args.data, args.response, args.exclude, args.subset)
    cfg = SelectionConfig(
        method=args.method, gamma=args.gamma, test_mode=args.mode, permutation_q=args.q, seed=args.seed
    )
    trace = run_selection(data, cfg)
    _write(trace.to_json() if args.format == "json" else trace.to_csv(), args.out)
    if args.out:
        print(f"selected: {', '.join(trace.selected_names) or '(none)'}")
    return EXIT_OK


def cmd_permtest(args) -> int:
    data = load_design(args.data, args.response, args.exclude, args.subset)
    index = {name: j for j, name in enumerate(data.names)}
    active = []
    for name in args.active:
        if name not in index:
            raise DataError(f"active column {name!r} not in the design")
        active.append(index[name])
    out = permutation_pvalue(data, active, args.q, args.seed)
    st = out.statistics
    lines = [
        "R,U,V,T,argmax,p_value,permutations",
        f"{st.r_max!r},{st.u_max!r},{st.v_max!r},{st.t_stat!r},{data.names[st.argmax_index]},{out.p_value!r},{args.q}",
    ]
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_nulldist(args) -> int:
    p, n, s = args.p, args.n, args.s
    if n < s + 3 or p < s + 2:
        raise UsageError("need n >= s + 3 and p >= s + 2")
    prm = nulldist.null_params(p, n, s)
    rows = [
        "quantity,argument,value",
        f"a,,{prm.a!r}",
        f"b,,{prm.b!r}",
        f"c,,{prm.c!r}",
    ]
    for prob in args.quantiles:
        if not 0.0 < prob <= 1.0:
            raise UsageError(f"quantile probability {prob} outside (0, 1]")
        x = float(nulldist.limit_quantile(prob, n, s))
        rows.append(f"quantile_standardized,{prob!r},{x!r}")
        rows.append(f"quantile_r2,{prob!r},{prm.a + prm.b * x!r}")
    if args.rho is not None:
        try:
            ctx = nulldist.EquicorrContext(args.rho, p, n, s)
        except nulldist.DomainError as err:
            raise UsageError(str(err)) from None
        for t in args.grid:
            rows.append(f"tail_equicorr,{t!r},{nulldist.tail_prob_equicorr(t, ctx)!r}")
    _write("\n".join(rows) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        spec = load_spec(args.spec)
    except OSError as err:
        raise DataError(f"cannot read spec {args.spec}: {err.strerror}") from None
    except ValueError as err:
        raise DataError(f"{args.spec}: {err}") from None
    report = run_experiment(spec, threads=args.threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.spec).stem
    (out_dir / f"{stem}_report.csv").write_text(report.to_csv())
    (out_dir / f"{stem}_report.json").write_text(report.to_json())
    for r in report.rows:
        g = "" if r.gamma is None else f" gamma={r.gamma:g}"
        print(f"{r.method}{g}: mse={r.mse:.3f} ({r.se_mse:.3f}) fn={r.fn:.2f} fp={r.fp:.2f} time={r.time:.3f}s n={r.successes}")
    for f in report.failures:
        print(f"failure: rep={f[0]} {f[1]} gamma={f[2]}: {f[3]}", file=sys.stderr)
    return EXIT_OK if report.success_fraction >= 0.9 else EXIT_DATA


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corrstop", description="Test-based stopping for sequential variable selection.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def data_args(sp):
        sp.add_argument("--data", required=True, help="CSV file with a header row")
        sp.add_argument("--response", required=True, help="name of the response column")
        sp.add_argument("--exclude", action="append", default=[], help="column to leave out (repeatable)")
        sp.add_argument("--subset", help="keep rows with COLUMN=VALUE and drop that column")
        sp.add_argument("--q", type=int, default=DEFAULT_PERMUTATIONS, help="number of permutations")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output file (default stdout)")

    sp = sub.add_parser("select", help="run a selector with test-based stopping")
    data_args(sp)
    sp.add_argument("--method", choices=[m.value for m in Method], default="lars")
    sp.add_argument("--gamma", type=float, default=0.05)
    sp.add_argument("--mode", choices=[m.value for m in TestMode], default="auto")
    sp.add_argument("--format", choices=["json", "csv"], default="json")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("permtest", help="permutation test of the maximal partial correlation")
    data_args(sp)
    sp.add_argument("--active", action="append", default=[], help="active column name (repeatable)")
    sp.set_defaults(func=cmd_permtest)

    sp = sub.add_parser("nulldist", help="tabulate null constants, quantiles and equicorrelated tails")
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--s", type=int, default=0)
    sp.add_argument("--quantiles", type=_float_list, default=[0.5, 0.9, 0.95, 0.99])
    sp.add_argument("--rho", type=float)
    sp.add_argument("--grid", type=_float_list, default=[0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_nulldist)

    sp = sub.add_parser("simulate", help="run a simulation experiment from a spec file")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out-dir", default=".")
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "q", 1) < 1:
            raise UsageError("--q must be at least 1")
        if hasattr(args, "gamma") and not 0.0 <= args.gamma < 1.0:
            raise UsageError("--gamma must lie in [0, 1)")
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DesignError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (nulldist.QuadratureFailure, nulldist.DomainError, FloatingPointError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
