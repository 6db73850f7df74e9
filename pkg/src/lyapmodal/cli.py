"""Command-line front end: ``lyapmodal analyze | sweep | oracle``.

Exit codes: 0 ok, 1 oracle deviation above 1e-5 (or other failure), 2 parse
error, 3 non-simple spectrum, 4 unstable / divergent where forbidden,
5 zero energy.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .energy import DIVERGENT, SPHERICAL, UNDEFINED, ZERO_ENERGY, InitialCondition
from .errors import LyapModalError, ParseError, UnstableSystem, ZeroEnergy
from .oracle import oracle_report
from .spectral import DEFAULT_TOL, eigendecompose
from .sweep import SweepConfig, run_sweep
from .systems import build_family, load_matrix
from .table import DEFAULT_INDICATORS, INDICATORS, IndicatorTable, compute_indicators

ORACLE_LIMIT = 1e-5


def _indicator_list(text: Optional[str]):
    if text is None:
        return None
    names = [t.strip().upper() for t in text.split(",") if t.strip()]
    bad = [t for t in names if t not in INDICATORS]
    if bad:
        raise ParseError(f"unknown indicator(s): {', '.join(bad)}; known: {', '.join(INDICATORS)}")
    return tuple(names)


def _param_map(items):
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"--param expects key=value, got {item!r}")
        try:
            out[key.strip()] = yaml.safe_load(val)
        except yaml.YAMLError:
            raise ParseError(f"--param {key}: cannot parse value {val!r}") from None
    return out


def _write(text: str, out: Optional[str]):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _render(table: IndicatorTable, fmt: str) -> str:
    return table.to_json() if fmt == "json" else table.to_csv()


def _strict_check(table: IndicatorTable):
    """Raise for explicitly requested values that came out undefined."""
    for r in table:
        if isinstance(r.value, complex) or not math.isnan(r.value):
            continue
        where = ", ".join(
            f"{c}={getattr(r, c) + 1}" for c in INDICATORS[r.indicator] if getattr(r, c) is not None
        )
        what = f"{r.indicator}({where})" if where else r.indicator
        if ZERO_ENERGY in r.flags:
            raise ZeroEnergy(f"{what} is undefined: zero denominator energy")
        if DIVERGENT in r.flags or UNDEFINED in r.flags:
            raise UnstableSystem(f"{what} is undefined: divergent energy")


def cmd_analyze(args) -> int:
    if (args.matrix is None) == (args.family is None):
        raise ParseError("analyze needs exactly one of a matrix file or --family")
    if args.matrix is not None:
        a = load_matrix(args.matrix)
    else:
        if args.gamma is None:
            raise ParseError("--family needs --gamma")
        a = build_family(args.family, _param_map(args.param))(args.gamma)
    ic = InitialCondition.parse(args.ic) if args.ic else SPHERICAL
    if ic.variant == "unit" and ic.k >= a.n:
        raise ParseError(f"--ic {args.ic}: state index out of range 1..{a.n}")
    if ic.variant == "explicit" and len(ic.x0) != a.n:
        raise ParseError(f"--ic explicit needs {a.n} entries, got {len(ic.x0)}")
    eig = eigendecompose(a, tol=args.tol)
    requested = _indicator_list(args.indicators)
    table = compute_indicators(eig, ic, requested or DEFAULT_INDICATORS, gamma=args.gamma)
    _write(_render(table, args.format), args.out)
    if requested is not None:
        _strict_check(table)
    return 0


def _load_config(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        problem = getattr(exc, "problem", None) or "syntax error"
        raise ParseError(f"config {path} is not valid YAML/JSON{where}: {problem}") from None


def cmd_sweep(args) -> int:
    cfg_doc = _load_config(args.config)
    if isinstance(cfg_doc, dict):
        if args.indicators is not None:
            cfg_doc["indicators"] = list(_indicator_list(args.indicators))
        if args.ic is not None:
            cfg_doc["ic_policy"] = args.ic
    cfg = SweepConfig.from_mapping(cfg_doc, tol=args.tol)
    result = run_sweep(cfg)
    _write(_render(result.table, args.format), args.out)
    events = json.dumps(result.events_json_obj(), indent=1) + "\n"
    ev_path = args.events
    if ev_path is None and args.out not in (None, "-"):
        ev_path = str(Path(args.out).with_suffix("")) + ".events.json"
    if ev_path is None:
        sys.stderr.write(events)
    else:
        Path(ev_path).write_text(events, encoding="utf-8")
    return 0


def cmd_oracle(args) -> int:
    a = load_matrix(args.matrix)
    eig = eigendecompose(a, tol=args.tol)
    n = a.n
    if args.x0:
        x0s = []
        for spec in args.x0:
            ic = InitialCondition.parse(spec if ":" in spec else f"explicit:{spec}")
            if ic.variant == "spherical":
                raise ParseError("oracle needs concrete starts (unit:<k> or explicit:<list>)")
            x = np.eye(n)[ic.k] if ic.variant == "unit" else np.asarray(ic.x0, dtype=float)
            if x.size != n:
                raise ParseError(f"start {spec!r} needs {n} entries")
            x0s.append(x)
        x0s = np.array(x0s)
    else:
        x0s = np.eye(n)
    rep = oracle_report(a, x0s, horizon=args.horizon, step=args.step, eig=eig)
    lines = ["quantity,index,x0,closed_form,quadrature,rel_deviation"]
    for r in rep.rows:
        x0 = ";".join(format(v, ".17g") for v in r.x0)
        lines.append(
            f"{r.quantity},{r.index + 1},{x0},{r.closed_form:.17g},{r.quadrature:.17g},{r.deviation:.3e}"
        )
    _write("\n".join(lines) + "\n", args.out)
    dev = rep.max_deviation
    print(f"max relative deviation: {dev:.3e} (horizon {rep.horizon:.6g}, step {rep.step:.3g})", file=sys.stderr)
    if dev > ORACLE_LIMIT:
        print(f"error: deviation exceeds {ORACLE_LIMIT:g}", file=sys.stderr)
        return 1
    return 0


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="simple-spectrum tolerance")
    p.add_argument("--ic", help="unit:<k> | spherical | explicit:<x1,x2,...>")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lyapmodal", description="Lyapunov modal analysis of LTI systems")
    sub = ap.add_subparsers(dest="verb", required=True)

    pa = sub.add_parser("analyze", help="indicators for one matrix")
    pa.add_argument("matrix", nargs="?", help="matrix CSV or JSON file")
    pa.add_argument("--family", help="built-in family name instead of a matrix file")
    pa.add_argument("--param", action="append", metavar="KEY=VALUE", help="family parameter (repeatable)")
    pa.add_argument("--gamma", type=float, help="family parameter value")
    pa.add_argument("--indicators", help="comma-separated indicator kinds")
    _common(pa)
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("sweep", help="one-parameter sweep with event detection")
    ps.add_argument("config", help="YAML or JSON sweep config")
    ps.add_argument("--events", help="events JSON path (default: <out>.events.json, else stderr)")
    ps.add_argument("--indicators", help="override the config's indicator list")
    _common(ps)
    ps.set_defaults(func=cmd_sweep)

    po = sub.add_parser("oracle", help="closed-form energies against quadrature")
    po.add_argument("matrix", help="matrix CSV or JSON file")
    po.add_argument("--x0", action="append", help="start vector 'a,b,...' or unit:<k> (repeatable)")
    po.add_argument("--horizon", type=float)
    po.add_argument("--step", type=float)
    _common(po)
    po.set_defaults(func=cmd_oracle)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else ParseError.exit_code
    try:
        return args.func(args)
    except LyapModalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: ParseError: {exc}", file=sys.stderr)
        return ParseError.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
