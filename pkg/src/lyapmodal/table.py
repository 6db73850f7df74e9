"""Long-format indicator tables and their CSV/JSON serialization.

One record per value, columns ``gamma, indicator, i, j, k, value, flags``.
Indices are zero-based in memory and one-based on disk.  For kinds with two
state indices (GENERALIZED, PAIR_SIMLPF, GRAMIAN) the second state index is
stored in the ``j`` column.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .energy import SPHERICAL, EnergyEngine, InitialCondition, lmif_matrix
from .errors import ParseError
from .gramian import solve_lyapunov
from .spectral import EigenStructure, conventional_pf, generalized_pf, simpf

__all__ = [
    "INDICATORS",
    "DEFAULT_INDICATORS",
    "Record",
    "IndicatorTable",
    "format_value",
    "parse_value",
    "compute_indicators",
]

COLUMNS = ("gamma", "indicator", "i", "j", "k", "value", "flags")

# name -> index columns used, in array-axis order
INDICATORS = {
    "EIGENVALUE": ("i",),
    "CONVENTIONAL_MIS": ("k", "i"),
    "GENERALIZED": ("k", "i", "j"),
    "SIMPF": ("k", "i"),
    "MISLPF": ("k", "i"),
    "SIMLPF": ("k", "i"),
    "PAIR_MISLPF": ("k", "i", "j"),
    "PAIR_SIMLPF": ("i", "k", "j"),
    "LMIE_STATE_PART": ("k", "i", "j"),
    "STATE_ENERGY": ("k",),
    "MODE_ENERGY": ("i",),
    "MODAL_CONTRIBUTION": ("i",),
    "STATE_MODE_ENERGY": ("k", "i"),
    "STATE_PAIR_ENERGY": ("k", "i", "j"),
    "LMIE": ("i", "j"),
    "LMIE_AVERAGED": ("i", "j"),
    "LMIF": ("i", "j"),
    "TOTAL_STATE_ENERGY": (),
    "TOTAL_MODE_ENERGY": (),
    "GRAMIAN": ("k", "j"),
}

# pair SIMLPF is of doubtful meaning, generalized participations are n^3 and
# the Gramian only exists for stable systems, so none of them is on by default
DEFAULT_INDICATORS = tuple(k for k in INDICATORS if k not in ("PAIR_SIMLPF", "GENERALIZED", "GRAMIAN"))

COMPLEX_KINDS = {"EIGENVALUE", "CONVENTIONAL_MIS", "GENERALIZED"}


def _fmt_real(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        x = 0.0  # drop the sign of negative zero
    return format(x, ".17g")


def format_value(v) -> str:
    """17-significant-digit text; complex values as ``re+imj`` (``complex()``-parseable)."""
    if isinstance(v, (complex, np.complexfloating)):
        re, im = _fmt_real(v.real), _fmt_real(v.imag)
        if not im.startswith("-"):
            im = "+" + im
        return f"{re}{im}j"
    return _fmt_real(v)


def parse_value(text: str):
    t = text.strip()
    if t.endswith("j"):
        return complex(t)
    return float(t)


@dataclass(frozen=True)
class Record:
    gamma: Optional[float]
    indicator: str
    i: Optional[int]
    j: Optional[int]
    k: Optional[int]
    value: object
    flags: str = ""


def _idx_out(x):
    return "" if x is None else str(x + 1)


def _idx_in(s, where):
    s = s.strip()
    if s == "":
        return None
    try:
        v = int(s)
    except ValueError:
        raise ParseError(f"{where}: bad index {s!r}") from None
    if v < 1:
        raise ParseError(f"{where}: index {v} must be >= 1")
    return v - 1


class IndicatorTable:
    """Ordered collection of :class:`Record` values."""

    def __init__(self, records: Optional[Iterable[Record]] = None):
        self.records = list(records or [])

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def extend(self, other: "IndicatorTable"):
        self.records.extend(other.records)

    def select(self, indicator: str, gamma=None):
        return [
            r
            for r in self.records
            if r.indicator == indicator and (gamma is None or r.gamma == gamma)
        ]

    def array(self, indicator: str, n: int, gamma=None) -> np.ndarray:
        """Rebuild the dense array of one indicator (NaN where absent)."""
        axes = INDICATORS[indicator]
        rows = self.select(indicator, gamma)
        dtype = complex if indicator in COMPLEX_KINDS else float
        out = np.full((n,) * len(axes), np.nan, dtype=dtype)
        for r in rows:
            idx = tuple(getattr(r, a) for a in axes)
            out[idx] = r.value
        return out

    # ---- CSV -----------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.records:
            w.writerow(
                [
                    "" if r.gamma is None else _fmt_real(r.gamma),
                    r.indicator,
                    _idx_out(r.i),
                    _idx_out(r.j),
                    _idx_out(r.k),
                    format_value(r.value),
                    r.flags,
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "IndicatorTable":
        rd = csv.reader(io.StringIO(text))
        header = next(rd, None)
        if header is None or tuple(h.strip() for h in header) != COLUMNS:
            raise ParseError(f"table header must be {','.join(COLUMNS)}")
        recs = []
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise ParseError(f"row {lineno} has {len(row)} fields, expected {len(COLUMNS)}")
            g, ind, i, j, k, val, fl = row
            where = f"row {lineno}"
            try:
                gamma = None if g.strip() == "" else float(g)
                value = parse_value(val)
            except ValueError:
                raise ParseError(f"{where}: bad number") from None
            recs.append(Record(gamma, ind, _idx_in(i, where), _idx_in(j, where), _idx_in(k, where), value, fl))
        return cls(recs)

    # ---- JSON ----------------------------------------------------------
    def to_json_obj(self) -> list:
        out = []
        for r in self.records:
            v = r.value
            if isinstance(v, (complex, np.complexfloating)) or not math.isfinite(float(v)):
                val = format_value(v)
            else:
                val = float(v) + 0.0
            out.append(
                {
                    "gamma": r.gamma,
                    "indicator": r.indicator,
                    "i": None if r.i is None else r.i + 1,
                    "j": None if r.j is None else r.j + 1,
                    "k": None if r.k is None else r.k + 1,
                    "value": val,
                    "flags": r.flags,
                }
            )
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "IndicatorTable":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid table JSON: {exc.msg}") from None
        recs = []
        for n, d in enumerate(rows):
            try:
                v = d["value"]
                value = parse_value(v) if isinstance(v, str) else float(v)
                idx = [None if d[c] is None else int(d[c]) - 1 for c in ("i", "j", "k")]
                recs.append(Record(d["gamma"], d["indicator"], *idx, value, d.get("flags", "")))
            except (KeyError, TypeError, ValueError):
                raise ParseError(f"table JSON record {n} is malformed") from None
        return cls(recs)


def _emit(recs, gamma, name, values, flags=None, extra_flags=""):
    axes = INDICATORS[name]
    values = np.asarray(values)
    for idx in np.ndindex(values.shape):
        cols = dict(zip(axes, idx))
        fl = ""
        if flags is not None:
            fl = flags[idx] if isinstance(flags, np.ndarray) else flags.get(idx, "")
        if extra_flags:
            fl = f"{fl};{extra_flags}" if fl else extra_flags
        v = values[idx]
        v = complex(v) if name in COMPLEX_KINDS else float(np.real(v))
        recs.append(Record(gamma, name, cols.get("i"), cols.get("j"), cols.get("k"), v, fl))


def _energy_flags(arr):
    fl = np.full(arr.shape, "", dtype=object)
    fl[np.isposinf(arr)] = "divergent"
    return fl


def compute_indicators(
    eig: EigenStructure,
    ic: InitialCondition = SPHERICAL,
    indicators=DEFAULT_INDICATORS,
    gamma: Optional[float] = None,
    extra_flags: str = "",
) -> IndicatorTable:
    """Evaluate the requested indicators into a table.

    GRAMIAN is the full Gramian for ``Q = diag(c^2)``; it raises
    :class:`~lyapmodal.errors.UnstableSystem` when it does not exist.
    """
    unknown = [x for x in indicators if x not in INDICATORS]
    if unknown:
        raise ParseError(f"unknown indicator(s): {', '.join(unknown)}")
    want = set(indicators)
    eng = EnergyEngine(eig, ic)
    avg = eng if ic == SPHERICAL else EnergyEngine(eig, SPHERICAL)
    recs: list = []
    ef = extra_flags
    for name in INDICATORS:  # fixed order regardless of request order
        if name not in want:
            continue
        if name == "EIGENVALUE":
            _emit(recs, gamma, name, eig.lambdas, extra_flags=ef)
        elif name == "CONVENTIONAL_MIS":
            _emit(recs, gamma, name, conventional_pf(eig).values, extra_flags=ef)
        elif name == "GENERALIZED":
            _emit(recs, gamma, name, generalized_pf(eig).values, extra_flags=ef)
        elif name == "SIMPF":
            _emit(recs, gamma, name, simpf(eig).values, extra_flags=ef)
        elif name == "MISLPF":
            _emit(recs, gamma, name, *eng.mislpf, extra_flags=ef)
        elif name == "SIMLPF":
            _emit(recs, gamma, name, *eng.simlpf, extra_flags=ef)
        elif name == "PAIR_MISLPF":
            _emit(recs, gamma, name, *eng.pair_mislpf, extra_flags=ef)
        elif name == "PAIR_SIMLPF":
            _emit(recs, gamma, name, *eng.pair_simlpf, extra_flags=ef)
        elif name == "LMIE_STATE_PART":
            _emit(recs, gamma, name, *eng.lmie_state_part, extra_flags=ef)
        elif name == "STATE_ENERGY":
            a = eng.state_energies
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "MODE_ENERGY":
            a = eng.mode_energies
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "MODAL_CONTRIBUTION":
            a = eng.modal_contributions
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "STATE_MODE_ENERGY":
            a = eng.state_mode
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "STATE_PAIR_ENERGY":
            a = eng.state_mode_pair
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "LMIE":
            a = eng.lmie
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "LMIE_AVERAGED":
            a = avg.lmie
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "LMIF":
            vals, fl = lmif_matrix(eig)
            _emit(recs, gamma, name, vals, fl, ef)
        elif name == "TOTAL_STATE_ENERGY":
            a = np.array(eng.total_state)
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "TOTAL_MODE_ENERGY":
            a = np.array(eng.total_mode)
            _emit(recs, gamma, name, a, _energy_flags(a), ef)
        elif name == "GRAMIAN":
            p = solve_lyapunov(eig.a, np.diag(eig.weights))
            _emit(recs, gamma, name, p, extra_flags=ef)
    return IndicatorTable(recs)
