"""Parameterized test families, reference spectra and matrix loading."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    AssumptionViolated,
    DimensionMismatch,
    GenerationFailed,
    LyapModalError,
    ParseError,
)
from .spectral import StateMatrix, eigendecompose

__all__ = [
    "FamilySpec",
    "rotation_block",
    "real_block_matrix",
    "two_oscillator_family",
    "merge_family",
    "instability_family",
    "table1_reference_spectrum",
    "table1_instability_family",
    "random_stable",
    "parse_matrix_text",
    "load_matrix",
    "FAMILIES",
    "build_family",
]

DAMPING_RATIO = 0.2


@dataclass(frozen=True)
class FamilySpec:
    """A named one-parameter matrix family ``gamma -> StateMatrix``."""

    name: str
    params: dict
    build: Callable[[float], StateMatrix] = field(repr=False)
    # closed-form critical parameter values, when the family has them
    critical: dict = field(default_factory=dict)

    def __call__(self, gamma: float) -> StateMatrix:
        return self.build(float(gamma))


def rotation_block(alpha: float, omega: float) -> np.ndarray:
    """Real 2x2 block with eigenvalues ``-alpha +/- i omega``."""
    return np.array([[-alpha, omega], [-omega, -alpha]], dtype=float)


def real_block_matrix(eigenvalues) -> np.ndarray:
    """Block-diagonal real matrix realizing a conjugate-closed eigenvalue list.

    Complex values contribute a rotation block per pair (the member with
    positive imaginary part is used, its conjugate is skipped).
    """
    lam = [complex(x) for x in eigenvalues]
    blocks = []
    used = [False] * len(lam)
    for i, z in enumerate(lam):
        if used[i]:
            continue
        used[i] = True
        if z.imag == 0:
            blocks.append(np.array([[z.real]]))
            continue
        partner = next(
            (j for j in range(i + 1, len(lam)) if not used[j] and abs(lam[j] - z.conjugate()) < 1e-12),
            None,
        )
        if partner is None:
            raise ValueError(f"eigenvalue {z} has no conjugate in the list")
        used[partner] = True
        blocks.append(rotation_block(-z.real, abs(z.imag)))
    n = sum(b.shape[0] for b in blocks)
    a = np.zeros((n, n))
    p = 0
    for b in blocks:
        m = b.shape[0]
        a[p : p + m, p : p + m] = b
        p += m
    return a


def _mixing(n: int, coupling: float, pattern: Optional[np.ndarray]) -> np.ndarray:
    k = np.asarray(pattern, dtype=float) if pattern is not None else None
    if k is None:
        return np.eye(n)
    return np.eye(n) + coupling * k


# in-phase coupling of state 1 of each block with state 1 of the other,
# and state 2 with state 2
_TWO_OSC_PATTERN = np.array(
    [[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]],
    dtype=float,
)


def two_oscillator_family(
    alpha1: float,
    alpha2: float,
    omega1: float,
    omega2_of_gamma: Union[Callable[[float], float], float],
    coupling: float = 0.3,
    slope: float = 1.0,
    pattern=None,
) -> FamilySpec:
    """Two lightly damped oscillators whose second frequency moves with ``gamma``.

    ``A(gamma) = S blockdiag(B(alpha1, omega1), B(alpha2, omega2(gamma))) S^{-1}``
    with ``S = I + coupling * K`` for a fixed real pattern ``K``.  The coupling
    enters as a similarity, so the eigenvalues are exactly the block values
    and the participations do not depend on ``gamma``; the modes are no
    longer orthogonal, which is what makes their interaction energy nonzero.

    ``omega2_of_gamma`` is either a callable or the frequency at ``gamma = 0``,
    in which case ``omega2(gamma) = omega2_0 + slope * gamma``.
    """
    w_check = omega1 if callable(omega2_of_gamma) else min(omega1, omega2_of_gamma)
    if min(alpha1, alpha2) <= 0 or w_check <= 0:
        raise ValueError("damping rates and frequencies must be positive")
    if callable(omega2_of_gamma):
        w2 = omega2_of_gamma
        w20 = float(w2(0.0))
    else:
        w20 = float(omega2_of_gamma)

        def w2(g, _w=w20, _s=float(slope)):
            return _w + _s * g

    pat = _TWO_OSC_PATTERN if pattern is None else pattern
    s = _mixing(4, coupling, pat)
    if np.linalg.cond(s) > 1e6:
        raise ValueError("coupling pattern gives a near-singular mixing matrix")
    s_inv = np.linalg.inv(s)

    def build(gamma: float) -> StateMatrix:
        om2 = float(w2(gamma))
        if om2 <= 0 or alpha1 + alpha2 >= DAMPING_RATIO * (omega1 + om2):
            raise AssumptionViolated(
                f"damping condition alpha1+alpha2 < {DAMPING_RATIO}*(omega1+omega2) fails at gamma={gamma:.6g}"
            )
        d = np.zeros((4, 4))
        d[:2, :2] = rotation_block(alpha1, omega1)
        d[2:, 2:] = rotation_block(alpha2, om2)
        return StateMatrix(s @ d @ s_inv)

    crit = {}
    if not callable(omega2_of_gamma) and slope != 0:
        crit["frequency_crossing"] = (omega1 - w20) / slope
    params = dict(alpha1=alpha1, alpha2=alpha2, omega1=omega1, omega2_0=w20, coupling=coupling, slope=slope)
    return FamilySpec("two_oscillator", params, build, crit)


def merge_family(a: float, b: float, form: str = "companion", kappa: float = 0.1) -> FamilySpec:
    """2x2 family with characteristic polynomial ``s^2 + 2a s + a^2 + gamma - b``.

    Real eigenvalues ``-a +/- sqrt(b - gamma)`` for ``gamma < b``, a double root
    at ``gamma = b`` and ``-a +/- i sqrt(gamma - b)`` beyond.

    ``form="companion"`` gives ``[[0, 1], [-(a^2 + gamma - b), -2a]]``.
    ``form="skew"`` gives ``-a I + [[d, k], [-k, -d]]`` with
    ``d^2 = kappa^2 + max(b - gamma, 0)`` and ``k^2 = kappa^2 + max(gamma - b, 0)``:
    the same spectrum, but with nearly orthogonal eigenvectors away from the
    merge, so the growth of the pair interaction towards the merge is visible.
    """
    if form not in ("companion", "skew"):
        raise ValueError(f"unknown merge_family form {form!r}")
    if form == "skew" and kappa <= 0:
        raise ValueError("kappa must be positive")

    def build(gamma: float) -> StateMatrix:
        if form == "companion":
            return StateMatrix([[0.0, 1.0], [-(a * a + gamma - b), -2.0 * a]])
        d = math.sqrt(kappa * kappa + max(b - gamma, 0.0))
        k = math.sqrt(kappa * kappa + max(gamma - b, 0.0))
        return StateMatrix([[-a + d, k], [-k, -a - d]])

    params = dict(a=a, b=b, form=form)
    if form == "skew":
        params["kappa"] = kappa
    return FamilySpec("merge", params, build, {"merge": float(b)})


def instability_family(a0, direction=None) -> FamilySpec:
    """``A(gamma) = A0 + gamma * D`` (``D = I`` by default).

    For the default direction the crossing is at ``gamma = -max Re lambda(A0)``.
    """
    base = StateMatrix(a0).a
    lam = np.linalg.eigvals(base)
    if np.max(lam.real) >= 0:
        raise ValueError("instability_family needs a stable A0")
    d = np.eye(base.shape[0]) if direction is None else np.asarray(direction, dtype=float)
    if d.shape != base.shape:
        raise DimensionMismatch(f"direction must be {base.shape}, got {d.shape}")

    def build(gamma: float) -> StateMatrix:
        return StateMatrix(base + gamma * d)

    crit = {}
    if direction is None:
        crit["instability"] = float(-np.max(lam.real))
    return FamilySpec("instability", dict(n=base.shape[0]), build, crit)


def table1_reference_spectrum() -> list:
    """Initial modes of the two-area study case: S1, S2, S3 pair, S4, S5, S6 pair, S7 pair."""
    return [
        complex(-0.096, 0.0),
        complex(-0.117, 0.0),
        complex(-0.111, 3.43),
        complex(-0.111, -3.43),
        complex(-0.265, 0.0),
        complex(-0.276, 0.0),
        complex(-0.492, 6.82),
        complex(-0.492, -6.82),
        complex(-0.506, 7.02),
        complex(-0.506, -7.02),
    ]


def _table1_mixing(n: int, coupling: float) -> np.ndarray:
    # fixed, seed-independent pattern: nearest-neighbour chain plus a weak long link
    k = np.zeros((n, n))
    for i in range(n - 1):
        k[i, i + 1] = 1.0
        k[i + 1, i] = -0.5
    k[0, n - 1] = 0.25
    return np.eye(n) + coupling * k


def table1_instability_family(coupling: float = 0.2) -> FamilySpec:
    """Reference spectrum, mixed by a fixed similarity, with S1 pushed across the axis.

    ``A(gamma) = A0 + gamma * R_1`` where ``R_1`` is the real residue of the S1
    mode.  Only that eigenvalue moves (``lambda_1 = -0.096 + gamma``) and the
    participations stay constant, so the boundary is crossed at
    ``gamma = 0.096``.
    """
    spec = table1_reference_spectrum()
    d = real_block_matrix(spec)
    n = d.shape[0]
    s = _table1_mixing(n, coupling)
    s_inv = np.linalg.inv(s)
    a0 = s @ d @ s_inv
    # S1 is the first diagonal entry of the block matrix
    r1 = np.outer(s[:, 0], s_inv[0])

    def build(gamma: float) -> StateMatrix:
        return StateMatrix(a0 + gamma * r1)

    return FamilySpec("table1_instability", dict(coupling=coupling), build, {"instability": 0.096})


def random_stable(n: int, seed: int, margin: float = 0.1, max_tries: int = 200) -> StateMatrix:
    """Reproducible random real matrix with every ``Re lambda <= -margin``.

    Entries are Gaussian with variance ``1/n``; the matrix is shifted left so
    that its spectral abscissa is ``-margin`` minus a uniform ``[0, 0.5)``
    offset.  Draws whose spectrum is nearly repeated (relative gap below
    1e-4) or whose eigenvector basis has condition above 1e6 are rejected.
    """
    if n < 1 or margin <= 0:
        raise ValueError("need n >= 1 and margin > 0")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        a = rng.standard_normal((n, n)) / math.sqrt(n)
        extra = rng.uniform(0.0, 0.5)
        lam = np.linalg.eigvals(a)
        a = a - (float(np.max(lam.real)) + margin + extra) * np.eye(n)
        try:
            eig = eigendecompose(a)
        except LyapModalError:
            continue
        if n > 1 and eig.min_gap < 1e-4 * np.max(np.abs(eig.lambdas)):
            continue
        if eig.cond_u > 1e6 or np.max(eig.lambdas.real) > -margin:
            continue
        return StateMatrix(a)
    raise GenerationFailed(f"no acceptable {n}x{n} matrix after {max_tries} draws (seed={seed})")


def _number(tok: str, where: str) -> float:
    t = tok.strip().replace("−", "-")
    try:
        x = float(t)
    except ValueError:
        raise ParseError(f"{where}: cannot parse {tok.strip()!r} as a number") from None
    if not math.isfinite(x):
        raise ParseError(f"{where}: non-finite value {tok.strip()!r}")
    return x


def _parse_csv(text: str) -> StateMatrix:
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        vals = [_number(c, f"row {lineno}, column {j + 1}") for j, c in enumerate(cells)]
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"row {lineno} has {len(vals)} entries, expected {width}")
        rows.append(vals)
    if not rows:
        raise ParseError("empty matrix file")
    if len(rows) != width:
        raise DimensionMismatch(f"matrix has {len(rows)} rows and {width} columns; it must be square")
    return StateMatrix(np.array(rows))


def _parse_json(text: str) -> StateMatrix:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict) or "n" not in obj or "data" not in obj:
        raise ParseError("matrix JSON must be an object with fields 'n' and 'data'")
    n = obj["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ParseError(f"field 'n' must be a positive integer, got {n!r}")
    data = obj["data"]
    if not isinstance(data, list):
        raise ParseError("field 'data' must be an array")
    if len(data) != n * n:
        raise DimensionMismatch(f"'data' has {len(data)} entries, expected n*n = {n * n}")
    vals = []
    for idx, x in enumerate(data):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ParseError(f"data entry {idx} (row {idx // n + 1}, column {idx % n + 1}) is not a finite number")
        vals.append(float(x))
    scale = obj.get("scale")
    if scale is not None:
        if not isinstance(scale, list) or len(scale) != n:
            raise DimensionMismatch(f"'scale' must have n = {n} entries")
        bad = [i for i, c in enumerate(scale) if isinstance(c, bool) or not isinstance(c, (int, float)) or not c > 0]
        if bad:
            raise ParseError(f"scale entry {bad[0]} must be a positive number")
    return StateMatrix(np.array(vals).reshape(n, n), scale)


def parse_matrix_text(text: str, fmt: Optional[str] = None) -> StateMatrix:
    """Parse matrix CSV (plain rows, no header) or matrix JSON (``n``, ``data``, ``scale``)."""
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "csv"
    if fmt == "json":
        return _parse_json(text)
    if fmt == "csv":
        return _parse_csv(text)
    raise ValueError(f"unknown matrix format {fmt!r}")


def load_matrix(source) -> StateMatrix:
    """Load a StateMatrix from a file path (``.json`` or CSV)."""
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read matrix file {path}: {exc.strerror}") from None
    fmt = "json" if path.suffix.lower() == ".json" else None
    return parse_matrix_text(text, fmt)


# ---- registry used by sweep configs ---------------------------------------


def _need(params, *names):
    missing = [k for k in names if k not in params]
    if missing:
        raise ParseError(f"family parameters missing: {', '.join(missing)}")


def _build_two_oscillator(p):
    _need(p, "alpha1", "alpha2", "omega1", "omega2_0")
    return two_oscillator_family(
        p["alpha1"], p["alpha2"], p["omega1"], p["omega2_0"], p.get("coupling", 0.3), p.get("slope", 1.0)
    )


def _build_merge(p):
    _need(p, "a", "b")
    return merge_family(p["a"], p["b"], p.get("form", "companion"), p.get("kappa", 0.1))


def _build_instability(p):
    if "diag" in p:
        a0 = np.diag(np.asarray(p["diag"], dtype=float))
    elif "matrix" in p:
        a0 = np.asarray(p["matrix"], dtype=float)
    else:
        raise ParseError("instability family needs 'diag' or 'matrix'")
    return instability_family(a0)


def _build_table1(p):
    return table1_instability_family(p.get("coupling", 0.2))


FAMILIES = {
    "two_oscillator": _build_two_oscillator,
    "merge": _build_merge,
    "instability": _build_instability,
    "table1_instability": _build_table1,
}


def build_family(name: str, params: dict) -> FamilySpec:
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise ParseError(f"unknown family {name!r}; known: {', '.join(sorted(FAMILIES))}") from None
    try:
        return builder(dict(params))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad parameters for family {name!r}: {exc}") from None
