"""One-parameter sweeps: mode tracking, indicator trajectories and events.

Tracks are identified by the order of the modes at the first grid point, and
every per-point indicator table is written in track order, so index ``i`` in
a sweep table always refers to the same continuously followed mode.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.optimize

from .energy import SPHERICAL, EnergyEngine, InitialCondition
from .errors import AmbiguousMatch, NonSimpleSpectrum, ParseError
from .spectral import DEFAULT_TOL, EigenStructure, _as_state_matrix, eigendecompose
from .systems import DAMPING_RATIO, FamilySpec, build_family
from .table import DEFAULT_INDICATORS, INDICATORS, IndicatorTable, compute_indicators

__all__ = [
    "EventKind",
    "Event",
    "SweepConfig",
    "SweepPoint",
    "ModeTrack",
    "SweepResult",
    "track_modes",
    "run_sweep",
    "detect_events",
]

REFINE_DEPTH = 20
MERGE_BISECTIONS = 30
STABILITY_BISECTIONS = 40
STABILITY_RE_TOL = 1e-8
ILL_CONDITIONED_GAP = 1e-6
TIE_RTOL = 1e-12
RESONANCE_FACTOR = 5.0


class EventKind(str, enum.Enum):
    MERGE = "MERGE"
    SPLIT = "SPLIT"
    INSTABILITY = "INSTABILITY"
    RESTABILIZATION = "RESTABILIZATION"
    RESONANCE = "RESONANCE"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    gamma_lo: float
    gamma_hi: float
    tracks: tuple
    details: dict = field(default_factory=dict)

    def contains(self, gamma: float) -> bool:
        return self.gamma_lo <= gamma <= self.gamma_hi

    def to_json_obj(self) -> dict:
        d = {
            "kind": self.kind.value,
            "gamma_lo": float(self.gamma_lo),
            "gamma_hi": float(self.gamma_hi),
            "tracks": [t + 1 for t in self.tracks],
        }
        d.update({k: float(v) for k, v in self.details.items()})
        return d


@dataclass
class SweepConfig:
    """Family, grid, indicator selection and initial-condition policy."""

    family: FamilySpec
    gammas: np.ndarray
    indicators: Sequence[str] = DEFAULT_INDICATORS
    ic: InitialCondition = SPHERICAL
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float).reshape(-1)
        if g.size < 2:
            raise ParseError("gamma grid needs at least 2 points")
        if not np.all(np.isfinite(g)) or np.any(np.diff(g) <= 0):
            raise ParseError("gamma grid must be finite and strictly increasing")
        self.gammas = g
        bad = [x for x in self.indicators if x not in INDICATORS]
        if bad:
            raise ParseError(f"unknown indicator(s): {', '.join(bad)}")
        self.indicators = tuple(self.indicators)

    @classmethod
    def from_mapping(cls, cfg, tol: Optional[float] = None) -> "SweepConfig":
        """Build from a parsed config document (keys ``family``, ``params``,
        ``gamma: {start, stop, steps}``, optional ``indicators``, ``ic_policy``)."""
        if not isinstance(cfg, dict):
            raise ParseError("sweep config must be a mapping")
        try:
            fam = cfg["family"]
            grid = cfg["gamma"]
        except KeyError as exc:
            raise ParseError(f"sweep config missing key {exc.args[0]!r}") from None
        params = cfg.get("params") or {}
        if not isinstance(params, dict) or not isinstance(grid, dict):
            raise ParseError("'params' and 'gamma' must be mappings")
        family = build_family(str(fam), params)
        try:
            start, stop, steps = float(grid["start"]), float(grid["stop"]), int(grid["steps"])
        except (KeyError, TypeError, ValueError):
            raise ParseError("gamma needs numeric start, stop and integer steps") from None
        if steps < 2 or not stop > start:
            raise ParseError("gamma grid needs stop > start and steps >= 2")
        ind = cfg.get("indicators") or DEFAULT_INDICATORS
        if isinstance(ind, str) or not isinstance(ind, (list, tuple)):
            raise ParseError("'indicators' must be a list of kind names")
        ic = cfg.get("ic_policy", "spherical")
        ic = InitialCondition.parse(str(ic)) if ic is not None else SPHERICAL
        return cls(
            family=family,
            gammas=np.linspace(start, stop, steps),
            indicators=tuple(str(x) for x in ind),
            ic=ic,
            tol=DEFAULT_TOL if tol is None else float(tol),
        )


@dataclass(frozen=True)
class SweepPoint:
    gamma: float
    eig: EigenStructure  # modes in track order
    refined: bool = False

    @property
    def flags(self) -> str:
        fl = []
        scale = float(np.max(np.abs(self.eig.lambdas)))
        if self.eig.n > 1 and self.eig.min_gap < ILL_CONDITIONED_GAP * scale:
            fl.append("ill_conditioned")
        if self.refined:
            fl.append("refined")
        return ";".join(fl)


@dataclass
class ModeTrack:
    gammas: np.ndarray
    lambdas: np.ndarray  # (points, n), column t is track t
    pairs: np.ndarray  # conj_pair per point, in track indices
    match_cost: np.ndarray  # (points - 1,)
    ties: int = 0

    @property
    def n(self) -> int:
        return self.lambdas.shape[1]


@dataclass
class SweepResult:
    config: SweepConfig
    points: list
    tracks: ModeTrack
    table: IndicatorTable
    events: list
    gaps: list  # (gamma_left, gamma_right) around non-simple points

    @property
    def gammas(self) -> np.ndarray:
        return self.tracks.gammas

    def events_json_obj(self) -> dict:
        return {
            "events": [e.to_json_obj() for e in self.events],
            "gaps": [{"gamma_lo": float(a), "gamma_hi": float(b)} for a, b in self.gaps],
        }


# ---- tracking --------------------------------------------------------------


def _partner(lam: np.ndarray) -> np.ndarray:
    out = np.arange(lam.size)
    for c in range(lam.size):
        if lam[c].imag != 0:
            d = np.abs(lam - np.conj(lam[c]))
            d[c] = np.inf
            d[lam.imag * lam[c].imag >= 0] = np.inf
            out[c] = int(np.argmin(d))
    return out


def _tied(cost, t1, t2, c1, c2, tol) -> bool:
    now = cost[t1, c1] + cost[t2, c2]
    return abs(now - (cost[t1, c2] + cost[t2, c1])) <= tol


def track_modes(prev, cur, *, return_info: bool = False, warn: bool = True):
    """Minimum-cost bijection ``prev[t] -> cur[perm[t]]`` under ``|dlambda|``.

    Conjugate pairs in ``prev`` that land on complex values map onto a
    conjugate pair in ``cur``.  Cost ties within ``1e-12 max|lambda|`` are
    broken by giving the lower track id the lower index in ``cur``; each
    such tie issues :class:`~lyapmodal.errors.AmbiguousMatch`.
    """
    prev = np.asarray(prev, dtype=complex)
    cur = np.asarray(cur, dtype=complex)
    if prev.shape != cur.shape:
        raise ValueError("track_modes needs equal-length eigenvalue lists")
    n = prev.size
    cost = np.abs(prev[:, None] - cur[None, :])
    _, perm = scipy.optimize.linear_sum_assignment(cost)
    perm = np.asarray(perm, dtype=int)

    # conjugate consistency
    pp, cp = _partner(prev), _partner(cur)
    for t in range(n):
        tt = pp[t]
        if tt <= t:
            continue
        c = perm[t]
        if cur[c].imag == 0 or cur[perm[tt]].imag == 0:
            continue  # split bookkeeping: a pair may go to two reals
        want = cp[c]
        if perm[tt] != want:
            other = int(np.flatnonzero(perm == want)[0])
            perm[other], perm[tt] = perm[tt], want

    # deterministic tie-break
    scale = max(float(np.max(np.abs(np.concatenate([prev, cur])))), np.finfo(float).tiny)
    tol = TIE_RTOL * scale
    changed = True
    while changed:
        changed = False
        for t1 in range(n):
            for t2 in range(t1 + 1, n):
                c1, c2 = perm[t1], perm[t2]
                if c1 > c2 and _tied(cost, t1, t2, c1, c2, tol):
                    perm[t1], perm[t2] = c2, c1
                    changed = True
    ties = sum(
        _tied(cost, t1, t2, perm[t1], perm[t2], tol) for t1 in range(n) for t2 in range(t1 + 1, n)
    )
    if ties and warn:
        warnings.warn(f"{ties} tied mode assignment(s) resolved by track id", AmbiguousMatch)
    total = float(cost[np.arange(n), perm].sum())
    if return_info:
        return perm, total, ties
    return perm


# ---- sweep -----------------------------------------------------------------


def _try_decompose(family, gamma, tol):
    try:
        return eigendecompose(family(gamma), tol=tol)
    except NonSimpleSpectrum:
        return None


def _closest_simple(family, good, bad, tol):
    """Bisect from a simple point toward a non-simple one; closest simple point found."""
    best = good
    lo, hi = good, bad
    for _ in range(REFINE_DEPTH):
        mid = 0.5 * (lo + hi)
        if _try_decompose(family, mid, tol) is not None:
            best, lo = mid, mid
        else:
            hi = mid
    return best


def _sample(cfg: SweepConfig):
    """Decompose every grid point, refining around non-simple ones."""
    fam, tol = cfg.family, cfg.tol
    grid = list(cfg.gammas)
    eigs = [_try_decompose(fam, g, tol) for g in grid]
    if all(e is None for e in eigs):
        raise NonSimpleSpectrum("no grid point has a simple spectrum")
    pts = [(g, e, False) for g, e in zip(grid, eigs) if e is not None]
    gaps = []
    m = 0
    while m < len(grid):
        if eigs[m] is not None:
            m += 1
            continue
        r = m
        while r + 1 < len(grid) and eigs[r + 1] is None:
            r += 1
        left_g = right_g = None
        if m > 0:
            left_g = _closest_simple(fam, grid[m - 1], grid[m], tol)
            if left_g != grid[m - 1]:
                pts.append((left_g, _try_decompose(fam, left_g, tol), True))
        if r + 1 < len(grid):
            right_g = _closest_simple(fam, grid[r + 1], grid[r], tol)
            if right_g != grid[r + 1]:
                pts.append((right_g, _try_decompose(fam, right_g, tol), True))
        gaps.append((grid[m] if left_g is None else left_g, grid[r] if right_g is None else right_g))
        m = r + 1
    pts.sort(key=lambda p: p[0])
    return pts, gaps


def run_sweep(cfg: SweepConfig) -> SweepResult:
    """Analyze ``cfg.family`` over the grid, track modes and detect events."""
    raw, gaps = _sample(cfg)
    n = raw[0][1].n
    perms = [np.arange(n)]
    costs = []
    ties = 0
    for (_, prev, _), (_, cur, _) in zip(raw, raw[1:]):
        prev_tracked = prev.lambdas[perms[-1]]
        p, c, t = track_modes(prev_tracked, cur.lambdas, return_info=True, warn=False)
        perms.append(p)
        costs.append(c)
        ties += t
    if ties:
        warnings.warn(f"{ties} tied mode assignment(s) in the sweep resolved by track id", AmbiguousMatch)
    points = [SweepPoint(g, e.permuted(p), r) for (g, e, r), p in zip(raw, perms)]
    track = ModeTrack(
        gammas=np.array([p.gamma for p in points]),
        lambdas=np.array([p.eig.lambdas for p in points]),
        pairs=np.array([p.eig.conj_pair for p in points]),
        match_cost=np.array(costs),
        ties=ties,
    )
    table = IndicatorTable()
    for p in points:
        table.extend(compute_indicators(p.eig, cfg.ic, cfg.indicators, gamma=p.gamma, extra_flags=p.flags))
    result = SweepResult(cfg, points, track, table, [], gaps)
    result.events = detect_events(result)
    return result


# ---- events ----------------------------------------------------------------


def _eigvals(family, gamma):
    return np.linalg.eigvals(_as_state_matrix(family(gamma)).a)


def _bisect(pred: Callable[[float], bool], lo: float, hi: float, iters: int):
    """Shrink ``[lo, hi]`` keeping ``pred(lo)`` true and ``pred(hi)`` false."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def _refine_merge(family, lo, hi):
    n_real = np.count_nonzero(_eigvals(family, lo).imag == 0)
    return _bisect(lambda g: np.count_nonzero(_eigvals(family, g).imag == 0) == n_real, lo, hi, MERGE_BISECTIONS)


def _refine_stability(family, lo, hi):
    n_unstable = np.count_nonzero(_eigvals(family, lo).real >= 0)

    def same(g):
        return np.count_nonzero(_eigvals(family, g).real >= 0) == n_unstable

    lo, hi = _bisect(same, lo, hi, STABILITY_BISECTIONS)
    for _ in range(40):
        re = min(np.min(np.abs(_eigvals(family, g).real)) for g in (lo, hi))
        if re < STABILITY_RE_TOL:
            break
        lo, hi = _bisect(same, lo, hi, 1)
    return lo, hi


def _resonance_events(result: SweepResult) -> list:
    tr = result.tracks
    lam = tr.lambdas
    events = []
    engines = [EnergyEngine(p.eig, SPHERICAL) for p in result.points]
    for t1 in range(tr.n):
        for t2 in range(t1 + 1, tr.n):
            alpha = -(lam[:, t1].real + lam[:, t2].real)
            omega = lam[:, t1].imag + lam[:, t2].imag
            valid = (
                (lam[:, t1].imag > 0)
                & (lam[:, t2].imag > 0)
                & (tr.pairs[:, t1] != t2)
                & (alpha > 0)
                & (alpha < DAMPING_RATIO * omega)
            )
            idx = np.flatnonzero(valid)
            if idx.size < 3:
                continue
            f = np.array([abs(engines[m].lmie[t1, t2]) for m in idx])
            med = float(np.median(f))
            for q in range(1, idx.size - 1):
                m = idx[q]
                if idx[q - 1] != m - 1 or idx[q + 1] != m + 1:
                    continue  # neighbours must be adjacent valid points
                if not (f[q] > f[q - 1] and f[q] >= f[q + 1]):
                    continue
                if f[q] < RESONANCE_FACTOR * med:
                    continue
                dw = abs(lam[m, t1].imag - lam[m, t2].imag)
                events.append(
                    Event(
                        EventKind.RESONANCE,
                        float(tr.gammas[m - 1]),
                        float(tr.gammas[m + 1]),
                        (t1, t2),
                        {
                            "peak_gamma": float(tr.gammas[m]),
                            "delta_omega": float(dw),
                            "alpha_sum": float(alpha[m]),
                            "omega_sum": float(omega[m]),
                            "value": float(f[q]),
                            "median": med,
                        },
                    )
                )
    return events


def detect_events(result: SweepResult) -> list:
    """MERGE/SPLIT, INSTABILITY/RESTABILIZATION and RESONANCE events, sorted by γ.

    Merge and stability brackets are refined by bisection on the family
    itself; the predicate is the count of real (or of non-decaying)
    eigenvalues, which changes exactly at the event.
    """
    tr = result.tracks
    fam = result.config.family
    lam, pairs, g = tr.lambdas, tr.pairs, tr.gammas
    events = []
    for m in range(len(g) - 1):
        real0 = lam[m].imag == 0
        real1 = lam[m + 1].imag == 0
        for t1 in range(tr.n):
            t2 = int(pairs[m + 1, t1])
            if t2 > t1 and real0[t1] and real0[t2]:
                lo, hi = _refine_merge(fam, g[m], g[m + 1])
                events.append(Event(EventKind.MERGE, lo, hi, (t1, t2)))
            t2 = int(pairs[m, t1])
            if t2 > t1 and real1[t1] and real1[t2]:
                lo, hi = _refine_merge(fam, g[m], g[m + 1])
                events.append(Event(EventKind.SPLIT, lo, hi, (t1, t2)))
        for t in range(tr.n):
            r0, r1 = lam[m, t].real, lam[m + 1, t].real
            if (r0 < 0) != (r1 < 0):
                kind = EventKind.INSTABILITY if r0 < 0 else EventKind.RESTABILIZATION
                lo, hi = _refine_stability(fam, g[m], g[m + 1])
                events.append(Event(kind, lo, hi, (t,)))
    events.extend(_resonance_events(result))
    order = list(EventKind)
    events.sort(key=lambda e: (e.gamma_lo, order.index(e.kind), e.tracks))
    return events
