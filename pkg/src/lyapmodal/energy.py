"""Lyapunov energies of states and modes and the participation factors built on them.

Every quantity here is an infinite-horizon integral of a quadratic form of
the free response.  The initial condition only enters through its second
moment ``W = E{x0 x0^T}`` (``e_k e_k^T`` for a unit vector, ``x0 x0^T`` for an
explicit vector, ``I`` for the spherically symmetric ensemble), so all
closed forms are evaluated once per policy from

    G = conj(V) W V^T     (G_ij = E{conj(z_i) z_j})
    H = V W V^T           (H_ij = E{z_i z_j})

Indices are zero-based throughout the library.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DivergentPair, ParseError, UnstableSystem, ZeroEnergy
from .spectral import EigenStructure, Kind, PFMatrix

__all__ = [
    "InitialCondition",
    "EnergyEngine",
    "EnergyReport",
    "energy_report",
    "state_energy",
    "mode_energy",
    "mislpf",
    "mislpf_generalized",
    "simlpf",
    "modal_contribution",
    "lmie",
    "lmie_averaged",
    "lmif",
    "lmif_matrix",
    "pair_mislpf",
    "pair_simlpf",
    "state_participation_lmie",
    "Property1Forms",
    "property1_forms",
]

# relative size below which a coefficient or a denominator counts as zero
ZERO_RTOL = 1e-13

DIVERGENT = "divergent"
ZERO_ENERGY = "zero_energy"
UNDEFINED = "undefined"


@dataclass(frozen=True)
class InitialCondition:
    """Initial-condition policy: ``unit`` (index ``k``), ``spherical`` or ``explicit``."""

    variant: str
    k: Optional[int] = None
    x0: Optional[tuple] = None

    def __post_init__(self):
        if self.variant not in ("unit", "spherical", "explicit"):
            raise ValueError(f"unknown initial-condition variant {self.variant!r}")
        if self.variant == "unit" and (self.k is None or self.k < 0):
            raise ValueError("unit initial condition needs a non-negative index")
        if self.variant == "explicit":
            x = np.asarray(self.x0, dtype=float).reshape(-1)
            if x.size == 0 or not np.all(np.isfinite(x)) or not np.any(x):
                raise ValueError("explicit initial condition must be a finite nonzero vector")
            object.__setattr__(self, "x0", tuple(float(t) for t in x))

    @classmethod
    def unit(cls, k: int) -> "InitialCondition":
        return cls("unit", k=int(k))

    @classmethod
    def spherical(cls) -> "InitialCondition":
        return cls("spherical")

    @classmethod
    def explicit(cls, x0) -> "InitialCondition":
        return cls("explicit", x0=tuple(np.asarray(x0, dtype=float).reshape(-1)))

    @classmethod
    def parse(cls, text: str) -> "InitialCondition":
        """Parse ``unit:<k>`` (1-based), ``spherical`` or ``explicit:<x1,x2,...>``."""
        s = text.strip()
        head, _, rest = s.partition(":")
        head = head.strip().lower()
        try:
            if head == "spherical" and not rest:
                return cls.spherical()
            if head == "unit":
                k = int(rest)
                if k < 1:
                    raise ValueError
                return cls.unit(k - 1)
            if head == "explicit":
                return cls.explicit([float(t) for t in rest.split(",")])
        except ValueError:
            pass
        raise ParseError(f"bad initial-condition spec {text!r}")

    def moment(self, n: int) -> np.ndarray:
        """Second moment ``E{x0 x0^T}`` for an ``n``-state system."""
        if self.variant == "spherical":
            return np.eye(n)
        if self.variant == "unit":
            if self.k >= n:
                raise ValueError(f"unit index {self.k + 1} out of range for n={n}")
            w = np.zeros((n, n))
            w[self.k, self.k] = 1.0
            return w
        x = np.asarray(self.x0)
        if x.size != n:
            raise ValueError(f"explicit x0 has {x.size} entries, system has {n} states")
        return np.outer(x, x)

    def label(self) -> str:
        if self.variant == "unit":
            return f"unit:{self.k + 1}"
        if self.variant == "spherical":
            return "spherical"
        return "explicit:" + ",".join(format(t, ".17g") for t in self.x0)


SPHERICAL = InitialCondition.spherical()


def _ratio(num, den, den_scale, den_flags=None):
    """``num / den`` with divergent and zero denominators mapped to NaN.

    Returns the ratio and an object array of flag strings.
    """
    num = np.asarray(num, dtype=float)
    den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
    scale = np.broadcast_to(np.asarray(den_scale, dtype=float), num.shape)
    flags = np.full(num.shape, "", dtype=object)
    out = np.full(num.shape, np.nan)
    inf_den = ~np.isfinite(den)
    zero_den = np.isfinite(den) & (np.abs(den) <= ZERO_RTOL * scale)
    ok = ~(inf_den | zero_den)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[ok] = num[ok] / den[ok]
    flags[inf_den] = DIVERGENT
    flags[zero_den] = ZERO_ENERGY
    # a finite denominator with a divergent numerator
    bad_num = ok & ~np.isfinite(num)
    out[bad_num] = np.nan
    flags[bad_num] = DIVERGENT
    if den_flags is not None:
        flags[(flags == "") & (np.broadcast_to(den_flags, num.shape) != "")] = DIVERGENT
    return out, flags


def _flag_dict(flags: np.ndarray) -> dict:
    return {tuple(int(t) for t in idx): str(flags[idx]) for idx in zip(*np.nonzero(flags != ""))}


class EnergyEngine:
    """Vectorized closed forms for one eigenstructure and one initial-condition policy.

    Arrays returned by the properties use ``+inf`` for energies that diverge
    because an unstable mode (or divergent mode pair) is excited, and NaN for
    ratios that are undefined.  Flags live in :attr:`flags`.
    """

    def __init__(self, eig: EigenStructure, ic: InitialCondition = SPHERICAL):
        self.eig = eig
        self.ic = ic
        n = eig.n
        v = eig.v
        u = eig.u
        lam = eig.lambdas
        self.w = ic.moment(n)
        self.c2 = eig.weights
        self.g = v.conj() @ self.w @ v.T
        self.h = v @ self.w @ v.T
        self.s1 = lam.conj()[:, None] + lam[None, :]
        self.s2 = lam[:, None] + lam[None, :]
        self.divergent = (lam.real[:, None] + lam.real[None, :]) >= 0
        self.mgram = u.conj().T @ (self.c2[:, None] * u)
        self.ngram = u.T @ (self.c2[:, None] * u)
        with np.errstate(divide="ignore", invalid="ignore"):
            self._inv_s1 = np.where(self.divergent, 0.0, 1.0 / np.where(self.divergent, 1.0, self.s1))
            self._inv_s2 = np.where(self.divergent, 0.0, 1.0 / np.where(self.divergent, 1.0, self.s2))
        self._g_scale = max(float(np.max(np.abs(np.diag(self.g)))), np.finfo(float).tiny)

    # ---- state energies ------------------------------------------------
    @cached_property
    def _state_coef(self):
        u = self.eig.u
        # coef[k, i, j] = c_k^2 conj(u_i^k) u_j^k E{conj(z_i) z_j}
        return self.c2[:, None, None] * np.einsum("ki,kj,ij->kij", u.conj(), u, self.g)

    @cached_property
    def _pair_coef(self):
        u = self.eig.u
        return self.c2[:, None, None] * np.einsum("ki,kj,ij->kij", u, u, self.h)

    def _excited(self, coef):
        scale = max(float(np.max(np.abs(coef))), np.finfo(float).tiny)
        return np.abs(coef) > ZERO_RTOL * scale

    @cached_property
    def state_mode_pair(self) -> np.ndarray:
        """``E_{x_k ij}`` with shape (k, i, j)."""
        a = self._state_coef
        b = self._pair_coef
        val = -0.5 * (a * self._inv_s1).real - 0.5 * (b * self._inv_s2).real
        hot = self.divergent[None] & (self._excited(a) | self._excited(b))
        val[hot] = np.inf
        return val

    @cached_property
    def state_mode(self) -> np.ndarray:
        """``E_{x_k i}`` with shape (k, i)."""
        a = self._state_coef
        val = -(a * self._inv_s1).real.sum(axis=2)
        hot = (self.divergent[None] & self._excited(a)).any(axis=2)
        val[hot] = np.inf
        return val

    @cached_property
    def state_energies(self) -> np.ndarray:
        """``E_{x_k}`` per state."""
        a = self._state_coef
        val = -(a * self._inv_s1).real.sum(axis=(1, 2))
        hot = (self.divergent[None] & self._excited(a)).any(axis=(1, 2))
        val[hot] = np.inf
        return val

    @cached_property
    def _state_scale(self):
        return np.abs(self._state_coef * self._inv_s1).sum(axis=(1, 2))

    # ---- mode energies -------------------------------------------------
    @cached_property
    def mode_weights(self) -> np.ndarray:
        """Invariant weights ``|u_i|^2``, or ``|c^T u_i|^2`` when a scale is set."""
        u = self.eig.u
        if self.eig.scale is None:
            return np.sum(np.abs(u) ** 2, axis=0)
        return np.abs(self.eig.scale @ u) ** 2

    @cached_property
    def mode_energies(self) -> np.ndarray:
        lam = self.eig.lambdas
        gd = np.diag(self.g).real
        stable = lam.real < 0
        val = np.zeros(self.eig.n)
        with np.errstate(divide="ignore", invalid="ignore"):
            val[stable] = self.mode_weights[stable] * gd[stable] / (-2 * lam.real[stable])
        hot = ~stable & (gd > ZERO_RTOL * self._g_scale)
        val[hot] = np.inf
        return val

    # ---- modal contributions and interactions --------------------------
    @cached_property
    def modal_contributions(self) -> np.ndarray:
        """``E̅_{z_i}``, the share of mode ``i`` in the total state energy."""
        a = self.mgram * self.g
        val = -(a * self._inv_s1).real.sum(axis=1)
        hot = (self.divergent & self._excited(a)).any(axis=1)
        val[hot] = np.inf
        return val

    @cached_property
    def lmie(self) -> np.ndarray:
        """Modal interaction energies ``E̅_{z,ij}``."""
        a = self.mgram * self.g
        b = self.ngram * self.h
        val = -0.5 * (a * self._inv_s1 + b * self._inv_s2).real
        hot = self.divergent & (self._excited(a) | self._excited(b))
        val[hot] = np.inf
        return val

    @cached_property
    def total_state(self) -> float:
        return float(np.sum(self.state_energies))

    @cached_property
    def total_mode(self) -> float:
        return float(np.sum(self.mode_energies))

    # ---- participation factors ----------------------------------------
    @cached_property
    def mislpf(self):
        """``e_ki`` with shape (k, i) and its flags."""
        return _ratio(self.state_mode, self.state_energies[:, None], self._state_scale[:, None])

    @cached_property
    def pair_mislpf(self):
        """``e~_{k(ij)}`` with shape (k, i, j)."""
        return _ratio(
            self.state_mode_pair,
            self.state_energies[:, None, None],
            self._state_scale[:, None, None],
        )

    @cached_property
    def _mode_zero(self):
        return np.diag(self.g).real <= ZERO_RTOL * self._g_scale

    @cached_property
    def simlpf(self):
        """``eps_ki`` with shape (k, i).  Defined for unstable modes too."""
        v = self.eig.v
        y = v @ self.w
        num = (v.conj() * y).real  # (i, k)
        den = np.diag(self.g).real
        out = np.full(num.shape, np.nan)
        ok = ~self._mode_zero
        out[ok] = num[ok] / den[ok, None]
        flags = np.full(num.shape, "", dtype=object)
        flags[~ok] = ZERO_ENERGY
        return out.T, flags.T

    @cached_property
    def pair_simlpf(self):
        """``eps~_{i(kl)}`` with shape (i, k, l)."""
        v = self.eig.v
        num = np.einsum("il,ik,lk->ikl", v.conj(), v, self.w).real
        den = np.diag(self.g).real
        out = np.full(num.shape, np.nan)
        ok = ~self._mode_zero
        out[ok] = num[ok] / den[ok, None, None]
        flags = np.full(num.shape, "", dtype=object)
        flags[~ok] = ZERO_ENERGY
        return out, flags

    @cached_property
    def lmie_state_part(self):
        """``e̅_{k(ij)}``, the share of state ``k`` in ``E̅_{z,ij}``; shape (k, i, j)."""
        v = self.eig.v
        y = v @ self.w  # y[j, k] = (V W)_jk
        alpha = self.mgram * self._inv_s1
        beta = self.ngram * self._inv_s2
        # X_ij = -1/2 (conj(v_i) alpha_ij v_j^T + v_i beta_ij v_j^T);  (X W)_kk
        xw = -0.5 * (
            np.einsum("ik,ij,jk->kij", v.conj(), alpha, y) + np.einsum("ik,ij,jk->kij", v, beta, y)
        )
        # (X^H W)_kk = sum_l conj(X[l, k]) W[l, k]
        xhw = -0.5 * (
            np.einsum("ik,ij,jk->kij", y, alpha.conj(), v.conj())
            + np.einsum("ik,ij,jk->kij", y.conj(), beta.conj(), v.conj())
        )
        part = 0.5 * (xw + xhw).real
        den = self.lmie
        scale = np.abs(part).sum(axis=0)
        out, flags = _ratio(part, den[None], scale[None])
        return out, flags

    # ---- packaging -----------------------------------------------------
    def pf(self, kind: Kind) -> PFMatrix:
        if kind == Kind.MISLPF:
            vals, fl = self.mislpf
        elif kind == Kind.SIMLPF:
            vals, fl = self.simlpf
        elif kind == Kind.PAIR_MISLPF:
            vals, fl = self.pair_mislpf
        elif kind == Kind.PAIR_SIMLPF:
            vals, fl = self.pair_simlpf
        elif kind == Kind.LMIE_STATE_PART:
            vals, fl = self.lmie_state_part
        else:
            raise ValueError(f"{kind} is not an energy-based participation")
        return PFMatrix(kind, vals, ic_policy=self.ic, flags=_flag_dict(fl))


def _lmif_from_averaged(avg: np.ndarray, divergent: np.ndarray):
    n = avg.shape[0]
    out = np.zeros((n, n))
    flags = np.full((n, n), "", dtype=object)
    for i in range(n):
        row_div = divergent[i]
        if row_div.any():
            out[i, row_div] = np.inf
            flags[i, row_div] = DIVERGENT
            continue
        den = np.abs(avg[i]).sum()
        scale = np.abs(avg).max() if np.isfinite(avg).all() else 1.0
        if den <= ZERO_RTOL * max(scale, np.finfo(float).tiny):
            out[i] = np.nan
            flags[i] = UNDEFINED
        else:
            out[i] = avg[i] / den
    return out, flags


def lmif_matrix(eig: EigenStructure):
    """All interaction factors with flags.

    Pairs with ``Re(conj(lam_i) + lam_j) >= 0`` are ``+inf`` by convention; the
    finite entries of such a row are then zero (they vanish against an
    infinite normalizer).
    """
    e = EnergyEngine(eig, SPHERICAL)
    return _lmif_from_averaged(e.lmie, e.divergent)


@dataclass
class EnergyReport:
    state_energies: np.ndarray
    mode_energies: np.ndarray
    modal_contributions: np.ndarray
    total_state: float
    total_mode: float
    pair_state: np.ndarray
    lmie: np.ndarray
    divergent: dict = field(default_factory=dict)


def energy_report(eig: EigenStructure, ic: InitialCondition = SPHERICAL) -> EnergyReport:
    e = EnergyEngine(eig, ic)
    div = {}
    for name in ("state_energies", "mode_energies", "modal_contributions", "lmie"):
        arr = getattr(e, name)
        idx = [tuple(int(t) for t in ix) for ix in zip(*np.nonzero(~np.isfinite(arr)))]
        if idx:
            div[name] = idx
    return EnergyReport(
        state_energies=e.state_energies,
        mode_energies=e.mode_energies,
        modal_contributions=e.modal_contributions,
        total_state=e.total_state,
        total_mode=e.total_mode,
        pair_state=e.state_mode_pair,
        lmie=e.lmie,
        divergent=div,
    )


# ---- single-value entry points --------------------------------------------


def _pairs_str(pairs):
    return ", ".join(f"({i + 1},{j + 1})" for i, j in pairs)


def _raise_divergent(eng, i, js):
    bad = [(i, j) for j in js if eng.divergent[i, j]]
    if bad:
        raise DivergentPair(f"divergent mode pair(s) {_pairs_str(bad)}", bad)


def state_energy(eig, ic: InitialCondition, k: int) -> float:
    """``E_{x_k}``; ``+inf`` when an excited mode is unstable."""
    return float(EnergyEngine(eig, ic).state_energies[k])


def mode_energy(eig, ic: InitialCondition, i: int) -> float:
    """``E_{z_i}`` with its invariant weight; ``+inf`` for an excited unstable mode."""
    return float(EnergyEngine(eig, ic).mode_energies[i])


def _check_state_den(eng, k):
    e = eng.state_energies[k]
    if not np.isfinite(e):
        raise UnstableSystem(f"state {k + 1} energy diverges (unstable mode excited)")
    if abs(e) <= ZERO_RTOL * eng._state_scale[k]:
        raise ZeroEnergy(f"state {k + 1} accumulates no energy for this initial condition")


def mislpf(eig, ic: InitialCondition, k: int) -> np.ndarray:
    """Mode-in-state Lyapunov participations ``e_ki`` over modes ``i``."""
    eng = EnergyEngine(eig, ic)
    _check_state_den(eng, k)
    return eng.mislpf[0][k].copy()


def mislpf_generalized(eig, k: int, l: int) -> np.ndarray:
    """``e_kil``: mode shares of state ``k`` energy for the start ``x0 = e_l``."""
    return mislpf(eig, InitialCondition.unit(l), k)


def simlpf(eig, ic: InitialCondition, i: int) -> np.ndarray:
    """State-in-mode Lyapunov participations ``eps_ki`` over states ``k``."""
    eng = EnergyEngine(eig, ic)
    if eng._mode_zero[i]:
        raise ZeroEnergy(f"mode {i + 1} is not excited by this initial condition")
    return eng.simlpf[0][:, i].copy()


def modal_contribution(eig, ic: InitialCondition, i: int) -> float:
    eng = EnergyEngine(eig, ic)
    _raise_divergent(eng, i, range(eig.n))
    return float(eng.modal_contributions[i])


def lmie(eig, ic: InitialCondition, i: int, j: int) -> float:
    eng = EnergyEngine(eig, ic)
    _raise_divergent(eng, i, [j])
    return float(eng.lmie[i, j])


def lmie_averaged(eig, i: int, j: int) -> float:
    """Interaction energy averaged over unit-covariance initial states (trace form)."""
    lam = eig.lambdas
    if lam[i].real + lam[j].real >= 0:
        raise DivergentPair(f"divergent mode pair {_pairs_str([(i, j)])}", [(i, j)])
    ri = np.outer(eig.u[:, i], eig.v[i])
    rj = np.outer(eig.u[:, j], eig.v[j])
    c2 = eig.weights
    t1 = np.trace(ri.conj().T @ (c2[:, None] * rj)) / (np.conj(lam[i]) + lam[j])
    t2 = np.trace(ri.T @ (c2[:, None] * rj)) / (lam[i] + lam[j])
    return float(-0.5 * (t1 + t2).real)


def lmif(eig, i: int) -> np.ndarray:
    """Interaction factors ``LMIF_ij`` over ``j`` (``+inf`` for divergent pairs)."""
    return lmif_matrix(eig)[0][i].copy()


def pair_mislpf(eig, ic: InitialCondition, k: int, i: int, j: int) -> float:
    eng = EnergyEngine(eig, ic)
    _raise_divergent(eng, i, [j])
    _check_state_den(eng, k)
    return float(eng.pair_mislpf[0][k, i, j])


def pair_simlpf(eig, ic: InitialCondition, i: int, k: int, l: int) -> float:
    eng = EnergyEngine(eig, ic)
    if eng._mode_zero[i]:
        raise ZeroEnergy(f"mode {i + 1} is not excited by this initial condition")
    return float(eng.pair_simlpf[0][i, k, l])


def state_participation_lmie(eig, ic: InitialCondition, k: int, i: int, j: int) -> float:
    eng = EnergyEngine(eig, ic)
    _raise_divergent(eng, i, [j])
    vals, flags = eng.lmie_state_part
    if flags[k, i, j] == ZERO_ENERGY:
        raise ZeroEnergy(f"interaction energy of modes ({i + 1},{j + 1}) is zero")
    return float(vals[k, i, j])


@dataclass(frozen=True)
class Property1Forms:
    """PF-based closed forms against the energy-engine values (state ``k``, start ``e_k``)."""

    state_mode: float  # E_{x_k} e_ki
    state_mode_ref: float
    state_pair: Optional[float]  # E_{x_k} e~_{k(ij)}
    state_pair_ref: Optional[float]

    @property
    def deviation(self) -> float:
        d = abs(self.state_mode - self.state_mode_ref) / max(abs(self.state_mode_ref), 1e-300)
        if self.state_pair is not None:
            dp = abs(self.state_pair - self.state_pair_ref) / max(abs(self.state_pair_ref), 1e-300)
            d = max(d, dp)
        return d


def _mis_values(pf: PFMatrix, n: int) -> np.ndarray:
    vals = np.asarray(pf.values)
    if pf.kind == Kind.CONVENTIONAL_MIS:
        return vals
    if pf.kind == Kind.GENERALIZED:
        idx = np.arange(n)
        return vals[idx, :, idx]
    raise ValueError(f"expected CONVENTIONAL_MIS or GENERALIZED participations, got {pf.kind}")


def property1_forms(eig, pf: PFMatrix, k: int, i: int, j: Optional[int] = None, tol=None):
    """Energies of state ``k`` written through conventional participations only.

    ``E_{x_k} e_ki = -Re(conj(p_ki) [(conj(lam_i) I + A)^{-1}]_kk)`` and
    ``E_{x_k} e~_{k(ij)} = -1/2 Re(conj(p_ki) p_kj / (conj(lam_i) + lam_j)
    + p_ki p_kj / (lam_i + lam_j))``.  ``pf`` may hold measured eigenvalue
    sensitivities ``d lam_i / d a_kk`` instead of exact participations.  With
    ``tol`` set, an AssertionError is raised when the relative deviation from
    the energy engine exceeds it.
    """
    n = eig.n
    p = _mis_values(pf, n)
    lam = eig.lambdas
    res = np.linalg.inv(np.conj(lam[i]) * np.eye(n) + eig.a)
    sm = float(-(np.conj(p[k, i]) * res[k, k]).real)
    eng = EnergyEngine(eig, InitialCondition.unit(k))
    sm_ref = float(eng.state_mode[k, i] / eig.weights[k])
    sp = sp_ref = None
    if j is not None:
        t = np.conj(p[k, i]) * p[k, j] / (np.conj(lam[i]) + lam[j]) + p[k, i] * p[k, j] / (lam[i] + lam[j])
        sp = float(-0.5 * t.real)
        sp_ref = float(eng.state_mode_pair[k, i, j] / eig.weights[k])
    out = Property1Forms(sm, sm_ref, sp, sp_ref)
    if tol is not None and out.deviation > tol:
        raise AssertionError(f"participation closed form deviates by {out.deviation:.3e} > {tol:.1e}")
    return out
