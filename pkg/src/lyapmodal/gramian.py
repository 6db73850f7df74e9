"""Lyapunov solvers and sub-Gramian decompositions.

All functions solve ``A^* P + P A = -Q``.  The direct solver is a dense
Schur-based method; the spectral routines assemble the same matrices from
eigenvectors, so the two routes can check each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DivergentPair, UnstableSystem
from .spectral import EigenStructure, Kind, PFMatrix, _as_state_matrix, residues

__all__ = [
    "hermitian_part",
    "solve_lyapunov",
    "spectral_gramian",
    "sub_gramian_local",
    "sub_gramian_single",
    "sub_gramian_single_from_pairs",
    "sub_gramian_pair",
    "subgramian_via_pf",
    "divergent_pairs",
    "GramianBundle",
    "ResidualReport",
    "build_bundle",
    "verify_bundle",
]


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _check_q(q, n):
    q = np.asarray(q)
    if q.shape != (n, n):
        raise ValueError(f"Q must be {n}x{n}, got {q.shape}")
    if not np.allclose(q, q.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(q).max())):
        raise ValueError("Q must be Hermitian")
    return q


def _maybe_real(p, q):
    return p.real.copy() if np.isrealobj(q) else p


def divergent_pairs(lambdas) -> list:
    """Index pairs with ``Re(conj(lam_i) + lam_j) >= 0``."""
    lam = np.asarray(lambdas)
    re = lam.real[:, None] + lam.real[None, :]
    return [tuple(ij) for ij in np.argwhere(re >= 0).tolist()]


def _raise_if_unstable(lambdas, what="the Gramian"):
    lam = np.asarray(lambdas)
    bad = np.flatnonzero(lam.real >= 0)
    if bad.size:
        i = int(bad[0])
        raise UnstableSystem(
            f"{what} does not exist: mode {i + 1} (lambda={lam[i]:.6g}) has Re >= 0, "
            f"divergent pair ({i + 1},{i + 1})",
            pairs=divergent_pairs(lam),
        )


def solve_lyapunov(a, q) -> np.ndarray:
    """Direct dense solution of ``A^* P + P A = -Q`` (Bartels-Stewart).

    Raises
    ------
    UnstableSystem
        If ``A`` has an eigenvalue with non-negative real part.
    """
    sm = _as_state_matrix(a)
    q = _check_q(q, sm.n)
    _raise_if_unstable(np.linalg.eigvals(sm.a))
    p = scipy.linalg.solve_continuous_lyapunov(sm.a.conj().T, -q)
    return _maybe_real(hermitian_part(p), q)


def spectral_gramian(eig: EigenStructure, q) -> np.ndarray:
    """``P = -sum_ij R_i^* Q R_j / (conj(lam_i) + lam_j)``."""
    q = _check_q(q, eig.n)
    _raise_if_unstable(eig.lambdas)
    lam = eig.lambdas
    x = -(eig.u.conj().T @ q @ eig.u) / (lam.conj()[:, None] + lam[None, :])
    p = eig.v.conj().T @ x @ eig.v
    return _maybe_real(hermitian_part(p), q)


def sub_gramian_local(a, lam, u, v, q) -> np.ndarray:
    """Single-mode sub-Gramian from one eigentriple and ``A`` only.

    ``-{conj(v) u^* Q (conj(lam) I + A)^{-1}}_H``.  Only ``Re(lam) < 0`` is
    checked here; interaction with the rest of the spectrum is the caller's
    business.
    """
    a = _as_state_matrix(a).a
    lam = complex(lam)
    if lam.real >= 0:
        raise DivergentPair(f"mode with lambda={lam:.6g} is not strictly stable")
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    row = u.conj() @ q
    y = np.linalg.solve((np.conj(lam) * np.eye(a.shape[0]) + a).T, row)
    return -hermitian_part(np.outer(v.conj(), y))


def _check_mode_pairs(eig, i, js):
    lam = eig.lambdas
    bad = [(i, j) for j in js if lam[i].real + lam[j].real >= 0]
    if bad:
        txt = ", ".join(f"({p + 1},{r + 1})" for p, r in bad)
        raise DivergentPair(f"divergent mode pair(s) {txt}: Re(conj(lam_i) + lam_j) >= 0", bad)


def sub_gramian_single(eig: EigenStructure, q, i: int) -> np.ndarray:
    q = _check_q(q, eig.n)
    _check_mode_pairs(eig, i, range(eig.n))
    return sub_gramian_local(eig.a, eig.lambdas[i], eig.u[:, i], eig.v[i], q)


def sub_gramian_pair(eig: EigenStructure, q, i: int, j: int) -> np.ndarray:
    q = _check_q(q, eig.n)
    _check_mode_pairs(eig, i, [j])
    lam = eig.lambdas
    coef = (eig.u[:, i].conj() @ q @ eig.u[:, j]) / (np.conj(lam[i]) + lam[j])
    return -hermitian_part(coef * np.outer(eig.v[i].conj(), eig.v[j]))


def sub_gramian_single_from_pairs(eig: EigenStructure, q, i: int) -> np.ndarray:
    """``sum_j P_ij``, i.e. the single sub-Gramian assembled from pair terms."""
    return sum(sub_gramian_pair(eig, q, i, j) for j in range(eig.n))


def subgramian_via_pf(eig: EigenStructure, pf: PFMatrix, q, i: int, j: Optional[int] = None):
    """Sub-Gramians computed from generalized participations only.

    ``pf.values[k, i, l]`` may be exact participations or measured
    eigenvalue sensitivities ``d lam_i / d a_lk`` with the same layout.
    """
    if pf.kind != Kind.GENERALIZED:
        raise ValueError(f"expected GENERALIZED participations, got {pf.kind}")
    q = _check_q(q, eig.n)
    p = np.asarray(pf.values)
    lam = eig.lambdas
    # (R_i^*)[k, l] = conj(p_lik)
    ri_star = p[:, i, :].conj().T
    if j is None:
        _check_mode_pairs(eig, i, range(eig.n))
        res = np.conj(lam[i]) * np.eye(eig.n) + eig.a
        m = np.linalg.solve(res.T, (ri_star @ q).T).T
        return -hermitian_part(m)
    _check_mode_pairs(eig, i, [j])
    rj = p[:, j, :]
    return -hermitian_part(ri_star @ q @ rj / (np.conj(lam[i]) + lam[j]))


@dataclass
class GramianBundle:
    """A Gramian with its single and pairwise sub-Gramian decompositions.

    Divergent entries are absent: ``p`` is None when any pair diverges,
    ``singles[i]`` is None when mode ``i`` takes part in a divergent pair, and
    ``pairs`` has no key for a divergent ``(i, j)``.
    """

    q: np.ndarray
    p: Optional[np.ndarray]
    singles: list
    pairs: dict
    divergent_pairs: set = field(default_factory=set)
    residual_full: float = float("nan")
    residual_singles: np.ndarray = None
    residual_pairs: np.ndarray = None


@dataclass(frozen=True)
class ResidualReport:
    q_norm: float
    full: float
    singles: np.ndarray
    pairs: np.ndarray

    @property
    def max_relative(self) -> float:
        vals = np.concatenate([[self.full], self.singles.ravel(), self.pairs.ravel()])
        vals = vals[np.isfinite(vals)]
        return float(vals.max() / self.q_norm) if vals.size else 0.0


def _all_pairs(eig, q):
    lam = eig.lambdas
    s = lam.conj()[:, None] + lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = -(eig.u.conj().T @ q @ eig.u) / s
    m = np.einsum("ik,jl,ij->ijkl", eig.v.conj(), eig.v, x)
    return 0.5 * (m + m.conj().transpose(0, 1, 3, 2))


def build_bundle(eig: EigenStructure, q=None) -> GramianBundle:
    """Compute P, every P~_i and every P_ij that exists, plus residuals."""
    n = eig.n
    q = np.eye(n) if q is None else _check_q(q, n)
    div = set(divergent_pairs(eig.lambdas))
    p = None if div else solve_lyapunov(eig.a, q)
    pairs_all = _all_pairs(eig, q)
    pairs = {
        (i, j): pairs_all[i, j]
        for i in range(n)
        for j in range(n)
        if (i, j) not in div
    }
    bad_modes = {i for i, _ in div}
    singles = [
        None
        if i in bad_modes
        else sub_gramian_local(eig.a, eig.lambdas[i], eig.u[:, i], eig.v[i], q)
        for i in range(n)
    ]
    bundle = GramianBundle(q=q, p=p, singles=singles, pairs=pairs, divergent_pairs=div)
    rep = verify_bundle(eig, bundle)
    bundle.residual_full = rep.full
    bundle.residual_singles = rep.singles
    bundle.residual_pairs = rep.pairs
    return bundle


def _lyap_defect(a, x, rhs):
    return float(np.linalg.norm(a.conj().T @ x + x @ a + rhs))


def verify_bundle(eig_or_a, bundle: GramianBundle) -> ResidualReport:
    """Frobenius residuals of every Lyapunov equation in the bundle.

    Absent (divergent) entries report NaN.  ``eig_or_a`` may be the
    EigenStructure the bundle came from or the bare matrix.
    """
    eig = eig_or_a if isinstance(eig_or_a, EigenStructure) else None
    a = eig.a if eig is not None else _as_state_matrix(eig_or_a).a
    if eig is None:
        from .spectral import eigendecompose

        eig = eigendecompose(a)
    q = bundle.q
    n = a.shape[0]
    r = residues(eig).r
    full = float("nan") if bundle.p is None else _lyap_defect(a, bundle.p, q)
    singles = np.full(n, np.nan)
    for i, s in enumerate(bundle.singles):
        if s is not None:
            singles[i] = _lyap_defect(a, s, 0.5 * (r[i].conj().T @ q + q @ r[i]))
    pairs = np.full((n, n), np.nan)
    for (i, j), pij in bundle.pairs.items():
        rhs = 0.5 * (r[i].conj().T @ q @ r[j] + r[j].conj().T @ q @ r[i])
        pairs[i, j] = _lyap_defect(a, pij, rhs)
    return ResidualReport(float(np.linalg.norm(q)), full, singles, pairs)
