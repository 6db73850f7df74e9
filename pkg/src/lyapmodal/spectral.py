"""Eigenstructure, residue matrices and conventional participation factors.

Conventions
-----------
* ``u[:, i]`` is the right eigenvector of mode ``i``; ``v[i, :]`` is the left
  eigenvector, so that ``a = u @ diag(lambdas) @ v`` and ``u @ v = I``.
* Eigenvalues are sorted by (Re descending, |Im| ascending), so the least
  damped mode comes first.  Complex conjugate pairs are adjacent, positive
  imaginary part first.
* Normalized structures have ``|u_i| = 1``, the largest-magnitude component of
  ``u_i`` real and positive, and exactly conjugated vectors inside a pair.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NonSimpleSpectrum, SingularEigenbasis

__all__ = [
    "StateMatrix",
    "EigenStructure",
    "ResidueSet",
    "Kind",
    "PFMatrix",
    "SensitivityReport",
    "eigendecompose",
    "residues",
    "conventional_pf",
    "generalized_pf",
    "simpf",
    "finite_difference_sensitivities",
    "eigenvalue_sensitivity_check",
]

DEFAULT_TOL = 1e-8
SINGULAR_COND = 1e12
# relative tolerance for picking the phase-reference component
_PHASE_RTOL = 1e-9


@dataclass(frozen=True)
class StateMatrix:
    """Real square dynamics matrix with optional per-state scale factors."""

    a: np.ndarray
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"state matrix must be square and non-empty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("state matrix has non-finite entries")
        object.__setattr__(self, "a", a)
        if self.scale is not None:
            c = np.array(self.scale, dtype=float).reshape(-1)
            if c.shape != (a.shape[0],):
                raise ValueError(f"scale must have {a.shape[0]} entries, got {c.size}")
            if not np.all(np.isfinite(c)) or np.any(c <= 0):
                raise ValueError("scale entries must be finite and strictly positive")
            object.__setattr__(self, "scale", c)

    @property
    def n(self) -> int:
        return self.a.shape[0]


def _as_state_matrix(a) -> StateMatrix:
    return a if isinstance(a, StateMatrix) else StateMatrix(a)


@dataclass(frozen=True)
class EigenStructure:
    a: np.ndarray
    lambdas: np.ndarray
    u: np.ndarray
    v: np.ndarray
    conj_pair: np.ndarray
    min_gap: float
    cond_u: float
    normalized: bool = True
    scale: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Squared state scale factors (all ones when no scale was given)."""
        if self.scale is None:
            return np.ones(self.n)
        return self.scale**2

    def is_real_mode(self, i: int) -> bool:
        return int(self.conj_pair[i]) == i

    def permuted(self, perm) -> "EigenStructure":
        """Same decomposition with mode ``t`` taken from old mode ``perm[t]``."""
        perm = np.asarray(perm, dtype=int)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return replace(
            self,
            lambdas=self.lambdas[perm],
            u=self.u[:, perm],
            v=self.v[perm],
            conj_pair=inv[self.conj_pair[perm]],
        )

    @classmethod
    def from_eigenpairs(cls, a, lambdas, u, v=None, *, normalize=True, tol=DEFAULT_TOL):
        """Build a structure from externally supplied eigenpairs.

        ``u`` may carry any per-mode scaling (conjugate within pairs).  With
        ``normalize=False`` the supplied scaling is kept, which is how the
        scaling-freedom invariance of the indicators is exercised.
        """
        sm = _as_state_matrix(a)
        lam = np.asarray(lambdas, dtype=complex).copy()
        u = np.asarray(u, dtype=complex).copy()
        pair = _conjugate_pairing(lam)
        if normalize:
            u = _normalize_columns(u, pair)
            v = None
        if v is None:
            v = _inverse(u)
        else:
            v = np.asarray(v, dtype=complex).copy()
        _enforce_conjugate_rows(v, pair)
        return cls._finish(sm, lam, u, v, pair, normalize, tol)

    @classmethod
    def _finish(cls, sm, lam, u, v, pair, normalized, tol):
        n = lam.shape[0]
        gap = _min_gap(lam)
        scale = max(float(np.max(np.abs(lam))), np.finfo(float).tiny)
        if n > 1 and gap < tol * scale:
            raise NonSimpleSpectrum(
                f"eigenvalues closer than tol*max|lambda| ({gap:.3e} < {tol * scale:.3e})"
            )
        cond = float(np.linalg.cond(u))
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise SingularEigenbasis(f"eigenvector matrix numerically singular (cond={cond:.3e})")
        return cls(
            a=sm.a,
            lambdas=lam,
            u=u,
            v=v,
            conj_pair=pair,
            min_gap=gap,
            cond_u=cond,
            normalized=normalized,
            scale=sm.scale,
        )


def _min_gap(lam: np.ndarray) -> float:
    if lam.shape[0] < 2:
        return float("inf")
    d = np.abs(lam[:, None] - lam[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def _conjugate_pairing(lam: np.ndarray) -> np.ndarray:
    """Map each index to the index of its conjugate (itself for real modes)."""
    n = lam.shape[0]
    pair = np.arange(n)
    free = set(range(n))
    for i in range(n):
        if i not in free:
            continue
        free.discard(i)
        if lam[i].imag == 0:
            continue
        cands = [j for j in free if lam[j].imag * lam[i].imag < 0]
        if not cands:
            raise ValueError(f"eigenvalue {lam[i]} has no conjugate partner")
        j = min(cands, key=lambda j: abs(lam[j] - np.conj(lam[i])))
        pair[i], pair[j] = j, i
        free.discard(j)
    return pair


def _normalize_columns(u: np.ndarray, pair: np.ndarray) -> np.ndarray:
    u = u.copy()
    for i in range(u.shape[1]):
        j = pair[i]
        if j < i:
            continue
        col = u[:, i] / np.linalg.norm(u[:, i])
        mag = np.abs(col)
        ref = int(np.flatnonzero(mag >= mag.max() * (1 - _PHASE_RTOL))[0])
        col = col * (np.conj(col[ref]) / mag[ref])
        if j == i:
            col = col.real.astype(complex)
        u[:, i] = col
        if j != i:
            u[:, j] = np.conj(col)
    return u


def _inverse(u: np.ndarray) -> np.ndarray:
    lu, piv = scipy.linalg.lu_factor(u)
    return scipy.linalg.lu_solve((lu, piv), np.eye(u.shape[0], dtype=complex))


def _enforce_conjugate_rows(v: np.ndarray, pair: np.ndarray) -> None:
    for i in range(v.shape[0]):
        j = pair[i]
        if j == i:
            v[i] = v[i].real
        elif j > i:
            avg = 0.5 * (v[i] + np.conj(v[j]))
            v[i] = avg
            v[j] = np.conj(avg)


def eigendecompose(a, tol: float = DEFAULT_TOL) -> EigenStructure:
    """Eigendecomposition with deterministic ordering and normalization.

    Parameters
    ----------
    a : StateMatrix or array_like
        Real square dynamics matrix.
    tol : float
        Relative simple-spectrum tolerance; the decomposition is refused when
        the smallest eigenvalue gap is below ``tol * max|lambda|``.

    Raises
    ------
    NonSimpleSpectrum
        Repeated (or numerically repeated) eigenvalues.
    SingularEigenbasis
        Numerically defective matrix.
    """
    sm = _as_state_matrix(a)
    w, x = np.linalg.eig(sm.a)
    w = np.asarray(w, dtype=complex)
    x = np.asarray(x, dtype=complex)

    blocks = []
    for i in range(w.shape[0]):
        if w[i].imag == 0:
            blocks.append(((w[i].real, 0.0), [(w[i], x[:, i].real.astype(complex))]))
        elif w[i].imag > 0:
            blocks.append(
                ((w[i].real, w[i].imag), [(w[i], x[:, i]), (np.conj(w[i]), np.conj(x[:, i]))])
            )
    blocks.sort(key=lambda b: (-b[0][0], b[0][1]))
    members = [m for _, ms in blocks for m in ms]
    if len(members) != w.shape[0]:
        raise NonSimpleSpectrum("unpaired complex eigenvalues returned by the eigensolver")
    lam = np.array([m[0] for m in members], dtype=complex)
    u = np.column_stack([m[1] for m in members])

    pair = np.arange(lam.shape[0])
    for i in range(lam.shape[0]):
        if lam[i].imag > 0:
            pair[i], pair[i + 1] = i + 1, i
    u = _normalize_columns(u, pair)
    v = _inverse(u)
    _enforce_conjugate_rows(v, pair)
    return EigenStructure._finish(sm, lam, u, v, pair, True, tol)


@dataclass(frozen=True)
class ResidueSet:
    r: np.ndarray  # shape (n, n, n); r[i] is the residue of mode i

    def __len__(self):
        return self.r.shape[0]

    def __getitem__(self, i):
        return self.r[i]


def residues(eig: EigenStructure) -> ResidueSet:
    """Residues of the resolvent, ``R_i = u_i v_i^T``."""
    r = np.einsum("ki,il->ikl", eig.u, eig.v)
    return ResidueSet(r=r)


class Kind(str, enum.Enum):
    CONVENTIONAL_MIS = "CONVENTIONAL_MIS"
    GENERALIZED = "GENERALIZED"
    SIMPF = "SIMPF"
    MISLPF = "MISLPF"
    SIMLPF = "SIMLPF"
    PAIR_MISLPF = "PAIR_MISLPF"
    PAIR_SIMLPF = "PAIR_SIMLPF"
    LMIE_STATE_PART = "LMIE_STATE_PART"


@dataclass(frozen=True)
class PFMatrix:
    """Participation values with an axis layout fixed by ``kind``.

    ========================  =================  ==========================
    kind                      shape              axes
    ========================  =================  ==========================
    CONVENTIONAL_MIS, SIMPF,  (n, n)             (state k, mode i)
    MISLPF, SIMLPF
    GENERALIZED               (n, n, n)          (state k, mode i, state l)
    PAIR_MISLPF               (n, n, n)          (state k, mode i, mode j)
    PAIR_SIMLPF               (n, n, n)          (mode i, state k, state l)
    LMIE_STATE_PART           (n, n, n)          (state k, mode i, mode j)
    ========================  =================  ==========================
    """

    kind: Kind
    values: np.ndarray
    ic_policy: object = None
    flags: dict = field(default_factory=dict)


def conventional_pf(eig: EigenStructure) -> PFMatrix:
    """Mode-in-state participation factors ``p_ki = u_i^k v_i^k``."""
    return PFMatrix(Kind.CONVENTIONAL_MIS, eig.u * eig.v.T)


def generalized_pf(eig: EigenStructure) -> PFMatrix:
    """Generalized participations ``p_kil = u_i^k v_i^l``."""
    return PFMatrix(Kind.GENERALIZED, np.einsum("ki,il->kil", eig.u, eig.v))


def simpf(eig: EigenStructure) -> PFMatrix:
    v2 = np.abs(eig.v) ** 2
    return PFMatrix(Kind.SIMPF, (v2 / v2.sum(axis=1, keepdims=True)).T)


@dataclass(frozen=True)
class SensitivityReport:
    max_deviation: float
    # fd[k, i, l] ~ d lambda_i / d a_lk, same layout as GENERALIZED
    fd: np.ndarray
    analytic: np.ndarray
    delta: float


def _match_nearest(ref: np.ndarray, cand: np.ndarray) -> np.ndarray:
    d = np.abs(ref[:, None] - cand[None, :])
    order = np.argsort(d, axis=1)
    idx = order[:, 0]
    if len(set(idx.tolist())) != len(idx):
        raise NonSimpleSpectrum("nearest-eigenvalue matching is not one-to-one")
    if d.shape[1] > 1:
        rows = np.arange(d.shape[0])
        first, second = d[rows, order[:, 0]], d[rows, order[:, 1]]
        if np.any(second - first <= 1e-12 * np.max(np.abs(ref))):
            raise NonSimpleSpectrum("ambiguous nearest-eigenvalue match")
    return idx


def finite_difference_sensitivities(a, eig: EigenStructure, delta: float = 1e-6, tol=DEFAULT_TOL):
    """Central differences ``(lam_i(a_lk + d) - lam_i(a_lk - d)) / 2d``.

    Returned with the GENERALIZED layout ``fd[k, i, l]``.
    """
    base = _as_state_matrix(a).a
    n = base.shape[0]
    scale = max(float(np.max(np.abs(eig.lambdas))), np.finfo(float).tiny)
    fd = np.zeros((n, n, n), dtype=complex)
    for l in range(n):
        for k in range(n):
            vals = []
            for sgn in (1.0, -1.0):
                ap = base.copy()
                ap[l, k] += sgn * delta
                w = np.linalg.eigvals(ap).astype(complex)
                if n > 1 and _min_gap(w) < tol * scale:
                    raise NonSimpleSpectrum(f"perturbed matrix (a[{l},{k}]) has a repeated eigenvalue")
                vals.append(w[_match_nearest(eig.lambdas, w)])
            fd[k, :, l] = (vals[0] - vals[1]) / (2 * delta)
    return fd


def eigenvalue_sensitivity_check(a, eig: EigenStructure, delta: float = 1e-6) -> SensitivityReport:
    """Compare generalized participations with finite-difference sensitivities.

    The deviation of mode ``i`` is normalized by ``max_{k,l} |p_kil|`` so that
    structurally zero participations do not produce spurious relative errors.
    """
    fd = finite_difference_sensitivities(a, eig, delta)
    p = generalized_pf(eig).values
    err = np.abs(fd - p).max(axis=(0, 2))
    ref = np.abs(p).max(axis=(0, 2))
    return SensitivityReport(float(np.max(err / ref)), fd, p, delta)
