"""Brute-force time-domain check of the closed-form energies.

Trajectories are propagated with the exact one-step transition matrix
``expm(A h)`` and squared signals are integrated with composite Simpson.
Nothing here uses eigenvectors except to form the modal coordinates
``z = V x`` for the mode-energy integrals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from .energy import EnergyEngine, InitialCondition
from .errors import HorizonTooShort, UnstableSystem
from .spectral import EigenStructure, _as_state_matrix, eigendecompose

__all__ = [
    "Trajectory",
    "default_horizon",
    "default_step",
    "integrate_trajectory",
    "quadrature_state_energy",
    "quadrature_mode_energy",
    "quadrature_cross_term",
    "OracleRow",
    "OracleReport",
    "oracle_report",
]

TAIL_RTOL = 1e-8


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (m, n) or (m, n, batch)
    modes: Optional[np.ndarray] = None
    a: Optional[np.ndarray] = None


def default_horizon(lambdas) -> float:
    alpha = float(np.max(np.real(lambdas)))
    if alpha >= 0:
        raise UnstableSystem("quadrature oracle needs a strictly stable matrix")
    return min(math.log(1e8) / abs(alpha), 1e4)


def default_step(lambdas, horizon: float) -> float:
    """Step ``min(0.01, 0.05/max|lambda|, T/1e4)``.

    The resolution term is tighter than ``0.1/max|lambda|``: Simpson's error on
    ``exp(-2 a t)`` is about ``(2 a h)^4 / 180``, which only stays below 1e-6 for
    ``a h`` around 0.05 or less.
    """
    rho = float(np.max(np.abs(lambdas)))
    return min(0.01, 0.05 / rho if rho > 0 else 0.01, horizon / 1e4)


def integrate_trajectory(a, x0, horizon: float, step: float, *, warn: bool = True) -> Trajectory:
    """Sample ``x(t) = expm(A t) x0`` on a uniform grid by repeated exact steps.

    ``x0`` may be a vector or an (n, batch) array of initial states.  The
    number of steps is rounded up to an even count so Simpson's rule applies.
    """
    a = _as_state_matrix(a).a
    if horizon <= 0 or step <= 0:
        raise ValueError("horizon and step must be positive")
    x0 = np.asarray(x0, dtype=float)
    m = int(math.ceil(horizon / step))
    m += m % 2
    h = horizon / m
    phi = scipy.linalg.expm(a * h)
    xs = np.empty((m + 1,) + x0.shape)
    xs[0] = x0
    for t in range(m):
        xs[t + 1] = phi @ xs[t]
    times = np.linspace(0.0, horizon, m + 1)
    traj = Trajectory(times=times, states=xs, a=a)
    if warn:
        _tail_check(traj)
    return traj


def _tail_check(traj: Trajectory):
    a = traj.a
    lam = np.linalg.eigvals(a)
    alpha = float(np.max(lam.real))
    if alpha >= 0:
        warnings.warn("trajectory of an unstable system: energies do not converge", HorizonTooShort)
        return
    # ||x(t)|| <= cond(U) e^{alpha (t - T)} ||x(T)|| bounds the neglected tail
    try:
        cond = eigendecompose(a).cond_u
    except Exception:
        cond = 1e6
    xt = traj.states[-1]
    tail = cond**2 * np.sum(xt**2, axis=0) / (2 * abs(alpha))
    acc = scipy.integrate.simpson(np.sum(traj.states**2, axis=1), x=traj.times, axis=0)
    if np.any(tail > TAIL_RTOL * np.maximum(acc, np.finfo(float).tiny)):
        warnings.warn(
            f"horizon T={traj.times[-1]:.4g} leaves a tail above {TAIL_RTOL:g} of the energy",
            HorizonTooShort,
        )


def quadrature_state_energy(traj: Trajectory, k: int, scale=None):
    """``int_0^T c_k^2 x_k(t)^2 dt`` (one value per initial state in a batch)."""
    y = traj.states[:, k] ** 2
    c2 = 1.0 if scale is None else float(scale[k]) ** 2
    return c2 * scipy.integrate.simpson(y, x=traj.times, axis=0)


def quadrature_mode_energy(eig: EigenStructure, x0, i: int, horizon=None, step=None, traj=None):
    """``int |u_i|^2 |z_i(t)|^2 dt`` with ``z_i`` read off a sampled trajectory."""
    if traj is None:
        horizon = default_horizon(eig.lambdas) if horizon is None else horizon
        step = default_step(eig.lambdas, horizon) if step is None else step
        traj = integrate_trajectory(eig.a, x0, horizon, step)
    z = np.tensordot(eig.v[i], traj.states, axes=([0], [1]))
    if eig.scale is None:
        weight = float(np.sum(np.abs(eig.u[:, i]) ** 2))
    else:
        weight = float(abs(eig.scale @ eig.u[:, i]) ** 2)
    return weight * scipy.integrate.simpson(np.abs(z) ** 2, x=traj.times, axis=0)


def quadrature_cross_term(eig: EigenStructure, x0, k: int, i: int, j: int, horizon=None, step=None):
    """Integral of the isolated ``(i, j)`` cross term in ``x_k(t)^2``.

    Returns ``int 2 Re{conj(c_i(t)) c_j(t)}``-style averages, namely
    ``int Re(conj(c_i) c_j + c_i c_j) dt`` with ``c_i(t) = u_i^k z_i(0) e^{lam_i t}``,
    which equals ``2 x0^T P_{x_k ij} x0``.
    """
    horizon = default_horizon(eig.lambdas) if horizon is None else horizon
    step = default_step(eig.lambdas, horizon) if step is None else step
    m = int(math.ceil(horizon / step))
    m += m % 2
    t = np.linspace(0.0, horizon, m + 1)
    z0 = eig.v @ np.asarray(x0, dtype=float)
    ci = eig.u[k, i] * z0[i] * np.exp(eig.lambdas[i] * t)
    cj = eig.u[k, j] * z0[j] * np.exp(eig.lambdas[j] * t)
    return float(scipy.integrate.simpson((np.conj(ci) * cj + ci * cj).real, x=t))


@dataclass(frozen=True)
class OracleRow:
    quantity: str  # "state" or "mode"
    index: int
    x0: tuple
    closed_form: float
    quadrature: float
    # largest energy of the same kind and start; floor for near-zero values
    scale: float = 0.0

    @property
    def deviation(self) -> float:
        ref = max(abs(self.closed_form), 1e-6 * self.scale)
        if ref == 0:
            return 0.0 if self.quadrature == 0 else float("inf")
        return abs(self.closed_form - self.quadrature) / ref


@dataclass(frozen=True)
class OracleReport:
    rows: list
    horizon: float
    step: float

    @property
    def max_deviation(self) -> float:
        return max((r.deviation for r in self.rows), default=0.0)


def oracle_report(
    a,
    x0s,
    ks: Optional[Sequence[int]] = None,
    modes: Optional[Sequence[int]] = None,
    horizon=None,
    step=None,
    eig: Optional[EigenStructure] = None,
) -> OracleReport:
    """Closed-form against quadrature energies for each initial state in ``x0s``.

    Energies that are zero in closed form (state not reached by the start, or
    mode not excited) are compared on an absolute scale set by the largest
    energy of the same start.
    """
    sm = _as_state_matrix(a)
    eig = eig if eig is not None else eigendecompose(sm)
    n = eig.n
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if x0s.shape[1] != n:
        x0s = x0s.T
    ks = range(n) if ks is None else ks
    modes = range(n) if modes is None else modes
    horizon = default_horizon(eig.lambdas) if horizon is None else horizon
    step = default_step(eig.lambdas, horizon) if step is None else step
    traj = integrate_trajectory(sm.a, x0s.T, horizon, step)
    rows = []
    for b, x0 in enumerate(x0s):
        eng = EnergyEngine(eig, InitialCondition.explicit(x0))
        xs = Trajectory(traj.times, traj.states[:, :, b], a=traj.a)
        tag = tuple(float(t) for t in x0)
        s_scale = float(np.max(eng.state_energies))
        m_scale = float(np.max(eng.mode_energies))
        for k in ks:
            q = float(quadrature_state_energy(xs, k, eig.scale))
            rows.append(OracleRow("state", k, tag, float(eng.state_energies[k]), q, s_scale))
        for i in modes:
            q = float(quadrature_mode_energy(eig, x0, i, traj=xs))
            rows.append(OracleRow("mode", i, tag, float(eng.mode_energies[i]), q, m_scale))
    return OracleReport(rows=rows, horizon=horizon, step=step)
