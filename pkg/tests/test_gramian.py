import numpy as np
import pytest

from conftest import DIAG, ROTATION, WORKED, rel
from lyapmodal.errors import DivergentPair, UnstableSystem
from lyapmodal.gramian import (
    build_bundle,
    divergent_pairs,
    solve_lyapunov,
    spectral_gramian,
    sub_gramian_local,
    sub_gramian_pair,
    sub_gramian_single,
    sub_gramian_single_from_pairs,
    subgramian_via_pf,
    verify_bundle,
)
from lyapmodal.spectral import eigendecompose, generalized_pf
from lyapmodal.systems import random_stable


def test_scalar_and_rotation():
    assert np.isclose(solve_lyapunov([[-2.0]], [[1.0]])[0, 0], 0.25)
    np.testing.assert_allclose(solve_lyapunov(ROTATION, np.eye(2)), np.eye(2) / 2, atol=1e-12)
    assert np.isclose(spectral_gramian(eigendecompose([[-2.0]]), [[1.0]])[0, 0], 0.25)


def test_worked_residual_and_cross_solver():
    p = solve_lyapunov(WORKED, np.eye(2))
    assert np.linalg.norm(WORKED.T @ p + p @ WORKED + np.eye(2)) < 1e-10
    ps = spectral_gramian(eigendecompose(WORKED), np.eye(2))
    assert rel(ps, p) < 1e-8


def test_diagonal_subgramians():
    e = eigendecompose(DIAG)
    np.testing.assert_allclose(spectral_gramian(e, np.eye(2)), np.diag([0.5, 0.25]))
    np.testing.assert_allclose(sub_gramian_single(e, np.eye(2), 0), np.diag([0.5, 0]), atol=1e-15)
    np.testing.assert_allclose(sub_gramian_pair(e, np.eye(2), 0, 1), np.zeros((2, 2)), atol=1e-15)
    pf = generalized_pf(e)
    np.testing.assert_allclose(subgramian_via_pf(e, pf, np.eye(2), 0), np.diag([0.5, 0]), atol=1e-15)


def test_worked_pair_quadratic_form():
    e = eigendecompose(WORKED)
    q = np.diag([1.0, 0.0])
    p12 = sub_gramian_pair(e, q, 0, 1)
    x0 = np.array([1.0, 0.0])
    assert np.isclose((x0 @ p12 @ x0).real, -2 / 3)
    total = sum(sub_gramian_pair(e, q, i, j) for i in range(2) for j in range(2))
    assert rel(total, solve_lyapunov(WORKED, q)) < 1e-12


def test_pf_path_matches_eigenvector_path():
    for a in (WORKED, random_stable(8, 3).a):
        e = eigendecompose(a)
        pf = generalized_pf(e)
        q = np.eye(e.n)
        for i in range(e.n):
            assert rel(subgramian_via_pf(e, pf, q, i), sub_gramian_single(e, q, i)) < 1e-9
            for j in range(e.n):
                assert rel(subgramian_via_pf(e, pf, q, i, j), sub_gramian_pair(e, q, i, j)) < 1e-9


def test_conjugate_pair_sum_is_real():
    e = eigendecompose(ROTATION)
    s = sub_gramian_single(e, np.eye(2), 0) + sub_gramian_single(e, np.eye(2), 1)
    assert np.abs(s.imag).max() < 1e-14
    for i in range(2):
        for j in range(2):
            pij = sub_gramian_pair(e, np.eye(2), i, j)
            pji = sub_gramian_pair(e, np.eye(2), j, i)
            np.testing.assert_allclose(pij, pji.conj().T, atol=1e-14)
            np.testing.assert_allclose(pij, pij.conj().T, atol=1e-14)


def test_locality_uses_one_triple():
    a = random_stable(7, 11)
    e = eigendecompose(a)
    q = np.diag(np.arange(1.0, 8.0))
    for i in range(7):
        local = sub_gramian_local(a, e.lambdas[i], e.u[:, i], e.v[i], q)
        assert rel(local, sub_gramian_single_from_pairs(e, q, i)) < 1e-9


def test_bundle_residuals_and_corruption():
    for a in ([[-2.0]], WORKED, random_stable(6, 5).a):
        e = eigendecompose(a)
        b = build_bundle(e)
        rep = verify_bundle(e, b)
        assert rep.max_relative < 1e-9
    e = eigendecompose([[-2.0]])
    assert build_bundle(e).residual_full < 1e-15
    b = build_bundle(eigendecompose(DIAG))
    b.p = b.p + 1e-3 * np.eye(2)
    rep = verify_bundle(DIAG, b)
    assert rep.full > 1e-3


def test_unstable_bookkeeping():
    a = np.diag([0.5, -1.0, -2.0])
    assert (0, 0) in divergent_pairs(np.diag(a))
    with pytest.raises(UnstableSystem) as exc:
        solve_lyapunov(a, np.eye(3))
    assert "(1,1)" in str(exc.value)
    e = eigendecompose(a)
    with pytest.raises(DivergentPair):
        sub_gramian_single(e, np.eye(3), 0)
    b = build_bundle(e)
    assert b.p is None and b.singles[0] is None
    assert (1, 2) in b.pairs and (0, 0) not in b.pairs
    # pair 0 with 2: 0.5 - 2 < 0, still computed
    assert (0, 2) in b.pairs


def test_marginal_mode_scales_inverse_eps():
    sizes = []
    for eps in (1e-2, 1e-3, 1e-4):
        e = eigendecompose(np.array([[-eps, 0.3], [0.0, -1.0]]))
        single = sub_gramian_single(e, np.eye(2), 0)
        bounded = sub_gramian_pair(e, np.eye(2), 1, 1)
        sizes.append((np.abs(single).max(), np.abs(bounded).max()))
    assert sizes[1][0] / sizes[0][0] == pytest.approx(10, rel=0.05)
    assert sizes[2][0] / sizes[1][0] == pytest.approx(10, rel=0.01)
    assert max(s[1] for s in sizes) < 1.0


def test_large_random_cross_solver(big_corpus):
    for a, e in big_corpus[::7]:
        for q in (np.eye(e.n), np.diag(np.eye(e.n)[0])):
            p = solve_lyapunov(a, q)
            assert rel(spectral_gramian(e, q), p) < 1e-8
    rng = np.random.default_rng(0)
    a, e = big_corpus[20]
    m = rng.standard_normal((e.n, e.n))
    q = m @ m.T
    assert rel(spectral_gramian(e, q), solve_lyapunov(a, q)) < 1e-8
