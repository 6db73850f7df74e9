import numpy as np
import pytest

from conftest import DIAG, ROTATION, WORKED, rel
from lyapmodal.energy import (
    SPHERICAL,
    EnergyEngine,
    InitialCondition,
    energy_report,
    lmie,
    lmie_averaged,
    lmif,
    lmif_matrix,
    mislpf,
    mislpf_generalized,
    modal_contribution,
    mode_energy,
    pair_mislpf,
    pair_simlpf,
    property1_forms,
    simlpf,
    state_energy,
    state_participation_lmie,
)
from lyapmodal.errors import DivergentPair, ParseError, UnstableSystem, ZeroEnergy
from lyapmodal.oracle import (
    default_horizon,
    default_step,
    integrate_trajectory,
    quadrature_cross_term,
    quadrature_state_energy,
)
from lyapmodal.spectral import (
    EigenStructure,
    Kind,
    PFMatrix,
    StateMatrix,
    conventional_pf,
    eigendecompose,
    finite_difference_sensitivities,
    simpf,
)
from lyapmodal.systems import random_stable

E1 = InitialCondition.unit(0)
E2 = InitialCondition.unit(1)


@pytest.fixture(scope="module")
def worked():
    return eigendecompose(WORKED)


def quad_total(a, x0):
    lam = np.linalg.eigvals(a)
    t = default_horizon(lam)
    traj = integrate_trajectory(a, x0, t, default_step(lam, t))
    return sum(quadrature_state_energy(traj, k) for k in range(len(x0)))


def test_ic_parse():
    assert InitialCondition.parse("unit:2") == InitialCondition.unit(1)
    assert InitialCondition.parse(" spherical ") == SPHERICAL
    ic = InitialCondition.parse("explicit:1,-2.5")
    np.testing.assert_allclose(ic.x0, [1, -2.5])
    assert ic.label() == "explicit:1,-2.5" or ic.label().startswith("explicit:")
    for bad in ("unit:0", "unit:x", "explicit:", "explicit:0,0", "gauss"):
        with pytest.raises(ParseError):
            InitialCondition.parse(bad)


def test_state_energy_examples(worked):
    assert np.isclose(state_energy(eigendecompose([[-2.0]]), InitialCondition.explicit([1.0]), 0), 0.25)
    assert abs(state_energy(worked, E1, 0) - 11 / 12) < 1e-12
    # spherical rotation block: each state carries half of trace(P) = 1 (see ledger)
    assert np.isclose(state_energy(eigendecompose(ROTATION), SPHERICAL, 0), 0.5)


def test_mode_energy_examples():
    assert np.isclose(mode_energy(eigendecompose([[-2.0]]), InitialCondition.explicit([1.0]), 0), 0.25)
    e = eigendecompose(ROTATION)
    assert np.isclose(mode_energy(e, InitialCondition.explicit([1.0, 0.0]), 0), 0.25)
    d = eigendecompose(DIAG)
    assert mode_energy(d, E2, 0) == 0
    assert np.isclose(mode_energy(d, E2, 1), 0.25)


def test_mislpf_examples(worked):
    np.testing.assert_allclose(mislpf(eigendecompose(DIAG), E1, 0), [1, 0])
    np.testing.assert_allclose(mislpf(worked, E1, 0), [16 / 11, -5 / 11], atol=1e-12)


def test_mislpf_near_marginal_tends_to_one():
    s = np.array([[1.0, 0.4], [0.3, 1.0]])
    for eps in (1e-3, 1e-4):
        a = s @ np.diag([-eps, -1.0]) @ np.linalg.inv(s)
        e = eigendecompose(a)
        p = conventional_pf(e).values
        k = int(np.argmax(np.abs(p[:, 0])))
        assert mislpf(e, SPHERICAL, k)[0] > 0.99


def test_mislpf_generalized(worked):
    with pytest.raises(ZeroEnergy):
        mislpf_generalized(eigendecompose(DIAG), 0, 1)
    g = mislpf_generalized(worked, 0, 1)
    assert abs(g.sum() - 1) < 1e-12
    eng = EnergyEngine(worked, E2)
    assert rel(eng.state_energies[0], quad_total(WORKED, [0.0, 1.0]) - eng.state_energies[1]) < 1e-6


def test_simlpf_examples(worked):
    for a in (DIAG, WORKED, ROTATION, random_stable(5, 2).a):
        e = eigendecompose(a)
        np.testing.assert_allclose(EnergyEngine(e, SPHERICAL).simlpf[0], simpf(e).values, atol=1e-12)
    np.testing.assert_allclose(simlpf(eigendecompose(DIAG), E1, 0), [1, 0])
    x11 = InitialCondition.explicit([1.0, 1.0])
    np.testing.assert_allclose(simlpf(worked, x11, 0), [2 / 3, 1 / 3], atol=1e-12)
    with pytest.raises(ZeroEnergy):
        simlpf(eigendecompose(DIAG), E1, 1)


def test_modal_contribution_examples(worked):
    d = eigendecompose(DIAG)
    assert np.isclose(modal_contribution(d, E1, 0), 0.5)
    assert modal_contribution(d, E1, 1) == 0
    tot = modal_contribution(worked, E1, 0) + modal_contribution(worked, E1, 1)
    assert rel(tot, quad_total(WORKED, [1.0, 0.0])) < 1e-6
    r = eigendecompose(ROTATION)
    x = InitialCondition.explicit([0.3, -1.2])
    assert abs(modal_contribution(r, x, 0) - modal_contribution(r, x, 1)) < 1e-12


def test_lmie_examples(worked):
    assert abs(lmie(eigendecompose(DIAG), SPHERICAL, 0, 1)) < 1e-15
    s = lmie(worked, E1, 0, 0) + 2 * lmie(worked, E1, 0, 1) + lmie(worked, E1, 1, 1)
    assert rel(s, quad_total(WORKED, [1.0, 0.0])) < 1e-6


def test_lmie_averaged_examples(worked):
    d = eigendecompose(DIAG)
    assert abs(lmie_averaged(d, 0, 1)) < 1e-15
    assert np.isclose(lmie_averaged(d, 0, 0), 0.5)
    np.testing.assert_allclose(
        [[lmie_averaged(worked, i, j) for j in range(2)] for i in range(2)],
        EnergyEngine(worked, SPHERICAL).lmie,
        atol=1e-12,
    )
    e = eigendecompose(random_stable(6, 4))
    for i in range(6):
        ic = e.conj_pair[i]
        for j in range(6):
            assert abs(lmie_averaged(e, ic, j) - lmie_averaged(e, i, j)) < 1e-10 * max(1, abs(lmie_averaged(e, i, j)))


def test_lmie_averaged_monte_carlo(worked):
    # quadratic form of the explicit-start energy, recovered by polarization
    def f(x):
        return EnergyEngine(worked, InitialCondition.explicit(x)).lmie[0, 1]

    basis = np.eye(2)
    m = np.zeros((2, 2))
    for k in range(2):
        m[k, k] = f(basis[k])
    m[0, 1] = m[1, 0] = 0.5 * (f(basis[0] + basis[1]) - m[0, 0] - m[1, 1])
    x = np.random.default_rng(12345).standard_normal((100_000, 2))
    mc = np.mean(np.einsum("bi,ij,bj->b", x, m, x))
    ref = lmie_averaged(worked, 0, 1)
    assert abs(mc - ref) < 0.01 * abs(ref)


def test_lmif_examples():
    np.testing.assert_allclose(lmif_matrix(eigendecompose(DIAG))[0], np.eye(2))
    e = eigendecompose(random_stable(7, 9))
    vals, _ = lmif_matrix(e)
    np.testing.assert_allclose(np.abs(vals).sum(axis=1), 1, atol=1e-9)
    u = eigendecompose(np.array([[0.2, 1.0], [0.0, -1.0]]))
    row = lmif(u, 0)
    assert row[0] == np.inf


def test_pair_mislpf_worked(worked):
    vals = [[pair_mislpf(worked, E1, 0, i, j) for j in range(2)] for i in range(2)]
    np.testing.assert_allclose(vals, [[24 / 11, -8 / 11], [-8 / 11, 3 / 11]], atol=1e-12)
    d = eigendecompose(DIAG)
    assert np.isclose(pair_mislpf(d, E1, 0, 0, 0), 1)
    assert pair_mislpf(d, E1, 0, 0, 1) == 0


def test_pair_simlpf_examples(worked):
    for a in (WORKED, random_stable(4, 8).a):
        e = eigendecompose(a)
        vals = EnergyEngine(e, SPHERICAL).pair_simlpf[0]
        sp = simpf(e).values
        for i in range(e.n):
            off = vals[i] - np.diag(np.diag(vals[i]))
            assert np.abs(off).max() < 1e-12
            np.testing.assert_allclose(np.diag(vals[i]), sp[:, i], atol=1e-12)
    x11 = InitialCondition.explicit([1.0, 1.0])
    got = [[pair_simlpf(worked, x11, 0, k, l) for l in range(2)] for k in range(2)]
    np.testing.assert_allclose(got, [[4 / 9, 2 / 9], [2 / 9, 1 / 9]], atol=1e-12)
    assert np.isclose(pair_simlpf(eigendecompose(DIAG), E1, 0, 0, 0), 1)


def test_state_participation_lmie(worked):
    assert np.isclose(state_participation_lmie(eigendecompose([[-2.0]]), InitialCondition.explicit([1.0]), 0, 0, 0), 1)
    vals = [state_participation_lmie(worked, E1, k, 0, 1) for k in range(2)]
    assert abs(sum(vals) - 1) < 1e-12
    # cross term integrals per state, independent of the sub-Gramian assembly
    eng = EnergyEngine(worked, E1)
    for k in range(2):
        q = quadrature_cross_term(worked, [1.0, 0.0], k, 0, 1)
        assert rel(q, 2 * eng.state_mode_pair[k, 0, 1]) < 1e-6


def test_property1_forms(worked):
    f = property1_forms(worked, conventional_pf(worked), 0, 0, 1)
    assert np.isclose(f.state_pair, -2 / 3) and f.deviation < 1e-12
    d = eigendecompose(DIAG)
    assert np.isclose(property1_forms(d, conventional_pf(d), 0, 0).state_mode, 0.5)
    a = random_stable(5, 21)
    e = eigendecompose(a)
    fd = finite_difference_sensitivities(a, e, 1e-6)
    pf = PFMatrix(Kind.GENERALIZED, fd)
    for k in range(5):
        for i in range(5):
            assert property1_forms(e, pf, k, i, (i + 1) % 5).deviation < 1e-4


def test_unstable_conventions():
    e = eigendecompose(np.diag([0.3, -1.0]))
    eng = EnergyEngine(e, SPHERICAL)
    assert eng.state_energies[0] == np.inf
    assert eng.state_energies[1] == pytest.approx(0.5)
    vals, flags = eng.mislpf
    assert np.isnan(vals[0]).all() and flags[0, 0] == "divergent"
    with pytest.raises(UnstableSystem):
        mislpf(e, SPHERICAL, 0)
    with pytest.raises(DivergentPair):
        lmie(e, SPHERICAL, 0, 0)
    rep = energy_report(e)
    assert (0,) in rep.divergent["state_energies"]


def test_normalizations_random(small_corpus):
    ics = [SPHERICAL, InitialCondition.unit(0)]
    for a, e in small_corpus:
        n = e.n
        ics_here = ics + [InitialCondition.explicit(np.linspace(1, -0.5, n))]
        for ic in ics_here:
            eng = EnergyEngine(e, ic)
            m, _ = eng.mislpf
            s, _ = eng.simlpf
            pm, _ = eng.pair_mislpf
            ps, _ = eng.pair_simlpf
            sp, _ = eng.lmie_state_part
            ok = np.isfinite(m).all(axis=1)
            assert np.abs(m[ok].sum(axis=1) - 1).max() < 1e-9
            assert np.abs(s.sum(axis=0) - 1).max() < 1e-9
            assert np.abs(pm[ok].sum(axis=(1, 2)) - 1).max() < 1e-9
            assert np.abs(ps.sum(axis=(1, 2)) - 1).max() < 1e-9
            fin = np.isfinite(sp).all(axis=0)
            assert np.abs(sp.sum(axis=0)[fin] - 1).max() < 1e-9
            # consistency chains
            assert rel(pm[ok].sum(axis=2), m[ok]) < 1e-9
            assert rel(ps.sum(axis=2), s.T) < 1e-9
            assert rel(eng.state_mode_pair.sum(axis=0), eng.lmie) < 1e-9
            half = 0.5 * (eng.modal_contributions + eng.modal_contributions[e.conj_pair])
            assert rel(eng.lmie.sum(axis=1), half) < 1e-9
            assert rel(eng.modal_contributions.sum(), eng.state_energies.sum()) < 1e-9
        vals, _ = lmif_matrix(e)
        assert np.abs(np.abs(vals).sum(axis=1) - 1).max() < 1e-9


def test_scale_vector_weights():
    c = np.array([2.0, 0.5])
    e = eigendecompose(StateMatrix(WORKED, c))
    plain = eigendecompose(WORKED)
    assert np.isclose(state_energy(e, E1, 0), 4 * state_energy(plain, E1, 0))
    w = abs(c @ plain.u[:, 0]) ** 2
    assert np.isclose(
        mode_energy(e, E1, 0),
        w * mode_energy(plain, E1, 0) / np.sum(np.abs(plain.u[:, 0]) ** 2),
    )


def test_scaling_freedom_energy_invariance():
    a = random_stable(5, 33)
    e = eigendecompose(a)
    s = np.ones(5, dtype=complex)
    for i in range(5):
        j = e.conj_pair[i]
        if j > i:
            s[i], s[j] = 1.5 - 0.7j, 1.5 + 0.7j
        elif j == i:
            s[i] = -3.0
    raw = EigenStructure.from_eigenpairs(a, e.lambdas, e.u / s, normalize=True)
    for ic in (SPHERICAL, InitialCondition.unit(2)):
        e1, e2 = EnergyEngine(e, ic), EnergyEngine(raw, ic)
        for name in ("state_energies", "mode_energies", "modal_contributions", "lmie"):
            assert rel(getattr(e2, name), getattr(e1, name)) < 1e-9
        assert rel(e2.mislpf[0], e1.mislpf[0]) < 1e-9
        assert rel(e2.pair_mislpf[0], e1.pair_mislpf[0]) < 1e-9
