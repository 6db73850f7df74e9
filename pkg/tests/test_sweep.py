import warnings

import numpy as np
import pytest

from lyapmodal.energy import EnergyEngine, InitialCondition
from lyapmodal.errors import AmbiguousMatch, ParseError
from lyapmodal.spectral import conventional_pf, eigendecompose
from lyapmodal.sweep import EventKind, SweepConfig, SweepPoint, run_sweep, track_modes
from lyapmodal.systems import (
    FamilySpec,
    instability_family,
    merge_family,
    table1_instability_family,
    two_oscillator_family,
)


def kinds(res):
    return [e.kind for e in res.events]


def sweep(family, lo, hi, steps, indicators=("EIGENVALUE",)):
    return run_sweep(SweepConfig(family, np.linspace(lo, hi, steps), indicators=indicators))


# ---- track_modes -----------------------------------------------------------


def test_track_identity_and_shift():
    lam = np.array([-1 + 2j, -1 - 2j, -3, -0.5])
    np.testing.assert_array_equal(track_modes(lam, lam), [0, 1, 2, 3])
    np.testing.assert_array_equal(track_modes(lam, lam + 0.2), [0, 1, 2, 3])
    perm = track_modes(lam, lam[[3, 2, 1, 0]])
    np.testing.assert_array_equal(perm, [3, 2, 1, 0])


def test_track_merge_links_both_reals():
    prev = np.array([-0.24, -0.26])
    cur = np.array([-0.25 + 0.01j, -0.25 - 0.01j])
    with pytest.warns(AmbiguousMatch):
        perm = track_modes(prev, cur)
    np.testing.assert_array_equal(perm, [0, 1])  # lower track id takes the +Im member


def test_track_conjugate_consistency():
    prev = np.array([-1 + 1j, -1 - 1j, -1.2 + 1.05j, -1.2 - 1.05j])
    cur = np.array([-1.1 + 1.02j, -1.1 - 1.02j, -1.1 + 1.03j, -1.1 - 1.03j])
    perm = track_modes(prev, cur)
    assert sorted(perm) == [0, 1, 2, 3]
    for t, tt in ((0, 1), (2, 3)):
        assert cur[perm[t]] == np.conj(cur[perm[tt]])


def test_track_needs_equal_lengths():
    with pytest.raises(ValueError):
        track_modes([1.0], [1.0, 2.0])


# ---- config ----------------------------------------------------------------


def test_config_validation():
    f = merge_family(0.25, 1.0)
    with pytest.raises(ParseError):
        SweepConfig(f, [0.0])
    with pytest.raises(ParseError):
        SweepConfig(f, [0.0, 0.0, 1.0])
    with pytest.raises(ParseError):
        SweepConfig(f, [0.0, 1.0], indicators=("BOGUS",))
    with pytest.raises(ParseError):
        SweepConfig.from_mapping({"family": "merge", "params": {"a": 1, "b": 1}})
    with pytest.raises(ParseError):
        SweepConfig.from_mapping({"family": "merge", "params": {"a": 1, "b": 1}, "gamma": {"start": 0, "stop": 1, "steps": 1}})
    cfg = SweepConfig.from_mapping(
        {
            "family": "merge",
            "params": {"a": 0.25, "b": 1.0},
            "gamma": {"start": 0, "stop": 2, "steps": 5},
            "ic_policy": "unit:1",
        }
    )
    assert cfg.ic == InitialCondition.unit(0)
    assert len(cfg.gammas) == 5


# ---- events ----------------------------------------------------------------


def test_merge_event_bracket_and_refinement():
    f = merge_family(0.25, 1.0)
    coarse = sweep(f, 0.0, 2.0, 41)
    fine = sweep(f, 0.0, 2.0, 81)
    for res in (coarse, fine):
        merges = [e for e in res.events if e.kind == EventKind.MERGE]
        assert len(merges) == 1
        assert merges[0].contains(1.0)
        assert merges[0].tracks == (0, 1)
    assert kinds(coarse) == kinds(fine)
    wc = [e.gamma_hi - e.gamma_lo for e in coarse.events]
    wf = [e.gamma_hi - e.gamma_lo for e in fine.events]
    assert all(b <= a for a, b in zip(wc, wf))


def test_non_simple_point_becomes_gap():
    res = sweep(merge_family(0.25, 1.0), 0.0, 2.0, 41)
    assert len(res.gaps) == 1
    lo, hi = res.gaps[0]
    assert lo < 1.0 < hi and hi - lo < 1e-6
    assert 1.0 not in res.gammas
    refined = [p for p in res.points if p.refined]
    assert len(refined) == 2 and all("refined" in p.flags for p in refined)


def test_split_event_on_reversed_family():
    base = merge_family(0.25, 1.0)
    spec = type(base)("merge_reversed", {}, lambda g: base(2.0 - g))
    res = sweep(spec, 0.0, 1.7, 35)
    splits = [e for e in res.events if e.kind == EventKind.SPLIT]
    # 2 - g rounds, so the crossing is only located to a few ulps of 1
    assert len(splits) == 1
    assert splits[0].gamma_lo - 1e-12 <= 1.0 <= splits[0].gamma_hi + 1e-12


def test_instability_bracket():
    f = instability_family(np.diag([-0.096, -2.0]))
    for steps in (21, 41):
        res = sweep(f, 0.0, 0.2, steps)
        ev = [e for e in res.events if e.kind == EventKind.INSTABILITY]
        assert len(ev) == 1 and ev[0].contains(0.096)
        for g in (ev[0].gamma_lo, ev[0].gamma_hi):
            assert np.min(np.abs(np.linalg.eigvals(f(g).a).real)) < 1e-8


def test_restabilization():
    f = FamilySpec("restab", {}, lambda g: np.diag([0.05 - g, -2.0]))
    res = sweep(f, 0.0, 0.1, 11)
    ev = [e for e in res.events if e.kind == EventKind.RESTABILIZATION]
    assert len(ev) == 1 and ev[0].contains(0.05)


def test_resonance_two_oscillators():
    f = two_oscillator_family(0.1, 0.1, 6.82, 7.02)
    res = sweep(f, -4.0, 4.0, 161)
    ev = [e for e in res.events if e.kind == EventKind.RESONANCE]
    assert len(ev) == 1
    e = ev[0]
    assert e.contains(f.critical["frequency_crossing"])
    assert e.details["delta_omega"] < e.details["alpha_sum"]
    assert e.details["value"] >= 5 * e.details["median"]


def test_merge_lmif_signature_skew_form():
    f = merge_family(1.0, 0.5, form="skew", kappa=0.1)
    res = sweep(f, 0.0, 0.6, 61, indicators=("LMIF",))
    merge = [e for e in res.events if e.kind == EventKind.MERGE]
    assert len(merge) == 1 and merge[0].contains(0.5)
    t1, t2 = merge[0].tracks
    before = max(g for g in res.gammas if g < merge[0].gamma_lo)
    mutual = {g: abs(r.value) for r in res.table.select("LMIF") if (r.i, r.j) == (t1, t2) for g in [r.gamma]}
    vals = np.array(list(mutual.values()))
    assert mutual[before] >= 5 * np.median(vals)


def test_instability_mislpf_near_boundary():
    f = table1_instability_family()
    gb = f.critical["instability"]
    res = sweep(f, 0.0, 0.1, 201, indicators=("MISLPF", "CONVENTIONAL_MIS"))
    ev = [e for e in res.events if e.kind == EventKind.INSTABILITY]
    assert len(ev) == 1 and ev[0].contains(gb)
    t = ev[0].tracks[0]
    last = max(g for g in res.gammas if g < ev[0].gamma_lo)
    assert gb - last <= 1e-3
    p = res.table.array("CONVENTIONAL_MIS", 10, gamma=last)
    k = int(np.argmax(np.abs(p[:, t])))
    m = res.table.array("MISLPF", 10, gamma=last)
    assert m[k, t] > 0.99


def test_ill_conditioned_flag():
    f = merge_family(0.25, 1.0)
    e = eigendecompose(f(1.0 - 1e-14))
    assert "ill_conditioned" in SweepPoint(1.0 - 1e-14, e).flags
    assert SweepPoint(0.5, eigendecompose(f(0.5))).flags == ""


def test_tables_use_track_ids_and_are_deterministic():
    f = merge_family(0.25, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AmbiguousMatch)
        a = sweep(f, 0.0, 2.0, 21, indicators=("EIGENVALUE", "LMIF"))
        b = sweep(f, 0.0, 2.0, 21, indicators=("EIGENVALUE", "LMIF"))
    assert a.table.to_csv() == b.table.to_csv()
    lam0 = a.tracks.lambdas[:, 0]
    assert np.all(np.abs(np.diff(lam0)) < 0.5)  # no jumps along a track
    assert len(a.tracks.match_cost) == len(a.gammas) - 1
