import csv
import io
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from maxwell_afem.adapt import AdaptRecord, LoopConfig, iterate_levels
from maxwell_afem.eigensolve import EigenPair
from maxwell_afem.exceptions import SignError
from maxwell_afem.reference import FineReference
from maxwell_afem.verify import (TheoryReport, check_bounded_band, check_contraction,
                                 check_eigenvalue_identity, check_indicator_relation,
                                 check_mixed_invariants, check_quasi_orthogonality,
                                 check_reference_identity, check_reliability_efficiency,
                                 contraction_xi, quasi_orthogonality_residual,
                                 superconvergence_ratio)


@pytest.fixture(scope="module")
def fichera_levels():
    cfg = LoopConfig(domain="fichera", n=1, max_levels=3)
    levels = list(iterate_levels(cfg))
    return cfg, levels, FineReference.from_levels(cfg, levels, extra=1)


def test_mixed_invariants(fichera_levels):
    for lv in fichera_levels[1]:
        norm, curl = check_mixed_invariants(lv)
        assert norm <= 1e-10 and curl <= 1e-10
        assert check_indicator_relation(lv) <= 1e-12


def test_identity_on_same_level_is_zero(fichera_levels):
    lv = fichera_levels[1][0]
    assert check_eigenvalue_identity(lv, lv) == (0.0, 0.0, 0.0)


def test_discrete_identity(fichera_levels):
    levels = fichera_levels[1]
    for H, h in zip(levels, levels[1:]):
        lhs, rhs, d = check_eigenvalue_identity(H, h)
        assert d <= 1e-9
        assert lhs == pytest.approx(rhs, abs=1e-9 * abs(lhs) + 1e-13)


def test_identity_detects_sign_flip(fichera_levels):
    H, h = fichera_levels[1][:2]
    flipped = replace(h, pairs=[EigenPair(p.lam, -p.u, p.residual) for p in h.pairs])
    with pytest.raises(SignError):
        check_eigenvalue_identity(H, flipped)
    check_eigenvalue_identity(H, flipped, check_sign=False)


def test_reference_identity(fichera_levels):
    _, levels, ref = fichera_levels
    for lv in levels:
        _, _, d = check_reference_identity(lv, ref)
        assert d <= 1e-9


def test_quasi_orthogonality_residual_pythagoras():
    assert quasi_orthogonality_residual(0.3 - 0.1, 0.3, 0.1) == 0.0
    assert quasi_orthogonality_residual(0.0, 0.0, 0.0) == 0.0
    assert quasi_orthogonality_residual(0.3, 0.3, 0.1) == pytest.approx(0.25)


def test_quasi_orthogonality_is_small(fichera_levels):
    _, levels, ref = fichera_levels
    for H, h in zip(levels, levels[1:]):
        assert abs(check_quasi_orthogonality(H, h, ref)) < 0.1


def test_superconvergence_with_fabricated_projection(fichera_levels):
    _, levels, ref = fichera_levels
    lv = levels[-1]
    fake = SimpleNamespace(projected_p=lambda level: level.mixed.p, errors=ref.errors)
    num, den, ratio = superconvergence_ratio(lv, fake)
    assert num == 0.0 and ratio == 0.0 and den > 0


def test_contraction_geometric_and_constant():
    ratios, mx, ok = check_contraction(0.7 ** np.arange(8))
    assert np.allclose(ratios, 0.7) and mx == pytest.approx(0.7) and ok
    _, mx, ok = check_contraction(np.ones(8))
    assert mx == 1.0 and not ok
    with pytest.raises(ValueError):
        check_contraction([1.0, 0.5, 0.2])


def test_contraction_xi_needs_errors():
    with pytest.raises(ValueError):
        contraction_xi([AdaptRecord(0, 1, 1, 1.0, 1.0, 0)])
    rec = AdaptRecord(0, 1, 1, 1.0, 1.0, 0, eta_sq_mixed=2.0, err_sigma=0.5, err_p=1.0)
    assert contraction_xi([rec], beta=2.0)[0] == pytest.approx(2.0 + 2 * 1.25)


def records_with(eta_sq, err_curl, lams):
    return [AdaptRecord(i, 1, 1, lam, e, 0, err_curl=c)
            for i, (e, c, lam) in enumerate(zip(eta_sq, err_curl, lams))]


def test_reliability_ratio_constant():
    eta_sq = 0.5 ** np.arange(6)
    recs = records_with(eta_sq, np.sqrt(eta_sq), 10 - eta_sq)
    out = check_reliability_efficiency(recs, lam_ref=10.0)
    assert np.allclose(out["r1"], 1.0) and np.allclose(out["r2"], 1.0)
    assert out["band_r1"] == pytest.approx(1.0) and out["passed_r1"] and out["passed_r2"]


def test_reliability_zero_indicator_is_violation():
    recs = records_with([1.0, 0.5, 0.0, 0.1], [1.0, 0.7, 0.3, 0.3], [9.0, 9.5, 9.7, 9.8])
    out = check_reliability_efficiency(recs, lam_ref=10.0)
    assert out["violations"] == [2]
    assert not out["passed_r1"] and not out["passed_r2"]


def test_bounded_band():
    assert check_bounded_band([5.0, 5.0, 1.0, 2.0], first=2) == (2.0, True)
    assert check_bounded_band([1.0, 1.0, 1.0, 100.0], first=2) == (100.0, False)
    band, ok = check_bounded_band([1.0, 1.0, 0.0, 1.0], first=2)
    assert band == float("inf") and not ok


def test_report_csv_and_summary(tmp_path):
    rep = TheoryReport()
    rep.add("alpha", 0, 1.0, 1.0, 0.0, True)
    rep.add("alpha", 1, 1.0, 1.0 + 1e-3, 1e-3, True)
    rep.add("beta", "band", 3.0, 1.0, 3.0, False, "note")
    rep.add("gamma", 0, 1.0, 1.0, float("nan"), True)
    rep.skip("delta", "not applicable")
    assert not rep.passed and rep.check_passed("alpha") and not rep.check_passed("gamma")
    lines = rep.summary().splitlines()
    assert lines[0].startswith("PASS alpha") and lines[1].startswith("FAIL beta")
    assert lines[2].startswith("FAIL gamma") and "delta: skipped" in lines[3]
    text = rep.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0][:3] == ["check", "level", "lhs"] and len(rows) == 5
    assert float(rows[2][4]) == 1e-3
    assert (tmp_path / "t.csv").read_text() == text


def test_cube_sequence_bands(cube_lattice):
    levels, ref = cube_lattice
    eta_sq = np.array([lv.eta.total for lv in levels])
    err = [ref.errors(lv) for lv in levels]
    efficiency = eta_sq / np.array([e["curl"] ** 2 for e in err])
    r2 = np.array([abs(ref.lam - lv.lam) for lv in levels]) / eta_sq
    for values in (efficiency, r2):
        band, ok = check_bounded_band(values, first=0)
        assert ok and band <= 50


def test_cube_sequence_identities(cube_lattice):
    levels, ref = cube_lattice
    for lv in levels:
        assert check_reference_identity(lv, ref)[2] <= 1e-6
    qo = [check_quasi_orthogonality(H, h, ref) for H, h in zip(levels, levels[1:])]
    assert abs(qo[1]) < abs(qo[0])
    assert check_quasi_orthogonality(levels[0], levels[0], ref) == 0.0
