import csv
import io
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coset_moments.characters import enumerate_characters, primitive_characters
from coset_moments.errors import NotPrimitive, NotPrimitiveEven, RegimeViolation
from coset_moments.lvalue import l_central_hurwitz
from coset_moments.modarith import FactoredModulus, sigma0
from coset_moments.moments import (CSV_COLUMNS, DIGAMMA_QUARTER, EULER_GAMMA, ZETA_HALF,
                                   MomentReport, Regime, aprime_terms, coset_moment,
                                   coset_terms, csv_header_comment, diag_closed_form, diag_vs_closed_form,
                                   diag_sum, envelope_report, gambit_rhs, log_gamma_derivative_half,
                                   main_A, main_Aprime, main_D, regime_of, sample_characters,
                                   select_by_target_a, main_term_report, main_term_reports)
from coset_moments.postnikov import PostnikovData, compute_postnikov


def test_constants_against_independent_sources():
    assert abs(DIGAMMA_QUARTER - float(mpmath.digamma(0.25))) < 1e-13
    assert abs(DIGAMMA_QUARTER - (-EULER_GAMMA - math.pi / 2 - 3 * math.log(2))) < 1e-13
    assert abs(EULER_GAMMA - float(mpmath.euler)) < 1e-15
    assert abs(ZETA_HALF - float(mpmath.zeta(0.5))) < 1e-13


def test_log_gamma_derivative_by_differentiation():
    g = lambda s: -s / 2 * mpmath.log(mpmath.pi) + mpmath.loggamma(s / 2)
    assert abs(log_gamma_derivative_half() - float(mpmath.diff(g, 0.5))) < 1e-12


def test_main_D_example():
    expect = 10 * (500 / 625) * (math.log(625) + 2 * float(mpmath.euler) + float(mpmath.digamma(0.25))
                                 - math.log(math.pi) + 2 * math.log(5) / 4)
    assert math.isclose(main_D(625, 25), expect, rel_tol=1e-13)


def test_main_D_over_phi_d_independent_of_d():
    q = 5**6
    vals = [main_D(q, d) / FactoredModulus.from_int(d).phi for d in (5, 25, 125, 625)]
    assert max(vals) - min(vals) < 1e-12 * max(vals)


def test_main_D_is_phi_d_times_diag_closed_form():
    for q, d in [(625, 25), (2401, 49), (3125, 25)]:
        assert math.isclose(main_D(q, d), FactoredModulus.from_int(d).phi * diag_closed_form(q),
                            rel_tol=1e-13)


@pytest.mark.parametrize("q", [625, 2401])
def test_diag_vs_closed_form(q):
    lhs, rhs = diag_vs_closed_form(q)
    assert abs(lhs - rhs) <= 10 / math.sqrt(q)
    # terms past n^2 = 100 q are negligible
    assert abs(diag_sum(q, n_max=math.isqrt(100 * q)) - lhs) <= 1e-10


def test_m_equals_n_part_against_D():
    q, d = 625, 25
    psi = primitive_characters(q, "even")[0]
    # the m = n terms of the pair sum: T small enough to keep only them is not possible,
    # so compare phi(d) * diagonal sum with D at the stated tolerance instead
    phi_d = FactoredModulus.from_int(d).phi
    assert abs(phi_d * diag_sum(q) - main_D(q, d)) <= 10 * d / math.sqrt(q)
    assert psi.is_even()


def test_regimes():
    assert regime_of(625, 25) is Regime.THM1
    assert regime_of(3125, 25) is Regime.THM2
    assert regime_of(3125, 5) is Regime.THM3
    assert regime_of(5**4, 5) is Regime.THM3
    assert regime_of(3**5, 9) is Regime.THM3   # 3 | q rules out the Gauss-sum regime
    assert regime_of(3**4, 9) is Regime.THM1
    with pytest.raises(RegimeViolation):
        regime_of(625, 7)


def test_main_A_examples():
    data = PostnikovData(625, 25, 1, 1, True)
    assert math.isclose(main_A(data), 20 / 25 * 25)
    for a in (-11, 6, 9):
        d = PostnikovData(625, 25, a, a, True)
        A = main_A(d)
        assert A <= math.sqrt(625) * sigma0(abs(a)) / math.sqrt(abs(a))
        assert A == main_A(PostnikovData(625, 25, -a, -a, True))
    with pytest.raises(RegimeViolation):
        main_A(PostnikovData(3125, 25, 1, 1, True))


def test_aprime_small_a():
    # |a| < d/2 gives b = a, so the phase is cos(0) = 1 (q = 1 mod 4) or sin(0) = 0
    t = aprime_terms(5**5, 25, 7)
    assert t.b_psi == 7 and t.trig == "cos" and t.trig_value == 1.0
    assert math.isclose(abs(t.value), 20 * sigma0(7) / math.sqrt(7))
    t = aprime_terms(7**5, 49, 3)
    assert t.trig == "sin" and t.value == 0.0


def test_aprime_remark_example():
    q, d, a = 7**239, 7**116, 1 + 2 * 7**116
    t = aprime_terms(f"7^239", "7^116", a)
    assert t.b_psi == 1
    assert t.residue == 2 * 7**232
    assert (2 * a * t.residue - (a - 1) ** 2) % q == 0
    phi_d = 6 * 7**115
    expect = phi_d * math.sin(4 * math.pi * 7.0 ** -7)
    assert abs(t.value - expect) <= 1e-15 * abs(expect)
    assert t.jacobi_statement == 1 and t.jacobi_derivation == 1


@pytest.mark.parametrize("q, d", [(5**5, 25), (7**5, 49), (11**5, 121)])
def test_aprime_jacobi_forms_agree(q, d):
    for a in range(1, 60):
        if a % d and math.gcd(a, q) == 1:
            t = aprime_terms(q, d, a)
            assert t.jacobi_statement == t.jacobi_derivation


@given(st.integers(1, 10**6))
def test_aprime_bounded(a):
    q, d = 5**5, 25
    if a % 5 == 0:
        return
    t = aprime_terms(q, d, a)
    assert abs(t.value) <= 20 * sigma0(abs(t.b_psi)) / math.sqrt(abs(t.b_psi)) + 1e-12


def test_aprime_equals_A_at_q_equal_d_squared():
    for psi in primitive_characters(625, "even")[:20]:
        data = compute_postnikov(psi, 25)
        assert math.isclose(main_A(data), main_Aprime(data), rel_tol=1e-13)


def test_coset_d1_is_single_value():
    psi = primitive_characters(125, "even")[3]
    assert math.isclose(coset_moment(psi, 1), abs(l_central_hurwitz(psi)) ** 2, rel_tol=1e-13)


def test_coset_methods_agree():
    for psi in primitive_characters(729, "even")[::20]:
        h = coset_moment(psi, 27, "even", "hurwitz")
        a = coset_moment(psi, 27, "even", "afe")
        assert abs(h - a) <= 1e-5


def test_coset_conjugation_invariant():
    for psi in primitive_characters(3125, "even")[::97]:
        for parity in ("even", "all"):
            assert math.isclose(coset_moment(psi, 25, parity), coset_moment(psi.conjugate(), 25, parity),
                                rel_tol=1e-12)


def test_coset_terms_match_individual_l_values():
    psi = primitive_characters(45, "even")[2]
    terms = coset_terms(psi, 5, "all")
    from coset_moments.characters import coset_character
    for chi, t in zip(enumerate_characters(5), terms):
        c = coset_character(chi, psi)
        prim = c.primitive()
        ref = ZETA_HALF ** 2 if prim.modulus == 1 else abs(l_central_hurwitz(prim)) ** 2
        assert math.isclose(t, ref, rel_tol=1e-12)


def test_coset_preconditions():
    psi = primitive_characters(625, "even")[0]
    with pytest.raises(RegimeViolation):
        coset_moment(psi, 625, "even")
    with pytest.raises(RegimeViolation):
        coset_moment(psi, 7)
    with pytest.raises(NotPrimitive):
        coset_moment(enumerate_characters(625, "even")[5], 25)
    odd = [c for c in primitive_characters(625) if not c.is_even()][0]
    with pytest.raises(NotPrimitiveEven):
        coset_moment(odd, 25, "even", "afe")


def test_gambit_identity_small():
    for psi in primitive_characters(243, "even")[::15]:
        assert abs(coset_moment(psi, 27, "even", "afe") - gambit_rhs(psi, 27)) <= 1e-6


def test_gambit_truncation_stable():
    psi = primitive_characters(625, "even")[7]
    assert abs(gambit_rhs(psi, 25, 60 * 625) - gambit_rhs(psi, 25, 120 * 625)) <= 1e-9


def test_gambit_d1_is_afe_value():
    psi = primitive_characters(125, "even")[3]
    assert abs(gambit_rhs(psi, 1) - abs(l_central_hurwitz(psi)) ** 2) < 1e-8


def test_main_term_report_pipeline():
    psi = primitive_characters(625, "even")[0]
    r = main_term_report(psi, 25)
    assert r.regime == "Thm1"
    assert r.residual == r.M - r.D - r.A_or_Aprime
    assert math.isclose(r.predicted_scale, 625 ** -0.125 * 25)
    assert r.ratio == abs(r.residual) / r.predicted_scale
    r2 = main_term_report(primitive_characters(3125, "even")[0], 25)
    assert r2.regime == "Thm2" and {"jacobi_statement", "jacobi_derivation"} <= set(r2.meta)
    r3 = main_term_report(primitive_characters(3125, "even")[0], 5)
    assert r3.regime == "Thm3-only" and r3.residual is None
    assert math.isclose(r3.ratio, r3.M / (5 + math.sqrt(3125 / 5)))
    ra = main_term_report(psi, 25, method="afe")
    assert abs(ra.M - r.M) < 1e-6 and ra.meta["cutoff_T"] == 60 * 625


def test_envelope_report_any_regime():
    psi = primitive_characters(3125, "even")[0]
    r = envelope_report(psi, 25)
    assert r.meta["envelope_for"] == "Thm2"
    assert math.isclose(r.M, coset_moment(psi, 25, "all"))


def test_report_serialization():
    psi = primitive_characters(625, "even")[0]
    r = main_term_report(psi, 25)
    row = r.csv_row()
    assert len(row) == len(CSV_COLUMNS) and row[-1] == ""
    assert float(row[6]) == r.M
    obj = json.loads(r.to_json())
    assert obj["psi_index"] == list(psi.exponents) and obj["meta"]["G"] == "G(s)=1"
    assert csv_header_comment().startswith("#")


def test_threaded_reports_identical():
    psis = primitive_characters(625, "even")[:8]
    one = [r.csv_row() for r in main_term_reports(psis, 25, threads=1)]
    four = [r.csv_row() for r in main_term_reports(psis, 25, threads=4)]
    assert one == four


def test_selection_helpers():
    psi, data, exact = select_by_target_a(625, 25, 1)
    assert exact and data.a_psi == 1
    psi, data, exact = select_by_target_a(625, 25, 5)  # multiples of 5 never occur
    assert not exact and abs(data.a_psi - 5) == 1
    sample = sample_characters(3125, 25, 6)
    datas = [compute_postnikov(p, 25) for p in sample]
    assert len(sample) == 6 and any(t.a_psi == 1 for t in datas)
    assert any(t.b_psi != t.a_psi for t in datas)
    assert len({t.a_psi for t in datas}) == 6
