import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coherent_usd import analytics
from coherent_usd.analytics import (
    PhaseAlphabet,
    asymptotic,
    bs4_feedback_finite_M,
    bs4_p2_finite_M,
    closed_form,
    elimination_click_prob,
    feedback_finite_M,
    feedback_limit,
    optimal_usd_prob,
    symmetric_coefficients,
)
from coherent_usd.errors import NumericalHealthWarning, ParameterError

from oracles import (
    MP_CLOSED_FORMS,
    exact_round_enumeration,
    literal_bs4_sum,
    literal_p2_sum,
    mp_closed_form,
    nested_feedback_sum,
    poisson_mod_n,
)

GRID = (0.01, 0.1, 0.5, 1.0, 2.0, 5.0)
FINE = np.linspace(0.0, 5.0, 200)


@pytest.mark.parametrize("N", range(2, 9))
@pytest.mark.parametrize("mu", GRID)
def test_coefficients_match_poisson_oracle(N, mu):
    vals = symmetric_coefficients(N, mu)
    np.testing.assert_allclose(vals, poisson_mod_n(N, mu), rtol=0, atol=1e-10)
    assert abs(vals.sum() - 1.0) <= 1e-12
    assert (vals >= 0).all()


def test_coefficient_values():
    np.testing.assert_array_equal(symmetric_coefficients(5, 0.0), [1, 0, 0, 0, 0])
    # e^-1 sinh 1
    assert symmetric_coefficients(2, 1.0)[1] == pytest.approx(0.43233235838169365, abs=1e-15)
    with pytest.raises(ParameterError):
        symmetric_coefficients(1, 1.0)


@pytest.mark.parametrize("N", [3, 5, 8])
@pytest.mark.parametrize("mu", [0.5, 0.8, 1.0])
def test_fourier_and_series_routes_agree(N, mu):
    np.testing.assert_allclose(analytics._coefficients_dft(N, mu),
                               analytics._coefficients_series(N, mu), atol=1e-14)


@pytest.mark.parametrize("N, mu", [(8, 1e-6), (6, 1e-4), (4, 1e-3), (3, 1e-5)])
def test_tiny_coefficients_keep_relative_accuracy(N, mu):
    vals = symmetric_coefficients(N, mu)
    ref = poisson_mod_n(N, mu)
    np.testing.assert_allclose(vals, ref, rtol=1e-12)


@pytest.mark.parametrize("mu", FINE)
def test_two_state_optimum(mu):
    assert optimal_usd_prob(2, mu) == pytest.approx(-math.expm1(-2 * mu), abs=1e-12)


@pytest.mark.parametrize("N, factor", [(3, 1.5), (4, 2 / 3)])
def test_optimum_small_mu(N, factor):
    mu = 1e-4
    assert optimal_usd_prob(N, mu) / (factor * mu ** (N - 1)) == pytest.approx(1.0, abs=1e-3)


def test_elimination_click_prob():
    assert elimination_click_prob(0.7, 1.0, 0.0) == 0.0
    assert elimination_click_prob(0.7, 1.0, math.pi) == pytest.approx(-math.expm1(-2.8), abs=1e-15)
    assert elimination_click_prob(0.7, 0.0, 1.0) == 0.0


def test_phasor_exact_at_quarter_turns():
    assert [analytics.phasor(4, k) for k in range(4)] == [1, 1j, -1, -1j]
    for N in (3, 5, 6, 8):
        for k in range(N):
            assert analytics.phasor(N, k) == pytest.approx(np.exp(2j * np.pi * k / N), abs=1e-15)
            if N % 2 == 0:
                assert analytics.phasor(N, k + N // 2) == -analytics.phasor(N, k)


@pytest.mark.parametrize("name", sorted(MP_CLOSED_FORMS))
@pytest.mark.parametrize("mu", [1e-6, 1e-5, 1e-4, 1e-3, 0.0099, 0.05, 0.0999, 0.1, 0.1001, 0.5, 1.0, 3.0, 10.0])
def test_closed_forms_match_high_precision(name, mu):
    ref = mp_closed_form(name, mu)
    assert closed_form(name, mu) == pytest.approx(ref, rel=1e-12)


def test_closed_form_reference_values():
    assert closed_form("BS3_FEEDBACK", 1.0) == pytest.approx(0.5134852091161187, abs=1e-12)
    assert closed_form("BS4_FEEDBACK", 1.0) == pytest.approx(0.2051586514972943, abs=1e-12)
    assert closed_form("BS3_SIMPLE", 1.0) == pytest.approx(0.3995764008937280, abs=1e-12)
    assert closed_form("BS4_SIMPLE", 1.0) == pytest.approx(0.0978637176350, abs=1e-12)
    # 1 + 4/e - 4/sqrt(e), 40-digit mpmath
    assert closed_form("BS4_FEEDBACK", 0.5) == pytest.approx(0.04539512583523567, abs=1e-14)


def test_series_coefficients_exact():
    # Taylor coefficients of the cancelling forms, derived by mpmath differentiation
    for name in ("BS3_FEEDBACK", "BS4_FEEDBACK", "BS4_P2", "POL4"):
        coeffs = analytics._series_coeffs(name)
        ref = mpmath.taylor(MP_CLOSED_FORMS[name], 0, 8)
        for c, r in zip(coeffs, ref):
            assert c == pytest.approx(float(r), abs=1e-15)
    assert analytics._series_coeffs("BS3_FEEDBACK")[3] == -1.75
    assert analytics._series_coeffs("BS4_FEEDBACK")[3:5] == (2 / 3, -5 / 6)


def test_bs2a():
    for phi0 in (0.0, 0.4, 2.0):
        for mu in (0.1, 1.0, 3.0):
            assert closed_form("BS2A", mu, phi0=phi0, phi1=phi0 + math.pi) == pytest.approx(
                closed_form("BS2", mu), abs=1e-14)
    # two phases 2 pi / 3 apart: chord^2 = 3
    assert closed_form("BS2A", 1.0, phi0=0, phi1=2 * math.pi / 3) == pytest.approx(-math.expm1(-1.5), abs=1e-14)
    with pytest.raises(ParameterError):
        closed_form("BS2A", 1.0)


@pytest.mark.parametrize("N", [3, 4])
def test_bsn_simple_reduces_to_named(N):
    name = f"BS{N}_SIMPLE"
    for mu in (0.01, 0.5, 2.0):
        assert closed_form("BSN_SIMPLE", mu, N=N) == pytest.approx(closed_form(name, mu), rel=1e-13)


def test_unknown_scheme():
    with pytest.raises(ParameterError):
        closed_form("BS5_MAGIC", 1.0)
    with pytest.raises(ParameterError):
        closed_form("BS2", -1.0)


_FAMILIES = {2: ["BS2"], 3: ["BS3_SIMPLE", "BS3_FEEDBACK"], 4: ["BS4_SIMPLE", "BS4_FEEDBACK", "POL4"]}


@pytest.mark.parametrize("N", [2, 3, 4])
def test_dominance_and_monotonicity(N):
    opt = np.array([optimal_usd_prob(N, mu) for mu in FINE])
    for name in _FAMILIES[N]:
        vals = np.array([closed_form(name, mu) for mu in FINE])
        assert (vals <= opt + 1e-12).all(), name
        assert (np.diff(vals) >= 0).all(), name
    for N5 in (5, 6):
        vals = np.array([closed_form("BSN_SIMPLE", mu, N=N5) for mu in FINE])
        assert (vals <= np.array([optimal_usd_prob(N5, mu) for mu in FINE]) + 1e-12).all()


def test_bs2_equals_optimum_only_one():
    gap3 = max(optimal_usd_prob(3, mu) - closed_form("BS3_FEEDBACK", mu) for mu in FINE[1:])
    assert gap3 > 1e-3


@pytest.mark.parametrize("N", [3, 4])
def test_feedback_beats_simple_below_one(N):
    for mu in FINE[FINE <= 1.0]:
        assert closed_form(f"BS{N}_FEEDBACK", mu) >= closed_form(f"BS{N}_SIMPLE", mu)


def test_factor_four_multiphoton():
    for mu in (1e-2, 1e-3, 1e-4):
        ratio = closed_form("BS4_P2", mu) / analytics.multiphoton_prob(mu)
        assert ratio == pytest.approx(4.0, rel=1.2 * mu)


def test_feedback_is_optimal_at_small_mu():
    for N, name in ((3, "BS3_FEEDBACK"), (4, "BS4_FEEDBACK")):
        mu = 1e-5
        assert closed_form(name, mu) / asymptotic("OPTIMAL", N, mu) == pytest.approx(1.0, rel=1e-4)


def test_asymptotics():
    mu = 0.3
    assert asymptotic("OPTIMAL", 4, mu) == pytest.approx(2 / 3 * mu**3)
    assert asymptotic("BSN_FEEDBACK", 4, mu) == asymptotic("OPTIMAL", 4, mu)
    assert asymptotic("BSN_SIMPLE", 3, mu) == pytest.approx(mu**2)
    assert asymptotic("BSN_SIMPLE", 4, mu) == pytest.approx(mu**3 / 4)
    for N in range(2, 20):
        ratio = asymptotic("BSN_SIMPLE", N, mu) / asymptotic("OPTIMAL", N, mu)
        assert ratio == pytest.approx(math.factorial(N - 1) / N ** (N - 2), rel=1e-12)
    with pytest.raises(ParameterError):
        asymptotic("NOPE", 3, mu)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_simple_scheme_asymptotic(N):
    mu = 1e-5
    assert closed_form("BSN_SIMPLE", mu, N=N) / asymptotic("BSN_SIMPLE", N, mu) == pytest.approx(1.0, rel=1e-3)


# --- finite M ---------------------------------------------------------------

@pytest.mark.parametrize("N, M", [(2, 9), (3, 12), (3, 17), (4, 16), (4, 23)])
@pytest.mark.parametrize("mu", [0.3, 1.0, 1.5])
def test_feedback_dp_matches_exhaustive_nesting(N, M, mu):
    assert feedback_finite_M(N, mu, M) == pytest.approx(nested_feedback_sum(N, mu, M), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("N, M", [(3, 12), (4, 16), (4, 23)])
@pytest.mark.parametrize("mu", [0.3, 1.0, 2.5])
def test_exact_feedback_matches_round_enumeration(N, M, mu):
    assert feedback_finite_M(N, mu, M, exact=True) == pytest.approx(
        exact_round_enumeration(N, mu, M), rel=1e-12, abs=1e-15)


def test_exact_and_single_click_sums_share_the_limit():
    for N in (3, 4, 5):
        a = feedback_finite_M(N, 1.0, 20_000)
        b = feedback_finite_M(N, 1.0, 20_000, exact=True)
        assert abs(a - b) < 1e-3
        assert b <= 1.0


def test_feedback_finite_m_limits():
    for N in (2, 3, 4, 5):
        assert feedback_finite_M(N, 0.0, 100) == 0.0
    gaps = [abs(feedback_finite_M(3, 1.0, M) - closed_form("BS3_FEEDBACK", 1.0)) for M in (100, 1000, 10_000)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 5e-4
    # the N = 2 sum is exact for even M
    assert feedback_finite_M(2, 1.0, 100) == pytest.approx(-math.expm1(-2.0), rel=1e-12)


def test_general_n4_limit_differs_from_four_step_receiver():
    vals = [feedback_finite_M(4, 1.0, M) for M in (100, 1000, 10_000)]
    assert vals[0] < vals[1] < vals[2]
    lim = feedback_limit(4, 1.0)
    assert abs(lim - vals[2]) < 1e-3
    assert abs(lim - closed_form("BS4_FEEDBACK", 1.0)) > 3e-3


def test_feedback_limit_richardson():
    for N in (4, 5):
        a = feedback_limit(N, 1.0, M=3000)
        b = feedback_limit(N, 1.0, M=6000)
        assert a == pytest.approx(b, abs=1e-6)
    assert feedback_limit(3, 0.7) == closed_form("BS3_FEEDBACK", 0.7)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_feedback_limit_small_mu_optimal(N):
    mu = 1e-2
    r = feedback_finite_M(N, mu, 10_000) / asymptotic("OPTIMAL", N, mu)
    assert 0.9 <= r <= 1.1


def test_feedback_range():
    with pytest.raises(ParameterError):
        feedback_finite_M(7, 1.0, 100)
    with pytest.raises(ParameterError):
        feedback_finite_M(4, 1.0, 3)


@pytest.mark.parametrize("M", [5, 17, 60])
@pytest.mark.parametrize("mu", [0.2, 1.0, 3.0])
def test_four_step_finite_sum_matches_literal(M, mu):
    assert bs4_feedback_finite_M(mu, M) == pytest.approx(literal_bs4_sum(mu, M), rel=1e-11)
    assert bs4_p2_finite_M(mu, M) == pytest.approx(literal_p2_sum(mu, M), rel=1e-11)


def test_four_step_finite_sum_converges():
    target = closed_form("BS4_FEEDBACK", 1.0)
    gaps = [abs(bs4_feedback_finite_M(1.0, M) - target) for M in (100, 1000, 10_000)]
    assert gaps[0] > gaps[1] > gaps[2]
    for M, g in zip((100, 1000, 10_000), gaps):
        assert g < 5.0 / M
    assert bs4_p2_finite_M(1.0, 10**6) == pytest.approx(closed_form("BS4_P2", 1.0), abs=1e-5)


def test_alphabet_validation():
    a = PhaseAlphabet(4, 2.0, 0.25)
    assert a.effective_mu == 0.5
    assert a.chord2(0, 1) == pytest.approx(2.0)
    assert a.chord2(0, 2) == pytest.approx(4.0)
    for bad in ((1, 1.0, 1.0), (3, -1.0, 1.0), (3, 1.0, 1.5)):
        with pytest.raises(ParameterError):
            PhaseAlphabet(*bad)


def test_clamp_warns():
    with pytest.warns(NumericalHealthWarning):
        assert analytics._clamp(1.0 + 1e-6) == 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert analytics._clamp(1.0 + 1e-12) == 1.0


@given(st.floats(0, 10))
def test_closed_forms_are_probabilities(mu):
    for name in analytics.SCHEMES:
        if name in ("BS2A", "BSN_SIMPLE"):
            continue
        assert 0.0 <= closed_form(name, mu) <= 1.0
