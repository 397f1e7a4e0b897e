import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfnorm.delta import DeltaCoefficients
from selfnorm.distributions import CenteredUniform, CohortSpec, Normal, Rademacher, TwoPoint
from selfnorm.errors import DomainError, WindowViolated
from selfnorm.oracles import block_generators, crude_mc_tail, gaussian_selfnorm_tail, rademacher_tail
from selfnorm.tilted import (
    Target,
    TiltedLaw,
    conjugate_estimate,
    decomposition_bounds,
    gaussian_surrogate_factor,
    gaussian_surrogate_factor_quad,
    i2_log_bound,
    i3_exponent,
    i4_exponent,
    lemma1_constants,
    lemma1_expand,
    lemma2_identities,
    lower_bound_tail,
    rademacher_enumerated_expectation,
    sample_tilted,
    standardized_tilted_sums,
    tilt_moments,
    tilt_stats,
    xi,
)

mp.mp.dps = 30
SQRT_E = math.exp(0.5)
LAWS = [Normal(1.0), Rademacher(), CenteredUniform(1.0), TwoPoint(0.2, 2.0, -0.5)]


def mp_expect_normal(g, sigma=1.0):
    return float(mp.quad(lambda s: g(s) * mp.npdf(s, 0, sigma), [-mp.inf, 0, mp.inf]))


# ---- xi and the tilted law -------------------------------------------------

def test_xi_never_exceeds_one():
    rng = np.random.default_rng(0)
    b = rng.uniform(1e-4, 10, 10**6)
    s = rng.normal(0, 50, 10**6)
    assert np.all(xi(b, s) <= 1.0)
    # the maximum is attained at s = 1/b
    assert xi(0.25, 4.0) == 1.0


@pytest.mark.parametrize("law", LAWS, ids=lambda d: d.label)
@pytest.mark.parametrize("b", [0.01, 0.1, 0.5, 2.0])
def test_normalizer_bracket(law, b):
    z = tilt_moments(law, b).normalizer
    assert 0 < z <= SQRT_E


def test_rademacher_tilt_closed_forms():
    for b in (0.05, 0.3, 1.0):
        tw = tilt_moments(Rademacher(), b)
        z = math.exp(-b * b / 2) * math.cosh(b)
        assert tw.normalizer == pytest.approx(z, rel=1e-14)
        e1 = math.exp(-b * b / 2) * (2 * b * math.sinh(b) - b * b * math.cosh(b))
        assert tw.e1 == pytest.approx(e1, rel=1e-13)


@pytest.mark.parametrize("b", [0.05, 0.3])
def test_normal_tilt_against_mpmath(b):
    tw = tilt_moments(Normal(1.0), b)
    f = lambda s: 2 * b * s - (b * s) ** 2
    assert tw.normalizer == pytest.approx(mp_expect_normal(lambda s: mp.exp(f(s) / 2)), rel=1e-13)
    assert tw.e1 == pytest.approx(mp_expect_normal(lambda s: f(s) * mp.exp(f(s) / 2)), rel=1e-11)
    assert tw.e2 == pytest.approx(mp_expect_normal(lambda s: f(s) ** 2 * mp.exp(f(s) / 2)), rel=1e-11)
    assert tw.e3 == pytest.approx(mp_expect_normal(lambda s: abs(f(s)) ** 3 * mp.exp(f(s) / 2)), rel=1e-8)


def test_tilted_rademacher_is_sigmoid():
    b = 0.4
    law = TiltedLaw.of(Rademacher(), b)
    draws = law.sample_x(block_generators(1, 1)[0], 400_000)
    p = 1 / (1 + math.exp(-2 * b))
    assert abs((draws > 0).mean() - p) <= 4 * math.sqrt(p * (1 - p) / draws.size)


def test_tilt_vanishes_as_b_goes_to_zero():
    law = TiltedLaw.of(Rademacher(), 1e-9)
    draws = law.sample_x(block_generators(2, 1)[0], 200_000)
    assert abs((draws > 0).mean() - 0.5) <= 4 * 0.5 / math.sqrt(draws.size)


def test_normal_tilted_mean_against_quadrature():
    b = 0.1
    law = TiltedLaw.of(Normal(1.0), b)
    eta = sample_tilted(law, block_generators(3, 1)[0], 10**6)
    tw = tilt_moments(Normal(1.0), b)
    mean = tw.e1 / tw.normalizer
    sd = math.sqrt(tw.e2 / tw.normalizer - mean * mean)
    assert abs(eta.mean() - mean) <= 4 * sd / math.sqrt(eta.size)
    assert np.all(eta <= 1.0)


# ---- expansion with explicit remainder ------------------------------------

def test_lemma1_constants_recomputed():
    o1, o2 = lemma1_constants(1.0, 0.5)
    assert o1 == pytest.approx(SQRT_E + 1 + 1 / 3, rel=1e-15)
    assert o1 == pytest.approx(2.98205, abs=1e-5)
    ref = (3 * 0.25 + 0.125) / 6 + (2 + 1.5 + 0.5 + 0.0625) / 24 + SQRT_E * 1.5**5
    assert o2 == pytest.approx(ref, rel=1e-15)
    assert o2 == pytest.approx(12.835081, abs=1e-6)


def test_lemma1_rademacher_closed_form():
    b = 0.3
    r = lemma1_expand(Rademacher(), b, 1.0, 0.5)
    assert r.lhs == pytest.approx(math.exp(-b * b / 2) * math.cosh(b), rel=1e-14)
    assert r.ok


@pytest.mark.parametrize("law", LAWS, ids=lambda d: d.label)
def test_lemma1_degenerate_scale(law):
    r = lemma1_expand(law, 1e-6, 1.0, 0.5)
    assert abs(r.lhs - 1) < 1e-10 and abs(r.remainder) < 1e-15


@pytest.mark.parametrize("law", LAWS, ids=lambda d: d.label)
@given(b=st.floats(0.005, 1.0), lam=st.floats(0.1, 3.0), theta=st.floats(0.1, 3.0))
def test_lemma1_remainder_within_bound(law, b, lam, theta):
    assert lemma1_expand(law, b, lam, theta).ok


def test_lemma1_rejects_nonpositive():
    with pytest.raises(ValueError):
        lemma1_expand(Normal(1.0), 0.1, 0.0, 0.5)


# ---- tilted-moment identities ---------------------------------------------

def test_lemma2_normal_b005():
    rep = lemma2_identities(Normal(1.0), 0.05)
    assert rep.ok and rep.in_window
    assert {c.name for c in rep.checks} == {"norm", "xi1", "xi2", "xi3", "xi1sq"}


def test_lemma2_symmetric_main_terms():
    b = 0.1
    rep = lemma2_identities(Rademacher(), b)
    # all indicators on, odd moments zero: main of xi1 is b^2 - (2/3) b^4
    assert rep["xi1"].main == pytest.approx(b * b - 2 / 3 * b**4, rel=1e-14)
    assert rep["xi2"].main == pytest.approx(4 * b * b - 3 * b**4, rel=1e-14)


def test_lemma2_window():
    rep = lemma2_identities(Rademacher(), 0.4)
    assert not rep.in_window
    with pytest.raises(WindowViolated):
        lemma2_identities(Rademacher(), 0.4, strict=True)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: d.label)
@given(b=st.floats(0.005, 0.2))
def test_lemma2_within_bounds(law, b):
    assert lemma2_identities(law, b).ok


# ---- tilt statistics -------------------------------------------------------

@given(n=st.integers(10, 10**6), x=st.floats(0.1, 3.0))
def test_tilt_stats_rademacher_closed_form(n, x):
    st_ = tilt_stats(CohortSpec.iid(Rademacher(), n), x)
    b = x / math.sqrt(n)
    assert st_.m_n == pytest.approx(n * (2 * b * math.tanh(b) - b * b), rel=1e-10)
    assert st_.sigma_n2 > 0 and st_.v_n >= 0


def test_tilt_stats_normal_pinned_by_quadrature():
    n, x = 400, 3.0
    b = x / 20
    f = lambda s: 2 * b * s - (b * s) ** 2
    z = mp_expect_normal(lambda s: mp.exp(f(s) / 2))
    e1 = mp_expect_normal(lambda s: f(s) * mp.exp(f(s) / 2))
    e2 = mp_expect_normal(lambda s: f(s) ** 2 * mp.exp(f(s) / 2))
    st_ = tilt_stats(CohortSpec.iid(Normal(1.0), n), x)
    assert st_.m_n == pytest.approx(n * e1 / z, rel=1e-10)
    assert st_.sigma_n2 == pytest.approx(n * (e2 / z - (e1 / z) ** 2), rel=1e-10)
    assert st_.log_prod_norm == pytest.approx(n * math.log(z), rel=1e-10)


def test_tilt_stats_limits():
    x = 3.0
    prev = None
    for b in (0.2, 0.1, 0.05, 0.025):
        n = round((x / b) ** 2)
        s = tilt_stats(CohortSpec.iid(Normal(1.0), n), x)
        err = (abs(s.m_n - x * x), abs(s.sigma_n2 - 4 * x * x))
        if prev:
            assert err[0] < prev[0] and err[1] < prev[1]
        prev = err


# ---- conjugate estimator ---------------------------------------------------

@pytest.mark.parametrize("n", [8, 12, 16])
@pytest.mark.parametrize("x", [0.7, 1.7, 2.5])
def test_enumeration_unbiased(n, x):
    e, p = rademacher_enumerated_expectation(n, x)
    assert e == pytest.approx(p, rel=1e-12)


def test_rademacher_estimate_matches_exact():
    c = CohortSpec.iid(Rademacher(), 100)
    est = conjugate_estimate(c, 3.0, 50_000, seed=4)
    assert abs(est.p_hat - rademacher_tail(100, 3.0).p) <= 3 * est.se
    assert est.target is Target.QUADRATIC_EVENT


def test_certificate_soundness():
    for law, x in ((Rademacher(), 2.0), (Normal(1.0), 2.5), (TwoPoint(0.2, 2.0, -0.5), 2.0)):
        est = conjugate_estimate(CohortSpec.iid(law, 200), x, 20_000, seed=8)
        assert abs(est.p_hat - est.surrogate) <= 3 * est.se + est.r_cert


def test_surrogate_closed_form_matches_quadrature():
    st_ = tilt_stats(CohortSpec.iid(Normal(1.0), 300), 2.5)
    assert math.exp(gaussian_surrogate_factor(2.5, st_)) == pytest.approx(
        gaussian_surrogate_factor_quad(2.5, st_), rel=1e-10)


def test_small_x_agrees_with_crude_mc():
    c = CohortSpec.iid(TwoPoint(0.2, 2.0, -0.5), 400)
    est = conjugate_estimate(c, 0.3, 40_000, seed=6)
    crude = crude_mc_tail(c, 0.3, 40_000, seed=7)
    assert abs(est.p_hat - crude.p) <= 4 * math.hypot(est.se, crude.abs_err)


def test_sample_count_contract():
    c = CohortSpec.iid(Rademacher(), 10)
    with pytest.raises(ValueError):
        conjugate_estimate(c, 1.0, 0, seed=1)
    one = conjugate_estimate(c, 1.0, 1, seed=1)
    assert not one.se_valid and math.isinf(one.se) and 0 <= one.p_hat <= 1


def test_estimate_reproducible():
    c = CohortSpec.iid(Normal(1.0), 30)
    assert conjugate_estimate(c, 1.5, 5000, seed=3) == conjugate_estimate(c, 1.5, 5000, seed=3)


def test_lower_bound_for_gaussian():
    est = lower_bound_tail(CohortSpec.iid(Normal(1.0), 100), 2.0, 40_000, seed=12)
    assert est.target is Target.SELF_NORM_LOWER_BOUND
    assert est.p_hat <= gaussian_selfnorm_tail(100, 2.0).p + 3 * est.se


def test_lower_bound_tight_for_rademacher():
    est = lower_bound_tail(CohortSpec.iid(Rademacher(), 64), 1.5, 40_000, seed=13)
    assert abs(est.p_hat - rademacher_tail(64, 1.5).p) <= 3 * est.se


def test_lower_bound_near_zero_threshold():
    est = lower_bound_tail(CohortSpec.iid(Normal(1.0), 400), 0.02, 40_000, seed=14)
    assert abs(est.p_hat - 0.5) <= 0.02


def test_standardized_sums_moments():
    g = standardized_tilted_sums(CohortSpec.iid(Rademacher(), 50), 2.0, 40_000, seed=15)
    assert abs(g.mean()) < 0.03 and abs(g.std() - 1) < 0.03


# ---- decomposition bounds --------------------------------------------------

def test_zero_functional_reduces_to_exponentials():
    x, eps = 6.0, 0.4
    assert i2_log_bound(x, 0.0) == pytest.approx(math.log(math.exp(-9 * x * x / 8) + math.exp(-x * x)))
    _, p3 = i3_exponent(x, eps)
    _, p4 = i4_exponent(x, eps)
    assert p3 == p4 == pytest.approx(-x * x / 2 - eps * x / 4)


def test_chained_exponents_sharper_than_simplified():
    for x in (3.0, 10.0, 50.0):
        eps = x ** -0.25
        assert i3_exponent(x, eps)[0] <= i3_exponent(x, eps)[1]
        assert i4_exponent(x, eps)[0] <= i4_exponent(x, eps)[1]


def test_decomposition_report():
    rep = decomposition_bounds(CohortSpec.iid(Rademacher(), 10**4), 6.0)
    assert rep.eps == pytest.approx(6.0**-0.25)
    assert rep["I2"].ratio_to_i1 < 0.01
    assert rep["I2_explicit"].vacuous
    assert rep["I4"].ratio_to_i1 < 1


def test_decomposition_domain_guard():
    with pytest.raises(DomainError):
        decomposition_bounds(CohortSpec.iid(Rademacher(), 100), 0.5)
