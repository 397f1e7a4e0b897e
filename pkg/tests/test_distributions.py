import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfnorm.distributions import (
    CenteredUniform,
    CohortSpec,
    DensityTable,
    EmpiricalSample,
    Normal,
    Rademacher,
    TwoPoint,
    cohort_moments,
    grouped_moments,
    moments,
)
from selfnorm.errors import DegenerateDistribution, InvalidDistribution

mp.mp.dps = 30

LAWS = [Normal(1.0), Normal(2.5), Rademacher(), CenteredUniform(1.0), TwoPoint(0.2, 2.0, -0.5),
        TwoPoint(0.9, -1 / 3, 3.0)]


def _mp_normal(sigma, b, g, inside):
    """mpmath reference for E g(X) restricted to |bX| <= 1 (inside) or > 1."""
    c = 1 / b
    dens = lambda s: mp.npdf(s, 0, sigma)
    if inside:
        return float(mp.quad(lambda s: g(s) * dens(s), [-c, 0, c]))
    return float(2 * mp.quad(lambda s: g(s) * dens(s), [c, mp.inf]))


# ---- examples --------------------------------------------------------------

def test_rademacher_at_unit_scale_keeps_everything_inside():
    tm = moments(Rademacher(), 1.0)
    assert tm.m4le == 1.0 and tm.a3gt == 0.0 and tm.a5le == 1.0


def test_normal_m4le_at_small_b_against_trapezoid_oracle():
    s = np.linspace(-10, 10, 400_001)
    ref = np.trapezoid(s**4 * np.exp(-s * s / 2) / math.sqrt(2 * math.pi), s)
    assert moments(Normal(1.0), 0.1).m4le == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("b", [0.3, 0.5, 1.2])
@pytest.mark.parametrize("sigma", [1.0, 1.7])
def test_normal_truncated_entries_against_mpmath(b, sigma):
    tm = moments(Normal(sigma), b)
    assert tm.m4le == pytest.approx(_mp_normal(sigma, b, lambda s: s**4, True), rel=1e-9)
    assert tm.a5le == pytest.approx(_mp_normal(sigma, b, lambda s: abs(s) ** 5, True), rel=1e-9)
    assert tm.a3gt == pytest.approx(_mp_normal(sigma, b, lambda s: abs(s) ** 3, False), rel=1e-8)
    assert tm.a3 == pytest.approx(2 * math.sqrt(2 / math.pi) * sigma**3, rel=1e-12)


def test_uniform_closed_forms():
    h, b = 2.0, 0.8  # cut at 1.25
    tm = moments(CenteredUniform(h), b)
    assert tm.m4le == pytest.approx(1.25**5 / 5 / h, rel=1e-12)
    assert tm.a3gt == pytest.approx((h**4 - 1.25**4) / 4 / h, rel=1e-12)
    assert tm.m2 == pytest.approx(h * h / 3, rel=1e-12)


def test_two_point_hand_moments():
    d = TwoPoint(0.9, -1 / 3, 3.0)
    assert d.moment(2) == pytest.approx(0.9 / 9 + 0.1 * 9)
    assert d.moment(3) == pytest.approx(-0.9 / 27 + 0.1 * 27)


def test_density_table_triangle():
    xs = np.linspace(-1, 1, 3)
    d = DensityTable(xs, np.array([0.0, 1.0, 0.0]))
    assert d.moment(2) == pytest.approx(1 / 6, rel=1e-10)
    tm = moments(d, 2.0)  # cut at 1/2
    ref = 2 * (0.5**5 / 5 - 0.5**6 / 6)
    assert tm.m4le == pytest.approx(ref, rel=1e-9)


def test_density_table_rejects_bad_mass():
    with pytest.raises(InvalidDistribution):
        DensityTable(np.array([-1.0, 1.0]), np.array([1.0, 1.0]))


def test_uncentered_law_rejected():
    with pytest.raises(InvalidDistribution):
        TwoPoint(0.5, 1.0, -0.5)
    with pytest.raises(InvalidDistribution):
        EmpiricalSample(np.array([1.0, 2.0, 3.0]))
    assert EmpiricalSample(np.array([1.0, 2.0, 3.0]), recenter=True).moment(1) == pytest.approx(0.0)


def test_degenerate_law_rejected():
    with pytest.raises(DegenerateDistribution):
        EmpiricalSample(np.zeros(4))


def test_empirical_from_csv_and_inside_count(tmp_path):
    p = tmp_path / "data.csv"
    p.write_text("-2\n-1\n1\n2\n", encoding="utf-8")
    d = EmpiricalSample.from_csv(p)
    tm = moments(d, 0.6)
    assert tm.n_inside == 2
    assert tm.m2 == pytest.approx(2.5)


def test_cohort_broadcast_and_mixed():
    c = CohortSpec.iid(Normal(1.0), 100)
    sets = cohort_moments(c, 1.0)
    assert len(sets) == 100 and sets[0].b == pytest.approx(0.1) and len(set(sets)) == 1
    mixed = CohortSpec.of([Rademacher(), Normal(1.0)])
    b = 1 / math.sqrt(2)
    ms = cohort_moments(mixed, 1.0)
    assert ms[0] == moments(Rademacher(), b) and ms[1] == moments(Normal(1.0), b)


class _Broken(Rademacher):
    def truncated_moments(self, b):
        raise InvalidDistribution("broken")


def test_cohort_error_names_member():
    bad = _Broken()
    c = CohortSpec.of([Rademacher(), Rademacher(), bad])
    with pytest.raises(InvalidDistribution, match="member 2.*broken"):
        grouped_moments(c, 1.0)


# ---- invariants ------------------------------------------------------------

@pytest.mark.parametrize("law", LAWS, ids=lambda d: d.label)
@given(b=st.floats(0.01, 3.0))
def test_indicator_partition(law, b):
    tm = moments(law, b)
    assert tm.a3gt + tm.a3le == pytest.approx(tm.a3, rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("law", LAWS, ids=lambda d: d.label)
def test_monotone_in_b(law):
    bs = np.geomspace(0.05, 3.0, 20)
    sets = [moments(law, float(b)) for b in bs]
    tol = 1e-12
    for lo, hi in zip(sets, sets[1:]):
        assert hi.m4le <= lo.m4le * (1 + tol) + tol
        assert hi.a5le <= lo.a5le * (1 + tol) + tol
        assert hi.a3gt >= lo.a3gt * (1 - tol) - tol


@given(sigma=st.floats(0.2, 5.0), b=st.floats(0.02, 2.0))
def test_normal_scale_law(sigma, b):
    a, u = moments(Normal(sigma), b), moments(Normal(1.0), sigma * b)
    for name, k in (("m2", 2), ("a3", 3), ("m4le", 4), ("a5le", 5), ("a3gt", 3)):
        assert getattr(a, name) == pytest.approx(getattr(u, name) * sigma**k, rel=1e-9, abs=1e-300)


def test_empirical_rademacher_consistency():
    rng = np.random.default_rng(11)
    v = rng.choice([-1.0, 1.0], size=1_000_000)
    d = EmpiricalSample(v, recenter=True)
    tm, ref = moments(d, 0.3), moments(Rademacher(), 0.3)
    se = 1 / math.sqrt(v.size)
    for name in ("m2", "a3", "m4le", "a5le", "m3"):
        # recentering by the sample mean perturbs each entry by O(mean^2); 5 SE covers it
        assert abs(getattr(tm, name) - getattr(ref, name)) <= 5 * 3 * se


@given(st.floats(0.01, 2.0))
def test_negation_flips_odd_moments(b):
    d = TwoPoint(0.2, 2.0, -0.5)
    a, m = moments(d, b), moments(d.negated(), b)
    assert m.m3 == pytest.approx(-a.m3) and m.m4le == pytest.approx(a.m4le)


def test_samplers_are_centered():
    rng = np.random.default_rng(3)
    for law in LAWS + [DensityTable(np.linspace(-1, 1, 3), np.array([0.0, 1.0, 0.0]))]:
        s = law.sample(rng, 200_000)
        assert abs(s.mean()) <= 5 * math.sqrt(law.moment(2) / s.size)
