"""Exponential tilting by e^{xi/2} with xi = 2bX - (bX)^2.

Under the tilted law each summand contributes eta_i distributed as xi_i
reweighted by e^{xi_i/2}; then

    P(sum xi_i >= x^2) = (prod E e^{xi_i/2}) E[e^{-sum eta_i / 2} I{sum eta_i >= x^2}]

which is what :func:`conjugate_estimate` samples. The module also evaluates
the explicit expansions of E e^{lambda bX - theta (bX)^2} and of the tilted
moments E xi^k e^{xi/2}, with remainder bounds assembled from printed
constants, and the upper bounds on the three discarded pieces of
P(S_n >= x V_n).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from ._quadrature import integrate_split
from .delta import DEFAULT_GAMMA_BOUND, MAIN, XI1, XI2, DeltaCoefficients, delta_i, delta_n_grouped
from .distributions import CohortSpec, DistributionSpec, Normal, grouped_moments, moments
from .errors import DomainError, WindowViolated
from .oracles import block_generators, geq_with_slack, rademacher_tail, split_samples
from .tail import log_normal_tail

SQRT_E = math.exp(0.5)
CERT_WINDOW = 0.2


def xi(b: float, s):
    """2bs - (bs)^2; never exceeds 1."""
    bs = b * np.asarray(s, dtype=float)
    return 2 * bs - bs * bs


@dataclass(frozen=True)
class XiTransform:
    b: float
    underlying: DistributionSpec

    def __call__(self, s):
        return xi(self.b, s)


# ---------------------------------------------------------------------------
# tilted moments E xi^k e^{xi/2}


@dataclass(frozen=True)
class TiltMoments:
    """E e^{xi/2} - 1, E xi e^{xi/2}, E xi^2 e^{xi/2}, E |xi|^3 e^{xi/2}."""

    norm_m1: float
    e1: float
    e2: float
    e3: float

    @property
    def normalizer(self) -> float:
        return 1.0 + self.norm_m1


def _gauss_raw_moments(mu: float, var: float, kmax: int) -> np.ndarray:
    m = np.zeros(kmax + 1)
    m[0] = 1.0
    if kmax:
        m[1] = mu
    for k in range(2, kmax + 1):
        m[k] = mu * m[k - 1] + (k - 1) * var * m[k - 2]
    return m


def _normal_tilt(dist: Normal, b: float) -> TiltMoments:
    # Under e^{xi/2} the standardised variable is Gaussian with mean s/(1+s^2)
    # and variance 1/(1+s^2), s = b sigma; xi = 2 s W - s^2 W^2.
    s = b * dist.sigma
    q = 1 + s * s
    log_norm = s * s / (2 * q) - 0.5 * math.log1p(s * s)
    mu, var = s / q, 1 / q
    raw = _gauss_raw_moments(mu, var, 4)
    poly = np.array([0.0, 2 * s, -s * s])
    norm = math.exp(log_norm)
    e1 = norm * float(np.dot(poly, raw[:3]))
    p2 = P.polymul(poly, poly)
    e2 = norm * float(np.dot(p2, raw[: p2.size]))
    e3 = _quad_tilt(dist, b, lambda v: np.abs(v) ** 3)
    return TiltMoments(math.expm1(log_norm), e1, e2, e3)


def _quad_tilt(dist: DistributionSpec, b: float, h) -> float:
    def g(s):
        v = xi(b, s)
        return h(v) * np.exp(v / 2)

    return dist.expect(g, breaks=(0.0, 1 / b, -1 / b, 2 / b))


def tilt_moments(dist: DistributionSpec, b: float) -> TiltMoments:
    if isinstance(dist, Normal):
        return _normal_tilt(dist, b)
    norm_m1 = dist.expect(lambda s: np.expm1(xi(b, s) / 2), breaks=(0.0, 1 / b, -1 / b))
    return TiltMoments(
        norm_m1,
        _quad_tilt(dist, b, lambda v: v),
        _quad_tilt(dist, b, lambda v: v * v),
        _quad_tilt(dist, b, lambda v: np.abs(v) ** 3),
    )


@dataclass(frozen=True)
class TiltedLaw:
    base: XiTransform
    normalizer: float

    @classmethod
    def of(cls, dist: DistributionSpec, b: float) -> "TiltedLaw":
        return cls(XiTransform(b, dist), tilt_moments(dist, b).normalizer)

    def sample_x(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws of the underlying X under the tilted measure."""
        dist, b = self.base.underlying, self.base.b
        at = dist.atoms()
        if at is not None:
            v, w = at
            tw = w * np.exp(xi(b, v) / 2)
            tw = tw / tw.sum()
            return v[rng.choice(v.size, size=size, p=tw)]
        out = np.empty(0)
        while out.size < size:
            m = int((size - out.size) * SQRT_E / max(self.normalizer, 1e-3)) + 16
            s = dist.sample(rng, m)
            keep = rng.uniform(size=m) <= np.exp((xi(b, s) - 1) / 2)
            out = np.concatenate([out, s[keep]])
        return out[:size]


def sample_tilted(law: TiltedLaw, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Draws of eta, i.e. xi under the tilted law."""
    return law.base(law.sample_x(rng, size))


# ---------------------------------------------------------------------------
# expansion of E exp(lambda bX - theta (bX)^2)


def lemma1_constants(lam: float, theta: float) -> tuple[float, float]:
    """The two candidate constants whose max bounds the O(1) remainder slot."""
    e = math.exp(lam * lam / (4 * theta))
    o1 = e + lam + abs(lam * lam / 2 - theta) + abs(lam**3 / 6 - lam * theta)
    o2 = (
        (3 * lam * theta**2 + theta**3) / 6
        + (4 * lam**3 * theta + 6 * lam**2 * theta**2 + 4 * lam * theta**3 + theta**4) / 24
        + e * (lam + theta) ** 5
    )
    return o1, o2


def lemma1_coefficients(lam: float, theta: float) -> DeltaCoefficients:
    o1, o2 = lemma1_constants(lam, theta)
    return DeltaCoefficients(
        lam**3 / 6 - lam * theta,
        theta**2 / 2 - lam**2 * theta / 2 + lam**4 / 24,
        max(o1, o2),
    )


@dataclass(frozen=True)
class Lemma1Result:
    lhs: float
    main: float
    remainder: float
    bound: float

    @property
    def ok(self) -> bool:
        return abs(self.remainder) <= self.bound


def _mgf_quadratic_m1(dist: DistributionSpec, b: float, lam: float, theta: float) -> float:
    """E exp(lam bX - theta (bX)^2) - 1."""
    if isinstance(dist, Normal):
        s2 = (b * dist.sigma) ** 2
        q = 1 + 2 * theta * s2
        return math.expm1(lam * lam * s2 / (2 * q) - 0.5 * math.log1p(2 * theta * s2))
    return dist.expect(
        lambda s: np.expm1(lam * b * np.asarray(s) - theta * (b * np.asarray(s)) ** 2),
        breaks=(0.0, 1 / b, -1 / b),
    )


def lemma1_expand(dist: DistributionSpec, b: float, lam: float, theta: float) -> Lemma1Result:
    if not (lam > 0 and theta > 0):
        raise ValueError("lambda and theta must be positive")
    tm = moments(dist, b)
    c = lemma1_coefficients(lam, theta)
    lhs_m1 = _mgf_quadratic_m1(dist, b, lam, theta)
    main_m1 = math.fsum(
        ((lam * lam / 2 - theta) * b * b * tm.m2, delta_i(tm, c.with_gamma(0.0)).value)
    )
    bound = c.gamma * (b**3 * tm.a3gt + b**5 * tm.a5le)
    return Lemma1Result(1.0 + lhs_m1, 1.0 + main_m1, lhs_m1 - main_m1, bound)


# ---------------------------------------------------------------------------
# tilted-moment identities

C_XI1_5 = 7 / 8 + 65 / 48 + 243 * SQRT_E / 384
C_XI2_5 = 7 / 2 + 65 / 8 + 243 * SQRT_E / 48
C_XI4_5 = 3 * (187 / 48 + 243 * SQRT_E / 384) ** 2


def _outer_cap(k: int) -> float:
    # sup over xi <= 1 of |xi|^k e^{xi/2}
    return max(SQRT_E, (2 * k / math.e) ** k)


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    value: float
    main: float
    remainder: float
    bound: float

    @property
    def ok(self) -> bool:
        return abs(self.remainder) <= self.bound


@dataclass(frozen=True)
class Lemma2Report:
    b: float
    in_window: bool
    checks: tuple[IdentityCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def __getitem__(self, name: str) -> IdentityCheck:
        return next(c for c in self.checks if c.name == name)


def lemma2_identities(
    dist: DistributionSpec, b: float, window: float = CERT_WINDOW, strict: bool = False
) -> Lemma2Report:
    """Tilted moments against their expansions and explicit remainder bounds.

    The ``norm`` entry is reported as E e^{xi/2} - 1 to keep its precision.
    """
    in_window = b <= window
    if strict and not in_window:
        raise WindowViolated(f"b={b} exceeds certification window {window}")
    tm = moments(dist, b)
    tw = tilt_moments(dist, b)
    b2, b3, b4, b5 = b**2, b**3, b**4, b**5
    gt, le5 = b3 * tm.a3gt, b5 * tm.a5le
    c0 = lemma1_coefficients(1.0, 0.5).gamma

    def dz(c):
        return delta_i(tm, c).value

    rows = [
        ("norm", tw.norm_m1, dz(MAIN), c0 * (gt + le5)),
        ("xi1", tw.e1, b2 * tm.m2 + dz(XI1), (SQRT_E + 4) * gt + C_XI1_5 * le5),
        ("xi2", tw.e2, 4 * b2 * tm.m2 + dz(XI2), (_outer_cap(2) + 4) * gt + C_XI2_5 * le5),
        ("xi3", tw.e3, 0.0, 27 * SQRT_E * b3 * tm.a3le + _outer_cap(3) * gt),
        (
            "xi1sq",
            tw.e1**2,
            0.0,
            3 * (SQRT_E + 2) ** 2 * gt + 3 * b4 * tm.m4le + C_XI4_5 * le5,
        ),
    ]
    checks = tuple(IdentityCheck(n, v, m, v - m, bd) for n, v, m, bd in rows)
    return Lemma2Report(b, in_window, checks)


# ---------------------------------------------------------------------------
# cohort tilt statistics


@dataclass(frozen=True)
class TiltStats:
    m_n: float
    sigma_n2: float
    v_n: float
    log_prod_norm: float
    b: float

    @property
    def sigma_n(self) -> float:
        return math.sqrt(self.sigma_n2)


def tilt_stats(cohort: CohortSpec, x: float) -> TiltStats:
    """Mean, variance and absolute third moment of sum eta_i, plus sum log E e^{xi_i/2}."""
    if not x > 0:
        raise ValueError("x must be positive")
    b = cohort.scale(x)
    m, v, a, lp = [], [], [], []
    for spec, count in cohort:
        tw = tilt_moments(spec, b)
        z = tw.normalizer
        mean = tw.e1 / z
        m.append(count * mean)
        v.append(count * (tw.e2 / z - mean * mean))
        a.append(count * tw.e3 / z)
        lp.append(count * math.log1p(tw.norm_m1))
    return TiltStats(math.fsum(m), math.fsum(v), math.fsum(a), math.fsum(lp), b)


# ---------------------------------------------------------------------------
# conjugate-measure sampler


class Target(str, enum.Enum):
    QUADRATIC_EVENT = "QUADRATIC_EVENT"
    SELF_NORM_LOWER_BOUND = "SELF_NORM_LOWER_BOUND"


@dataclass(frozen=True)
class TiltedEstimate:
    p_hat: float
    se: float
    samples: int
    stats: TiltStats
    target: Target
    surrogate: float
    r_cert: float
    se_valid: bool = True

    @property
    def rel_se(self) -> float:
        return self.se / self.p_hat if self.p_hat > 0 else math.inf


def gaussian_surrogate_factor(x: float, st: TiltStats) -> float:
    """int_{(x^2-m_n)/sigma_n}^inf e^{-t sigma_n/2} dPhi(t), in closed form, as a log."""
    s = st.sigma_n
    a = (x * x - st.m_n) / s
    return s * s / 8 + log_normal_tail(a + s / 2)


def gaussian_surrogate_factor_quad(x: float, st: TiltStats) -> float:
    """Same integral by direct quadrature (used to cross-check the closed form)."""
    s = st.sigma_n
    a = (x * x - st.m_n) / s
    val, _ = integrate_split(
        lambda t: math.exp(-t * s / 2 - t * t / 2) / math.sqrt(2 * math.pi), a, math.inf, tol=1e-14
    )
    return val


def _tilted_laws(cohort: CohortSpec, b: float) -> list[tuple[TiltedLaw, int]]:
    return [(TiltedLaw.of(spec, b), count) for spec, count in cohort]


def conjugate_estimate(
    cohort: CohortSpec,
    x: float,
    samples: int,
    seed: int,
    blocks: int = 16,
    target: Target = Target.QUADRATIC_EVENT,
) -> TiltedEstimate:
    """Unbiased estimate of P(2b S_n - b^2 V_n^2 >= x^2) under the e^{xi/2} tilt.

    Each replicate contributes exp(L - W/2) I{W >= x^2}, W = sum eta_i,
    L = sum log E e^{xi_i/2}. The common factor exp(L - x^2/2) is pulled out
    so that the accumulated weights stay in [0, 1].
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    st = tilt_stats(cohort, x)
    b = st.b
    laws = _tilted_laws(cohort, b)
    x2 = x * x
    blocks = max(1, min(blocks, samples))
    acc, acc2 = [], []
    for rng, m in zip(block_generators(seed, blocks), split_samples(samples, blocks)):
        left = m
        rows = max(1, 4_000_000 // cohort.n)
        while left:
            r = min(left, rows)
            s = np.zeros(r)
            v2 = np.zeros(r)
            for law, count in laws:
                d = law.sample_x(rng, r * count).reshape(r, count)
                s += d.sum(axis=1)
                v2 += (d * d).sum(axis=1)
            w = 2 * b * s - b * b * v2
            u = np.where(geq_with_slack(w, np.full(r, x2)), np.exp(-np.maximum(w - x2, 0.0) / 2), 0.0)
            acc.append(float(u.sum()))
            acc2.append(float((u * u).sum()))
            left -= r
    scale = math.exp(st.log_prod_norm - x2 / 2)
    mean_u = math.fsum(acc) / samples
    if samples > 1:
        var_u = max(math.fsum(acc2) / samples - mean_u * mean_u, 0.0) * samples / (samples - 1)
        se, se_valid = scale * math.sqrt(var_u / samples), True
    else:
        se, se_valid = math.inf, False
    surrogate = math.exp(st.log_prod_norm - st.m_n / 2 + gaussian_surrogate_factor(x, st))
    r_cert = 16 * st.v_n / st.sigma_n**3 * scale
    return TiltedEstimate(
        min(scale * mean_u, 1.0), se, samples, st, target, surrogate, r_cert, se_valid
    )


def lower_bound_tail(cohort: CohortSpec, x: float, samples: int, seed: int, blocks: int = 16) -> TiltedEstimate:
    """Certified lower bound for P(S_n >= x V_n), from x V_n <= (x^2 + b^2 V_n^2)/(2b)."""
    return conjugate_estimate(cohort, x, samples, seed, blocks, Target.SELF_NORM_LOWER_BOUND)


def rademacher_enumerated_expectation(n: int, x: float) -> tuple[float, float]:
    """Exact tilted expectation of the conjugate estimator over all 2^n sign vectors.

    Returns (expectation, exact binomial tail) for comparison.
    """
    if n > 20:
        raise ValueError("enumeration limited to n <= 20")
    b = x / math.sqrt(n)
    signs = 1.0 - 2.0 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)
    xis = xi(b, signs)
    norm = math.exp(-b * b / 2) * math.cosh(b)
    # tilted probability of each sign vector and the estimator value on it
    log_q = (xis / 2).sum(axis=1) + n * math.log(0.5) - n * math.log(norm)
    w = xis.sum(axis=1)
    hit = geq_with_slack(w, np.full(w.size, x * x))
    est = np.exp(n * math.log(norm) - w / 2)
    expectation = math.fsum(np.exp(log_q[hit]) * est[hit])
    return expectation, rademacher_tail(n, x).p


def standardized_tilted_sums(cohort: CohortSpec, x: float, samples: int, seed: int) -> np.ndarray:
    """Draws of sum (eta_i - E eta_i) / sigma_n; their ECDF estimates G_n."""
    st = tilt_stats(cohort, x)
    rng = block_generators(seed, 1)[0]
    total = np.zeros(samples)
    for law, count in _tilted_laws(cohort, st.b):
        total += law.base(law.sample_x(rng, samples * count)).reshape(samples, count).sum(axis=1)
    return (total - st.m_n) / st.sigma_n


# ---------------------------------------------------------------------------
# bounds on the discarded pieces


@dataclass(frozen=True)
class PieceBound:
    name: str
    log_bound: float
    printed_log_bound: float
    ratio_to_i1: float
    vacuous: bool


@dataclass(frozen=True)
class DecompositionReport:
    x: float
    eps: float
    log_i1: float
    pieces: tuple[PieceBound, ...]
    lemma3_premise: bool

    def __getitem__(self, name: str) -> PieceBound:
        return next(p for p in self.pieces if p.name == name)


def i2_log_bound(x: float, delta: float) -> float:
    """log(exp(-9x^2/8 + Delta) + exp(-x^2))."""
    return float(np.logaddexp(-9 * x * x / 8 + delta, -x * x))


def i3_exponent(x: float, eps: float) -> tuple[float, float]:
    """(chained exponent, simplified -x^2/2 - eps x/4) before the Delta term."""
    t = x * x + eps * x
    return -t / 2 + eps * math.sqrt(t) / 9, -x * x / 2 - eps * x / 4


def i4_exponent(x: float, eps: float) -> tuple[float, float]:
    t = x * x - eps * x
    return -t / 2 - 2 * eps * math.sqrt(t), -x * x / 2 - eps * x / 4


def _safe_exp(v: float) -> float:
    return math.inf if v > 709.0 else math.exp(v)


def decomposition_bounds(
    cohort: CohortSpec,
    x: float,
    upsilon: float = 0.5,
    gamma_bound: float = DEFAULT_GAMMA_BOUND,
    A0: float = 68.0,
) -> DecompositionReport:
    """Upper bounds on the three pieces of P(S_n >= x V_n) beyond the tilted event.

    ``I2`` fills its O(1) slots with +gamma_bound; ``I2_explicit`` uses the
    printed truncation constants (A0 = 68, t = 5), whose e^{3 A0 / 2} factor
    usually makes that bound vacuous, which is reported.
    I3 and I4 instantiate the finite-x tilt coefficients and expansion
    constants, so they carry no unquantified slots.
    """
    if not 0.0 <= upsilon < 1.0:
        raise ValueError("upsilon must lie in [0, 1)")
    eps = x ** ((upsilon - 1) / 2)
    if eps * eps >= x * x:
        raise DomainError(f"eps^2={eps * eps} must be below x^2={x * x}")
    grouped = grouped_moments(cohort, x)
    log_i1 = delta_n_grouped(grouped, MAIN).value + log_normal_tail(x)

    big = 81 / 384 * math.exp(1.5 * A0)
    d2 = 0.0
    for tm, k in grouped:
        b = tm.b
        d2 += k * (27 / 48 * b**3 * tm.m3 + big * b**4 * tm.m4le + (27 / 24 + big * A0) * b**3 * tm.a3gt)
    lb2_explicit = i2_log_bound(x, d2)
    # O(1) slots of the b^4 and gamma terms at the interval policy's upper end
    lb2 = i2_log_bound(x, delta_n_grouped(grouped, DeltaCoefficients(27 / 48, gamma_bound, gamma_bound)).value)

    def lemma1_delta(lam, theta):
        return delta_n_grouped(grouped, lemma1_coefficients(lam, theta)).value

    lam3 = math.sqrt(x * x + eps * x) / x
    d3 = lemma1_delta(lam3, lam3 / 9)
    e3, p3 = i3_exponent(x, eps)
    lam4 = math.sqrt(x * x - eps * x) / x
    d4 = lemma1_delta(lam4, 2 * lam4)
    e4, p4 = i4_exponent(x, eps)

    pieces = []
    entries = (
        ("I2", lb2, lb2),
        ("I2_explicit", lb2_explicit, lb2_explicit),
        ("I3", e3 + d3, p3 + d3),
        ("I4", e4 + d4, p4 + d4),
    )
    for name, lb, plb in entries:
        pieces.append(PieceBound(name, lb, plb, _safe_exp(lb - log_i1), lb >= 0.0))
    return DecompositionReport(x, eps, log_i1, tuple(pieces), 0 < eps < 0.5)


def interval_delta(grouped, coeffs: DeltaCoefficients, gamma_bound: float = DEFAULT_GAMMA_BOUND) -> float:
    """Upper end of Delta_n when its O(1) slots range over [-gamma_bound, gamma_bound]."""
    return delta_n_grouped(grouped, coeffs.with_gamma(gamma_bound)).value
