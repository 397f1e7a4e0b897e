"""Reference values of P(S_n >= x V_n) used as ground truth.

Two laws admit exact answers: Rademacher summands (V_n^2 = n, so the event is
a binomial tail) and Gaussian summands (S_n/V_n maps monotonically onto a
Student statistic with n-1 degrees of freedom). Everything else falls back to
plain Monte Carlo.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .distributions import CohortSpec, DistributionSpec
from .errors import DomainError, QuadratureFailure, Underflow

EPS = float(np.finfo(float).eps)
LATTICE_SNAP = 1e-9
MAX_RADEMACHER_N = 10**7
#: below this n the tail is summed in exact integer arithmetic
EXACT_INT_N = 4096


class Method(str, enum.Enum):
    BINOMIAL_SUM = "BINOMIAL_SUM"
    T_INTEGRAL = "T_INTEGRAL"
    CRUDE_MC = "CRUDE_MC"


@dataclass(frozen=True)
class ExactTail:
    p: float
    method: Method
    abs_err: float
    log_p: float = math.nan
    samples: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"probability {self.p} outside [0, 1]")
        if not self.abs_err >= 0:
            raise ValueError("abs_err must be non-negative")


# ---------------------------------------------------------------------------
# binomial tail (Rademacher)

_S = (1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188)
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _stirlerr(n: int) -> float:
    # log(n!) - log(sqrt(2 pi n) (n/e)^n)
    if n <= 15:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - _LOG_SQRT_2PI
    nn = float(n) * n
    s0, s1, s2, s3, s4 = _S
    if n > 500:
        return (s0 - s1 / nn) / n
    if n > 80:
        return (s0 - (s1 - s2 / nn) / nn) / n
    if n > 35:
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n


def _bd0(x: float, m: float) -> float:
    # x log(x/m) + m - x without cancellation near x = m
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2 * x * v
        v *= v
        j = 1
        while True:
            ej *= v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / m) + m - x


def log_binom_half(n: int, k: int) -> float:
    """log P(K = k) for K ~ Binomial(n, 1/2), saddle-point form."""
    if k < 0 or k > n:
        return -math.inf
    if k == 0 or k == n:
        return -n * math.log(2.0)
    half = n / 2
    lc = _stirlerr(n) - _stirlerr(k) - _stirlerr(n - k) - _bd0(k, half) - _bd0(n - k, half)
    lf = math.log(2 * math.pi) + math.log(k) + math.log1p(-k / n)
    return lc - 0.5 * lf


def _log_upper_binom(n: int, k: int) -> tuple[float, int]:
    """log P(K >= k) for k >= n/2 by summing terms relative to the first one."""
    if k > n:
        return -math.inf, 0
    log_t0 = log_binom_half(n, k)
    total, r, j, steps = 1.0, 1.0, k, 0
    chunk = 4096
    while j < n:
        js = np.arange(j, min(j + chunk, n), dtype=float)
        ratios = np.cumprod((n - js) / (js + 1)) * r
        total += float(ratios.sum())
        steps += ratios.size
        r = float(ratios[-1])
        j += ratios.size
        if r < 1e-18 * total:
            break
    return log_t0 + math.log(total), steps


def _first_lattice_k(n: int, t: float, strict: bool) -> int:
    """Smallest k with 2k - n >= t (or > t when strict)."""
    u = (n + t) / 2
    nearest = round(u)
    if abs(u - nearest) <= LATTICE_SNAP * max(1.0, abs(u)):
        return nearest + 1 if strict else nearest
    return math.floor(u) + 1 if strict else math.ceil(u)


def _exact_int_tail(n: int, k: int) -> ExactTail:
    # sum_{j >= k} C(n, j) as a big integer; the division rounds correctly
    c = math.comb(n, k)
    num = 0
    for j in range(k, n + 1):
        num += c
        c = c * (n - j) // (j + 1)
    p = num / (1 << n)
    if p == 0.0:
        raise Underflow(f"tail probability exp({math.log(num) - n * math.log(2):.1f}) underflows")
    return ExactTail(p, Method.BINOMIAL_SUM, EPS * p, math.log(num) - n * math.log(2))


def rademacher_tail(n: int, x: float, strict: bool = False) -> ExactTail:
    """P(S_n >= x sqrt(n)) (or ``>`` when ``strict``) for iid Rademacher summands.

    Lattice thresholds are snapped to the nearest integer within a relative
    1e-9, so x sqrt(n) that should be an integer is treated as one.
    """
    if not 1 <= n <= MAX_RADEMACHER_N:
        raise DomainError(f"n={n} outside [1, {MAX_RADEMACHER_N}]")
    k = _first_lattice_k(n, x * math.sqrt(n), strict)
    if k <= 0:
        return ExactTail(1.0, Method.BINOMIAL_SUM, 0.0, 0.0)
    if k > n:
        raise Underflow(f"event is empty at n={n}, x={x}")
    if n <= EXACT_INT_N:
        return _exact_int_tail(n, k)
    if 2 * k >= n:
        log_p, steps = _log_upper_binom(n, k)
        p = math.exp(log_p)
    else:
        # complement through symmetry: P(K >= k) = 1 - P(K >= n - k + 1)
        log_q, steps = _log_upper_binom(n, n - k + 1)
        p = -math.expm1(log_q)
        log_p = math.log1p(-math.exp(log_q))
    if p == 0.0:
        raise Underflow(f"tail probability exp({log_p:.1f}) underflows")
    rel = 1e-14 + 4 * EPS * steps
    return ExactTail(p, Method.BINOMIAL_SUM, rel * p, log_p)


def rademacher_point_mass(n: int, k: int) -> float:
    return math.exp(log_binom_half(n, k))


# ---------------------------------------------------------------------------
# Gaussian summands via the Student statistic


def student_threshold(n: int, x: float) -> float:
    """y with {S_n/V_n > x} = {T_n > y} for Gaussian summands."""
    if n < 2:
        raise DomainError("need n >= 2")
    if x * x >= n:
        raise DomainError(f"x^2={x * x} must be below n={n}")
    return x * math.sqrt(n - 1) / math.sqrt(n - x * x)


def _log_student_sf(y: float, df: int) -> tuple[float, float]:
    """log P(T > y), y >= 0, by quadrature of (1 + u^2/df)^{-(df+1)/2}.

    The integrand is rescaled by its value at ``y`` so the quadrature works
    in relative terms. Returns (log p, relative error estimate).
    """
    n = df + 1
    log_c = special.gammaln(n / 2) - special.gammaln(df / 2) - 0.5 * math.log(math.pi * df)
    log_fy = -(n / 2) * math.log1p(y * y / df)
    denom = df + y * y

    def g(s):
        return math.exp(-(n / 2) * math.log1p((2 * y * s + s * s) / denom))

    # decay scale of the integrand beyond y
    w = min(1.0, denom / (n * y)) if y > 0 else 1.0
    total, err = 0.0, 0.0
    for a, b in ((0.0, w), (w, 10 * w), (10 * w, math.inf)):
        val, e, info = integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-13, limit=200, full_output=1)[:3]
        total += val
        err += e
    if not (total > 0 and math.isfinite(total)):
        raise QuadratureFailure("Student tail integral failed")
    return log_c + log_fy + math.log(total), err / total


def gaussian_selfnorm_tail(n: int, x: float) -> ExactTail:
    """P(S_n/V_n > x) for iid N(0, sigma^2) summands, any sigma."""
    y = student_threshold(n, x)
    if y >= 0:
        log_p, rel = _log_student_sf(y, n - 1)
        p = math.exp(log_p)
    else:
        log_q, rel = _log_student_sf(-y, n - 1)
        p = -math.expm1(log_q)
        log_p = math.log(p)
    if p == 0.0:
        raise Underflow(f"tail probability exp({log_p:.1f}) underflows")
    return ExactTail(p, Method.T_INTEGRAL, (rel + 1e-14) * p, log_p)


def student_closed_form_log_ratio(n: int, x: float) -> float:
    """Truncated log tail-ratio x^2/(n-x^2) - (n/4 + 1/2) x^4/(n-x^2)^2."""
    d = n - x * x
    return x * x / d - n * x**4 / (4 * d * d) - x**4 / (2 * d * d)


# ---------------------------------------------------------------------------
# Cramer series


@dataclass(frozen=True)
class CramerSeries:
    cumulants: tuple[float, float, float, float]  # gamma_2 .. gamma_5
    a0: float
    a1: float
    a2: float

    def lam(self, t: float) -> float:
        return self.a0 + self.a1 * t + self.a2 * t * t


def cumulants_from_moments(m1, m2, m3, m4, m5) -> tuple[float, float, float, float]:
    g2 = m2 - m1**2
    g3 = m3 - 3 * m2 * m1 + 2 * m1**3
    g4 = m4 - 4 * m3 * m1 - 3 * m2**2 + 12 * m2 * m1**2 - 6 * m1**4
    g5 = (
        m5
        - 5 * m4 * m1
        - 10 * m3 * m2
        + 20 * m3 * m1**2
        + 30 * m2**2 * m1
        - 60 * m2 * m1**3
        + 24 * m1**5
    )
    return g2, g3, g4, g5


def cramer_series(dist: DistributionSpec) -> CramerSeries:
    """First three Cramer-series coefficients from the law's cumulants."""
    raw = [dist.moment(k) for k in range(1, 6)]
    g2, g3, g4, g5 = cumulants_from_moments(*raw)
    a0 = g3 / (6 * g2**1.5)
    a1 = (g4 * g2 - 3 * g3**2) / (24 * g2**3)
    a2 = (g5 * g2**2 - 10 * g4 * g3 * g2 + 15 * g3**3) / (120 * g2**4.5)
    return CramerSeries((g2, g3, g4, g5), a0, a1, a2)


def cramer_ratio(dist: DistributionSpec, n: int, x: float) -> float:
    """exp{(x^3/sqrt n)(a0 + a1 t + a2 t^2)}, t = x/sqrt n, for the standardised iid sum."""
    cs = cramer_series(dist)
    rn = math.sqrt(n)
    return math.exp(x**3 / rn * cs.lam(x / rn))


# ---------------------------------------------------------------------------
# crude Monte Carlo


def block_generators(seed: int, blocks: int) -> list[np.random.Generator]:
    """One counter-based stream per block, derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(blocks)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def split_samples(samples: int, blocks: int) -> list[int]:
    base, extra = divmod(samples, blocks)
    return [base + (i < extra) for i in range(blocks)]


def _row_chunk(n: int, budget: int = 4_000_000) -> int:
    return max(1, budget // max(n, 1))


def sum_and_square(cohort: CohortSpec, rng: np.random.Generator, rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``rows`` replicates of (S_n, V_n^2)."""
    s = np.zeros(rows)
    v2 = np.zeros(rows)
    for spec, count in cohort:
        left = count
        step = max(1, 4_000_000 // rows)
        while left:
            k = min(left, step)
            draw = spec.sample(rng, rows * k).reshape(rows, k)
            s += draw.sum(axis=1)
            v2 += (draw * draw).sum(axis=1)
            left -= k
    return s, v2


def geq_with_slack(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """lhs >= rhs up to a relative rounding slack, so lattice ties count as hits."""
    slack = 1e-12 * (np.abs(lhs) + np.abs(rhs) + 1.0)
    return lhs >= rhs - slack


def crude_mc_tail(cohort: CohortSpec, x: float, samples: int, seed: int, blocks: int = 16) -> ExactTail:
    """Plain Monte Carlo estimate of P(S_n >= x V_n) with its standard error."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    blocks = max(1, min(blocks, samples))
    hits = 0
    for rng, m in zip(block_generators(seed, blocks), split_samples(samples, blocks)):
        chunk = _row_chunk(cohort.n)
        left = m
        while left:
            r = min(left, chunk)
            s, v2 = sum_and_square(cohort, rng, r)
            hits += int(np.count_nonzero(geq_with_slack(s, x * np.sqrt(v2))))
            left -= r
    p = hits / samples
    se = math.sqrt(p * (1 - p) / samples)
    return ExactTail(p, Method.CRUDE_MC, se, math.log(p) if p > 0 else -math.inf, samples)
