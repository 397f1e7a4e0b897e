"""Tail-ratio approximations for P(S_n >= x V_n) / (1 - Phi(x)) with regime verdicts.

Asymptotic range conditions such as ``x = o(n^tau)`` cannot be decided at a
single (n, x). They are replaced by finite-n surrogates: ``x <= theta n^tau``
for little-o statements and ``x <= K n^tau`` for big-O ones, with ``theta``
and ``K`` carried in :class:`AssumptionProfile`. Every verdict carries the
margin ``x / limit`` so that borderline points are visible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

from scipy import special

from .delta import MAIN, DeltaValue, delta_n_grouped
from .distributions import CohortSpec, grouped_moments

SQRT2PI = math.sqrt(2 * math.pi)


class Formula(str, enum.Enum):
    THM31 = "THM31"
    THM32 = "THM32"
    THM34 = "THM34"
    NORMAL_ONLY = "NORMAL_ONLY"


class Regime(str, enum.Enum):
    INSIDE = "INSIDE"
    BOUNDARY = "BOUNDARY"
    OUTSIDE = "OUTSIDE"


class Side(str, enum.Enum):
    UPPER = "UPPER"
    LOWER = "LOWER"


_ORDER = {Regime.INSIDE: 0, Regime.BOUNDARY: 1, Regime.OUTSIDE: 2}


def _worst(*regimes: Regime) -> Regime:
    return max(regimes, key=_ORDER.__getitem__)


# ---------------------------------------------------------------------------
# normal tail


def normal_tail(x: float) -> float:
    """1 - Phi(x), computed without cancellation for large x."""
    return float(special.ndtr(-x))


def log_normal_tail(x: float) -> float:
    return float(special.log_ndtr(-x))


def mills_ratio(x: float) -> float:
    """(1 - Phi(x)) sqrt(2 pi) x exp(x^2/2), finite for every x."""
    return 0.5 * float(special.erfcx(x / math.sqrt(2))) * SQRT2PI * x


# ---------------------------------------------------------------------------
# inputs


@dataclass(frozen=True)
class TailPoint:
    x: float
    n: int
    b: float

    @classmethod
    def of(cls, cohort: CohortSpec, x: float) -> "TailPoint":
        return cls(float(x), cohort.n, cohort.scale(x))


@dataclass(frozen=True)
class AssumptionProfile:
    """Declared hypotheses plus the knobs of the finite-n surrogates.

    ``theta`` scales little-o range limits, ``big_o`` scales big-O ones and
    the O(1) constants in third-moment growth conditions.
    """

    delta: float = 1.0
    M: float | None = None
    c: float | None = None
    gamma: float = 1.0
    epsilon: float | None = None
    rho: float | None = None
    theta: float = 0.5
    big_o: float = 4.0
    eta: float = 1e-3
    upsilon: float = 0.5
    threshold: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.rho is not None and not self.rho < 1 / 3:
            raise ValueError("rho must be < 1/3")
        if not 0.0 <= self.upsilon < 1.0:
            raise ValueError("upsilon must lie in [0, 1)")
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    def violations(self, cohort: CohortSpec) -> tuple[str, ...]:
        """Declared bounds that the cohort fails, checked where computable."""
        out = []
        n = cohort.n
        if self.c is not None and cohort.Bn2 < self.c * n:
            out.append(f"B_n^2={cohort.Bn2:.6g} < c*n={self.c * n:.6g}")
        if self.M is not None:
            top = max(s.moment(3 + self.delta, absolute=True) for s, _ in cohort)
            if top > self.M:
                out.append(f"sup E|X|^(3+delta)={top:.6g} > M={self.M:.6g}")
            if self.epsilon is not None:
                top4 = max(s.moment(4 + self.epsilon, absolute=True) for s, _ in cohort)
                if top4 > self.M:
                    out.append(f"sup E|X|^(4+eps)={top4:.6g} > M={self.M:.6g}")
        s3 = abs(cohort.sum_moment(3))
        if s3 > self.big_o * n**self.gamma:
            out.append(f"|sum EX^3|={s3:.6g} > K*n^gamma={self.big_o * n**self.gamma:.6g}")
        return tuple(out)


# ---------------------------------------------------------------------------
# outputs


@dataclass(frozen=True)
class RangeCheck:
    """One surrogate inequality ``x <= limit``; ``margin = x / limit``."""

    name: str
    x: float
    limit: float

    @property
    def margin(self) -> float:
        return self.x / self.limit if self.limit > 0 else math.inf

    @property
    def ok(self) -> bool:
        return self.x <= self.limit


@dataclass(frozen=True)
class TailApproximation:
    ratio: float
    tail: float
    formula: Formula
    regime: Regime
    exponent: float
    margin: float
    side: Side = Side.UPPER
    violations: tuple[str, ...] = ()
    unquantified: bool = True
    meta: Mapping[str, float] = field(default_factory=dict)

    @property
    def log_ratio(self) -> float:
        return math.log(self.ratio)

    @property
    def hypothesis_violated(self) -> bool:
        return bool(self.violations)


def _o_regime(x: float, n: int, tau: float, theta: float) -> tuple[Regime, float]:
    """Little-o surrogate: INSIDE below theta n^tau, BOUNDARY up to n^tau."""
    lim = n**tau
    if x <= theta * lim:
        reg = Regime.INSIDE
    elif x <= lim:
        reg = Regime.BOUNDARY
    else:
        reg = Regime.OUTSIDE
    return reg, x / (theta * lim)


def _finish(ratio, x, formula, regime, exponent, margin, side, violations, meta):
    tail = min(ratio * normal_tail(x), 1.0)
    return TailApproximation(
        ratio=ratio,
        tail=tail,
        formula=formula,
        regime=regime,
        exponent=exponent,
        margin=margin,
        side=side,
        violations=tuple(violations),
        meta=dict(meta),
    )


# ---------------------------------------------------------------------------
# range exponent


@dataclass(frozen=True)
class TauRange:
    tau: float
    case: str


def tau_range(prof: AssumptionProfile, eta: float | None = None) -> TauRange:
    """Exponent of the validated range x = o(n^tau) for the cubic-term formula."""
    eta = prof.eta if eta is None else eta
    d = prof.delta
    if d < 1.0:
        return TauRange((1 + d) / (6 + 2 * d), "delta<1")
    if prof.gamma < 1.0:
        return TauRange(0.25, "delta=1,gamma<1")
    return TauRange(0.25 - eta, "otherwise")


# ---------------------------------------------------------------------------
# approximations


def ratio_thm31(
    point: TailPoint,
    dv: DeltaValue,
    prof: AssumptionProfile = AssumptionProfile(),
    side: Side = Side.UPPER,
    violations: tuple[str, ...] = (),
) -> TailApproximation:
    """exp(Delta_n(-1/3, -1/12)); ``dv`` must be evaluated at ``point.b``."""
    if not math.isclose(dv.b, point.b, rel_tol=1e-12):
        raise ValueError("DeltaValue was evaluated at a different tilting scale")
    x = point.x
    cap = x**prof.upsilon
    if dv.bound <= prof.threshold * cap:
        hyp = Regime.INSIDE
    elif dv.bound <= cap:
        hyp = Regime.BOUNDARY
    else:
        hyp = Regime.OUTSIDE
    rng_reg, margin = _o_regime(x, point.n, 0.5, prof.theta)
    regime = _worst(hyp, rng_reg)
    viol = list(violations)
    if hyp is Regime.OUTSIDE:
        viol.append(f"|Delta_n| bound {dv.bound:.4g} exceeds x^upsilon={cap:.4g}")
    meta = {
        "delta_value": dv.value,
        "delta_bound": dv.bound,
        "hyp_margin": dv.bound / (prof.threshold * cap),
    }
    return _finish(math.exp(dv.value), x, Formula.THM31, regime, 0.5, margin, side, viol, meta)


def ratio_thm32(
    point: TailPoint,
    cohort: CohortSpec,
    prof: AssumptionProfile = AssumptionProfile(),
    side: Side = Side.UPPER,
) -> TailApproximation:
    """exp(-x^3 sum EX^3 / (3 B_n^3)) on the range x = o(n^tau)."""
    x, n = point.x, point.n
    s3 = cohort.sum_moment(3)
    expo = -(x**3) * s3 / (3 * cohort.Bn**3)
    tr = tau_range(prof)
    regime, margin = _o_regime(x, n, tr.tau, prof.theta)
    meta = {
        "sum_m3": s3,
        "tau": tr.tau,
        # e^{O(1) x^3 / n^{3/2 - gamma}} with O(1) -> K
        "envelope": math.exp(prof.big_o * x**3 / n ** (1.5 - prof.gamma)),
    }
    return _finish(
        math.exp(expo), x, Formula.THM32, regime, tr.tau, margin, side, prof.violations(cohort), meta
    )


def thm34_window(point: TailPoint, prof: AssumptionProfile) -> tuple[RangeCheck, RangeCheck]:
    if prof.epsilon is None or prof.rho is None:
        raise ValueError("fourth-moment formula needs epsilon and rho in the profile")
    n = point.n
    return (
        RangeCheck("x<=theta*n^(1/2-gamma/3)", point.x, prof.theta * n ** (0.5 - prof.gamma / 3)),
        RangeCheck("x<=K*n^rho", point.x, prof.big_o * n**prof.rho),
    )


def ratio_thm34(
    point: TailPoint,
    cohort: CohortSpec,
    prof: AssumptionProfile,
    side: Side = Side.UPPER,
) -> TailApproximation:
    """exp(-x^4 sum EX^4 / (12 B_n^4)) on the fourth-moment window."""
    x = point.x
    checks = thm34_window(point, prof)
    s4 = cohort.sum_moment(4)
    expo = -(x**4) * s4 / (12 * cohort.Bn2**2)
    margin = max(c.margin for c in checks)
    if all(c.ok for c in checks):
        regime = Regime.INSIDE
    elif all(c.x <= c.limit / prof.theta for c in checks[:1]) and checks[1].ok:
        regime = Regime.BOUNDARY
    else:
        regime = Regime.OUTSIDE
    meta = {"sum_m4": s4, "rho": prof.rho}
    return _finish(
        math.exp(expo), x, Formula.THM34, regime, prof.rho, margin, side, prof.violations(cohort), meta
    )


def approximate(
    cohort: CohortSpec,
    x: float,
    formula: Formula,
    prof: AssumptionProfile = AssumptionProfile(),
    side: Side = Side.UPPER,
    gamma: float = 0.0,
) -> TailApproximation:
    """Evaluate one formula; lower tails are the upper tails of -X."""
    if side is Side.LOWER:
        cohort = cohort.negated()
    point = TailPoint.of(cohort, x)
    if formula is Formula.THM31:
        dv = delta_n_grouped(grouped_moments(cohort, x), MAIN.with_gamma(gamma))
        return ratio_thm31(point, dv, prof, side, prof.violations(cohort))
    if formula is Formula.THM32:
        return ratio_thm32(point, cohort, prof, side)
    if formula is Formula.THM34:
        return ratio_thm34(point, cohort, prof, side)
    reg, margin = _o_regime(x, cohort.n, tau_range(prof).tau, prof.theta)
    return _finish(1.0, x, Formula.NORMAL_ONLY, reg, tau_range(prof).tau, margin, side, (), {})


# ---------------------------------------------------------------------------
# Berry-Esseen surrogates and the classical error factor


@dataclass(frozen=True)
class BerryEsseenBound:
    surrogate: float
    envelope: float


def be_bound_third(point: TailPoint, cohort: CohortSpec, prof: AssumptionProfile) -> BerryEsseenBound:
    """Leading term x^2 |sum EX^3| / B_n^3 phi(x) and envelope x^2 n^(gamma-3/2) e^{-x^2/2}."""
    x, n = point.x, point.n
    g = math.exp(-x * x / 2)
    s3 = abs(cohort.sum_moment(3))
    return BerryEsseenBound(
        x * x * s3 / cohort.Bn**3 * g / SQRT2PI,
        x * x / n ** (1.5 - prof.gamma) * g,
    )


def be_bound_fourth(point: TailPoint, cohort: CohortSpec) -> BerryEsseenBound:
    """Leading term x^3 sum EX^4 / B_n^4 phi(x) and envelope x^3/n e^{-x^2/2}."""
    x, n = point.x, point.n
    g = math.exp(-x * x / 2)
    s4 = cohort.sum_moment(4)
    return BerryEsseenBound(x**3 * s4 / cohort.Bn2**2 * g / SQRT2PI, x**3 / n * g)


def jsw_error_factor(point: TailPoint, cohort: CohortSpec, delta: float) -> float:
    """((1 + x) / d_{n,delta})^(2+delta) with d = B_n / L^(1/(2+delta))."""
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    p = 2 + delta
    L = cohort.sum_moment(p, absolute=True)
    d = cohort.Bn / L ** (1 / p)
    return ((1 + point.x) / d) ** p


# ---------------------------------------------------------------------------
# range classification


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class Zone:
    name: str
    fired: bool
    applicable: bool
    inequalities: tuple[Inequality, ...]


@dataclass(frozen=True)
class RegimeReport:
    point: TailPoint
    tau: TauRange
    zones: tuple[Zone, ...]

    def zone(self, name: str) -> Zone:
        return next(z for z in self.zones if z.name == name)

    @property
    def fired(self) -> tuple[str, ...]:
        return tuple(z.name for z in self.zones if z.fired)


def regime_report(
    point: TailPoint,
    cohort: CohortSpec,
    prof: AssumptionProfile,
    c1: float = 1.0,
    c2: float = 1.0,
    c3: float = 1.0,
    rho_fail: float | None = None,
) -> RegimeReport:
    """Classify a point against the widened-range, failure and sub-unity zones.

    Zone ``widened``: |sum EX^3| = O(n^{3/(3+d)}) and x = o(n^{(1+d)/(6+2d)}).
    Zone ``failure``: |sum EX^3| >= c1 n^{3/(3+d)+3 rho} and
    c2 n^{(1+d)/(6+2d) - rho} <= x = o(n^tau); ``rho`` defaults to d/(9+3d),
    which puts the thresholds at c1 n and c2 n^{1/6}.
    Zone ``subunity``: sum EX^3 = O(n^gamma), gamma < 3/4, and
    c3 n^{1/4} <= x within the fourth-moment window.
    """
    x, n = point.x, point.n
    d = prof.delta
    K, theta = prof.big_o, prof.theta
    s3 = abs(cohort.sum_moment(3))
    tr = tau_range(prof)
    wide = (1 + d) / (6 + 2 * d)

    z1 = (
        Inequality("|sum EX^3| <= K n^{3/(3+d)}", s3, K * n ** (3 / (3 + d))),
        Inequality("x <= theta n^{(1+d)/(6+2d)}", x, theta * n**wide),
    )
    rho = d / (9 + 3 * d) if rho_fail is None else rho_fail
    z2 = (
        Inequality("c1 n^{3/(3+d)+3rho} <= |sum EX^3|", c1 * n ** (3 / (3 + d) + 3 * rho), s3),
        Inequality("c2 n^{(1+d)/(6+2d)-rho} <= x", c2 * n ** (wide - rho), x),
        Inequality("x <= theta n^tau", x, theta * n**tr.tau),
    )
    zones = [
        Zone("widened", all(q.holds for q in z1), True, z1),
        Zone("failure", all(q.holds for q in z2), True, z2),
    ]
    if prof.rho is None or prof.gamma >= 0.75:
        zones.append(Zone("subunity", False, False, ()))
    else:
        g = prof.gamma
        z3 = (
            Inequality("|sum EX^3| <= K n^gamma", s3, K * n**g),
            Inequality("c3 n^{1/4} <= x", c3 * n**0.25, x),
            Inequality("x <= theta n^{1/2-gamma/3}", x, theta * n ** (0.5 - g / 3)),
            Inequality("x <= K n^rho", x, K * n**prof.rho),
        )
        zones.append(Zone("subunity", all(q.holds for q in z3), True, z3))
    return RegimeReport(point, tr, tuple(zones))
