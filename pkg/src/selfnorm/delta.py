"""The per-summand functional delta_i(alpha, beta; gamma) and its sum Delta_n.

    delta_i = alpha b^3 E X^3 + beta b^4 E X^4 I{|bX|<=1}
              + gamma (b^3 E|X|^3 I{|bX|>1} + b^5 E|X|^5 I{|bX|<=1})

Everything here is an exact linear functional of a TruncatedMomentSet; the
``bound`` carried with each value is the majorant (|a| + |b| + 2|g|) b^3 E|X|^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import TruncatedMomentSet
from .errors import MixedScale

#: Default magnitude for slots the theory only pins as O(1). The tilt-expansion
#: constant max(O1, O2) at lambda=1, theta=1/2 is 12.835..., rounded up.
DEFAULT_GAMMA_BOUND = 13.0


@dataclass(frozen=True)
class DeltaCoefficients:
    alpha: float
    beta: float
    gamma: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.alpha, self.beta, self.gamma)):
            raise ValueError("coefficients must be finite")

    def __add__(self, other: "DeltaCoefficients") -> "DeltaCoefficients":
        return DeltaCoefficients(
            self.alpha + other.alpha, self.beta + other.beta, self.gamma + other.gamma
        )

    def __neg__(self) -> "DeltaCoefficients":
        return DeltaCoefficients(-self.alpha, -self.beta, -self.gamma)

    def scaled(self, k: float) -> "DeltaCoefficients":
        return DeltaCoefficients(k * self.alpha, k * self.beta, k * self.gamma)

    def with_gamma(self, gamma: float) -> "DeltaCoefficients":
        return DeltaCoefficients(self.alpha, self.beta, gamma)

    @property
    def bound_factor(self) -> float:
        return abs(self.alpha) + abs(self.beta) + 2 * abs(self.gamma)


MAIN = DeltaCoefficients(-1 / 3, -1 / 12)
XI1 = DeltaCoefficients(-1.0, -2 / 3)
XI2 = DeltaCoefficients(0.0, -3.0)
LEM5 = DeltaCoefficients(27 / 48, 0.0)
LEM6A = DeltaCoefficients(1 / 18, -5 / 648)
LEM6B = DeltaCoefficients(-11 / 6, 25 / 24)


@dataclass(frozen=True)
class DeltaValue:
    value: float
    bound: float
    coeffs: DeltaCoefficients
    b: float

    def interval(self) -> tuple[float, float]:
        return self.value - self.bound, self.value + self.bound


def _terms(tm: TruncatedMomentSet) -> tuple[float, float, float]:
    b = tm.b
    b3 = b**3
    return b3 * tm.m3, b**4 * tm.m4le, b3 * tm.a3gt + b**5 * tm.a5le


def delta_i(tm: TruncatedMomentSet, c: DeltaCoefficients) -> DeltaValue:
    t3, t4, tg = _terms(tm)
    value = math.fsum((c.alpha * t3, c.beta * t4, c.gamma * tg))
    bound = c.bound_factor * tm.b**3 * tm.a3
    return DeltaValue(value, bound, c, tm.b)


def _shared_scale(tms: Sequence[TruncatedMomentSet]) -> float:
    if not tms:
        raise ValueError("need at least one moment set")
    b = tms[0].b
    if any(t.b != b for t in tms):
        raise MixedScale("moment sets carry different tilting scales")
    return b


def delta_n(
    tms: Sequence[TruncatedMomentSet],
    c: DeltaCoefficients,
    counts: Sequence[int] | None = None,
) -> DeltaValue:
    """Sum of per-member values and bounds, in member order with fsum.

    ``counts`` lets an iid group of any size be passed as a single set.
    """
    b = _shared_scale(tms)
    counts = [1] * len(tms) if counts is None else list(counts)
    if len(counts) != len(tms):
        raise ValueError("counts must match moment sets")
    parts = [(delta_i(tm, c), k) for tm, k in zip(tms, counts)]
    return DeltaValue(
        math.fsum(d.value * k for d, k in parts),
        math.fsum(d.bound * k for d, k in parts),
        c,
        b,
    )


def delta_n_grouped(grouped, c: DeltaCoefficients) -> DeltaValue:
    """``delta_n`` over the (moment set, multiplicity) pairs of a cohort."""
    tms = [tm for tm, _ in grouped]
    return delta_n(tms, c, [k for _, k in grouped])


def delta_range(grouped, c: DeltaCoefficients, gamma_bound: float = DEFAULT_GAMMA_BOUND) -> tuple[float, float]:
    """Interval of Delta_n when the gamma slot ranges over [-gamma_bound, gamma_bound]."""
    lo = delta_n_grouped(grouped, c.with_gamma(-gamma_bound)).value
    hi = delta_n_grouped(grouped, c.with_gamma(gamma_bound)).value
    return lo, hi


def _close(a: float, b: float, scale: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(scale, 1e-300)


def linearity_check(
    c1: DeltaCoefficients,
    c2: DeltaCoefficients,
    tms: Sequence[TruncatedMomentSet],
    rtol: float = 1e-12,
    kappas: Sequence[float] = (-1.0, 0.5, 7.0),
) -> bool:
    """Additivity and homogeneity of Delta_n in its coefficients.

    Relative tolerance is taken against the magnitude of the individual terms,
    since cancellation makes the raw sum a poor scale.
    """
    _shared_scale(tms)
    d1 = delta_n(tms, c1).value
    d2 = delta_n(tms, c2).value
    d12 = delta_n(tms, c1 + c2).value
    mag = sum(abs(v) for v in np.array([_terms(t) for t in tms]).ravel())
    coeff_mag = max(c1.bound_factor, c2.bound_factor, 1.0)
    scale = mag * coeff_mag
    if not _close(d1 + d2, d12, scale, rtol):
        return False
    for k in kappas:
        if not _close(k * d1, delta_n(tms, c1.scaled(k)).value, abs(k) * scale, rtol):
            return False
    return True
