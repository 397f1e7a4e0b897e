"""Exact tail ratios along x = c n^tau for the two oracle-backed laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .distributions import DistributionSpec, Normal, Rademacher
from .errors import DomainError
from .oracles import gaussian_selfnorm_tail, rademacher_tail
from .tail import log_normal_tail

#: log ratio ~ -x^4 / (kappa n)
KAPPA = {"rademacher": 12.0, "normal": 4.0}


@dataclass(frozen=True)
class BreakdownRow:
    law: str
    c: float
    tau: float
    n: int
    x: float
    exact_p: float
    log_ratio_exact: float
    log_ratio_predicted: float

    @property
    def ratio(self) -> float:
        return math.exp(self.log_ratio_exact)


def law_name(dist: DistributionSpec) -> str:
    if isinstance(dist, Rademacher):
        return "rademacher"
    if isinstance(dist, Normal):
        return "normal"
    raise DomainError("breakdown sweeps need a Rademacher or Normal law")


def breakdown_point(dist: DistributionSpec, c: float, n: int, tau: float = 0.25) -> BreakdownRow:
    name = law_name(dist)
    x = c * n**tau
    pred = -(x**4) / (KAPPA[name] * n) + 0.0
    if x == 0.0:
        # At x = 0 both tails equal 1/2 by symmetry; on the lattice this is
        # the average of the strict and non-strict events.
        return BreakdownRow(name, c, tau, n, 0.0, 0.5, 0.0, pred)
    if name == "rademacher":
        t = rademacher_tail(n, x)
    else:
        t = gaussian_selfnorm_tail(n, x)
    return BreakdownRow(name, c, tau, n, x, t.p, t.log_p - log_normal_tail(x), pred)


def sweep_breakdown(dist: DistributionSpec, cs, ns, tau: float = 0.25) -> list[BreakdownRow]:
    return [breakdown_point(dist, c, n, tau) for c in cs for n in ns]
