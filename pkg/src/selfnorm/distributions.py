"""Laws of the summands and the truncated moments every other module consumes.

Each law is an immutable value object. The truncated moments are the
indicator-restricted powers ``E |X|^k I{|bX| <= 1}`` (and their complements)
that enter the tilt-scale functional; analytic laws use closed forms,
tabulated densities use panel-split adaptive quadrature, empirical samples use
plug-in averages.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from scipy import special

from ._quadrature import integrate_split
from .errors import DegenerateDistribution, InvalidDistribution, SelfNormError

MEAN_TOL = 1e-8
TABLE_MASS_TOL = 1e-8
TABLE_EDGE_WARN = 1e-12


@dataclass(frozen=True)
class TruncatedMomentSet:
    """Moment functionals of one law at tilting scale ``b``.

    ``le``/``gt`` suffixes mean restriction to ``|bX| <= 1`` / ``|bX| > 1``.
    ``n_inside`` is only set for empirical samples (points inside the window).
    """

    b: float
    m2: float
    m3: float
    a3: float
    m4le: float
    a3gt: float
    a5le: float
    m3le: float
    m2le: float
    a3le: float
    n_inside: int | None = None

    def check(self, rtol: float = 1e-9) -> None:
        slack = rtol * max(self.a3, 1e-300)
        if not self.m2 > 0:
            raise DegenerateDistribution("second moment must be positive")
        if not (-slack <= self.a3gt <= self.a3 + slack):
            raise InvalidDistribution(f"a3gt={self.a3gt} outside [0, a3={self.a3}]")
        if abs(self.m3) > self.a3 + slack:
            raise InvalidDistribution("|EX^3| exceeds E|X|^3")
        if self.b * self.m4le > self.a3 + slack or self.b**2 * self.a5le > self.a3 + slack:
            raise InvalidDistribution("truncated higher moments exceed the third-moment cap")


class DistributionSpec:
    """Base class for the law of one centred summand."""

    kind: str = ""
    label: str = ""

    # -- full moments ---------------------------------------------------
    def moment(self, k: float, absolute: bool = False) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        return self.moment(2)

    def truncated_moments(self, b: float) -> TruncatedMomentSet:
        raise NotImplementedError

    def expect(self, g: Callable, breaks: Iterable[float] = ()) -> float:
        """E g(X); ``g`` must accept numpy arrays for discrete laws."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def negated(self) -> "DistributionSpec":
        raise NotImplementedError

    def atoms(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(values, probabilities) for purely atomic laws, else None."""
        return None

    @property
    def is_symmetric(self) -> bool:
        return False

    def _check_centered(self) -> None:
        m2 = self.moment(2)
        if not m2 > 0:
            raise DegenerateDistribution(f"{self.kind}: second moment is {m2}")
        mean = self.moment(1)
        if abs(mean) > MEAN_TOL * math.sqrt(m2):
            raise InvalidDistribution(
                f"{self.kind}: mean {mean:.3e} violates |mean| <= {MEAN_TOL:g} * sigma"
            )


# ---------------------------------------------------------------------------
# atomic laws


class _Atomic(DistributionSpec):
    def _support(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self._support()

    def moment(self, k: float, absolute: bool = False) -> float:
        v, w = self._support()
        base = np.abs(v) if absolute else v
        return float(np.dot(w, base**k))

    def truncated_moments(self, b: float) -> TruncatedMomentSet:
        v, w = self._support()
        av = np.abs(v)
        inside = b * av <= 1.0
        wi = np.where(inside, w, 0.0)
        wo = w - wi
        return TruncatedMomentSet(
            b=b,
            m2=float(np.dot(w, v**2)),
            m3=float(np.dot(w, v**3)),
            a3=float(np.dot(w, av**3)),
            m4le=float(np.dot(wi, v**4)),
            a3gt=float(np.dot(wo, av**3)),
            a5le=float(np.dot(wi, av**5)),
            m3le=float(np.dot(wi, v**3)),
            m2le=float(np.dot(wi, v**2)),
            a3le=float(np.dot(wi, av**3)),
        )

    def expect(self, g: Callable, breaks: Iterable[float] = ()) -> float:
        v, w = self._support()
        return float(np.dot(w, g(v)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        v, w = self._support()
        return v[rng.choice(len(v), size=size, p=w)]


@dataclass(frozen=True)
class Rademacher(_Atomic):
    label: str = "rademacher"
    kind = "rademacher"

    def _support(self):
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])

    def sample(self, rng, size):
        return 2.0 * rng.integers(0, 2, size=size) - 1.0

    def negated(self):
        return self

    @property
    def is_symmetric(self):
        return True


@dataclass(frozen=True)
class TwoPoint(_Atomic):
    """Mass ``p`` at ``a`` and ``1 - p`` at ``b``; must have mean zero."""

    p: float
    a: float
    b: float
    label: str = "twopoint"
    kind = "twopoint"

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidDistribution(f"twopoint: p={self.p} not in (0, 1)")
        self._check_centered()

    def _support(self):
        return np.array([self.a, self.b], dtype=float), np.array([self.p, 1.0 - self.p])

    def negated(self):
        return TwoPoint(self.p, -self.a, -self.b, label=f"-{self.label}")

    @property
    def is_symmetric(self):
        return self.p == 0.5 and self.a == -self.b


@dataclass(frozen=True, eq=False)
class EmpiricalSample(_Atomic):
    """Plug-in law of a finite sample (no bias correction).

    ``recenter=True`` subtracts the sample mean before the centring check,
    which is how raw draws from a mean-zero law are admitted.
    """

    values: np.ndarray
    label: str = "empirical"
    recenter: bool = False
    kind = "empirical"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise InvalidDistribution("empirical: need a non-empty finite sample")
        if self.recenter:
            v = v - v.mean()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        self._check_centered()

    def _support(self):
        n = self.values.size
        return self.values, np.full(n, 1.0 / n)

    def moment(self, k, absolute=False):
        base = np.abs(self.values) if absolute else self.values
        return float(np.mean(base**k))

    def truncated_moments(self, b):
        tm = super().truncated_moments(b)
        n_inside = int(np.count_nonzero(b * np.abs(self.values) <= 1.0))
        return TruncatedMomentSet(**{**tm.__dict__, "n_inside": n_inside})

    def sample(self, rng, size):
        return self.values[rng.integers(0, self.values.size, size=size)]

    def negated(self):
        return EmpiricalSample(-self.values, label=f"-{self.label}")

    @classmethod
    def from_csv(cls, path, **kw) -> "EmpiricalSample":
        """One real per line, UTF-8."""
        with open(path, encoding="utf-8") as fh:
            vals = [float(line) for line in fh if line.strip()]
        return cls(np.array(vals), **kw)


# ---------------------------------------------------------------------------
# continuous laws


@dataclass(frozen=True)
class Normal(DistributionSpec):
    sigma: float = 1.0
    label: str = "normal"
    kind = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateDistribution(f"normal: sigma={self.sigma} must be positive")

    def _abs_std(self, p: float) -> float:
        # E|Z|^p for Z ~ N(0, 1)
        return 2.0 ** (p / 2) * math.exp(special.gammaln((p + 1) / 2)) / math.sqrt(math.pi)

    def moment(self, k, absolute=False):
        if not absolute:
            if float(k).is_integer() and int(k) % 2 == 1:
                return 0.0
        return self.sigma**k * self._abs_std(k)

    def _abs_trunc(self, p: float, cut: float, inside: bool) -> float:
        frac = special.gammainc if inside else special.gammaincc
        return self.sigma**p * self._abs_std(p) * float(frac((p + 1) / 2, cut * cut / 2))

    def truncated_moments(self, b):
        cut = 1.0 / (b * self.sigma)  # standardised truncation point
        return TruncatedMomentSet(
            b=b,
            m2=self.sigma**2,
            m3=0.0,
            a3=self.moment(3, absolute=True),
            m4le=self._abs_trunc(4, cut, True),
            a3gt=self._abs_trunc(3, cut, False),
            a5le=self._abs_trunc(5, cut, True),
            m3le=0.0,
            m2le=self._abs_trunc(2, cut, True),
            a3le=self._abs_trunc(3, cut, True),
        )

    def pdf(self, s):
        z = np.asarray(s) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi))

    def expect(self, g, breaks=()):
        val, _ = integrate_split(lambda s: g(s) * self.pdf(s), -math.inf, math.inf, [0.0, *breaks])
        return val

    def sample(self, rng, size):
        return rng.normal(0.0, self.sigma, size=size)

    def negated(self):
        return self

    @property
    def is_symmetric(self):
        return True


@dataclass(frozen=True)
class CenteredUniform(DistributionSpec):
    halfwidth: float = 1.0
    label: str = "uniform"
    kind = "uniform"

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise DegenerateDistribution("uniform: halfwidth must be positive")

    def moment(self, k, absolute=False):
        h = self.halfwidth
        if not absolute and float(k).is_integer() and int(k) % 2 == 1:
            return 0.0
        return h**k / (k + 1)

    def _abs_le(self, p, t):
        return t ** (p + 1) / ((p + 1) * self.halfwidth)

    def truncated_moments(self, b):
        h = self.halfwidth
        t = min(h, 1.0 / b)
        return TruncatedMomentSet(
            b=b,
            m2=h * h / 3,
            m3=0.0,
            a3=h**3 / 4,
            m4le=self._abs_le(4, t),
            a3gt=(h**4 - t**4) / (4 * h),
            a5le=self._abs_le(5, t),
            m3le=0.0,
            m2le=self._abs_le(2, t),
            a3le=self._abs_le(3, t),
        )

    def expect(self, g, breaks=()):
        h = self.halfwidth
        val, _ = integrate_split(lambda s: g(s) / (2 * h), -h, h, [0.0, *breaks])
        return val

    def sample(self, rng, size):
        return rng.uniform(-self.halfwidth, self.halfwidth, size=size)

    def negated(self):
        return self

    @property
    def is_symmetric(self):
        return True


@dataclass(frozen=True, eq=False)
class DensityTable(DistributionSpec):
    """Piecewise-linear density through tabulated (x, f(x)) nodes; zero outside."""

    xs: np.ndarray
    fs: np.ndarray
    label: str = "table"
    kind = "table"

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float).ravel()
        fs = np.asarray(self.fs, dtype=float).ravel()
        if xs.size < 2 or xs.size != fs.size:
            raise InvalidDistribution("table: need >= 2 matching (x, f) nodes")
        if np.any(np.diff(xs) <= 0) or np.any(fs < 0) or not np.all(np.isfinite(fs)):
            raise InvalidDistribution("table: x must increase strictly and f must be >= 0")
        xs.setflags(write=False)
        fs.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "fs", fs)
        mass = float(np.trapezoid(fs, xs))
        if abs(mass - 1.0) > TABLE_MASS_TOL:
            raise InvalidDistribution(f"table: density integrates to {mass!r}, not 1")
        if max(fs[0], fs[-1]) > TABLE_EDGE_WARN:
            warnings.warn("table: density is non-negligible at the grid edge; tails are truncated")
        self._check_centered()

    def _integrate(self, g, breaks=()):
        f = lambda s: g(s) * float(np.interp(s, self.xs, self.fs))
        val, _ = integrate_split(f, float(self.xs[0]), float(self.xs[-1]), [*self.xs[1:-1], *breaks])
        return val

    def moment(self, k, absolute=False):
        if absolute:
            return self._integrate(lambda s: abs(s) ** k, [0.0])
        return self._integrate(lambda s: s**k)

    def truncated_moments(self, b):
        cut = 1.0 / b
        br = (-cut, cut, 0.0)

        def le(g):
            return self._integrate(lambda s: g(s) if abs(b * s) <= 1.0 else 0.0, br)

        def gt(g):
            return self._integrate(lambda s: g(s) if abs(b * s) > 1.0 else 0.0, br)

        return TruncatedMomentSet(
            b=b,
            m2=self._integrate(lambda s: s * s, [0.0]),
            m3=self._integrate(lambda s: s**3, [0.0]),
            a3=self._integrate(lambda s: abs(s) ** 3, [0.0]),
            m4le=le(lambda s: s**4),
            a3gt=gt(lambda s: abs(s) ** 3),
            a5le=le(lambda s: abs(s) ** 5),
            m3le=le(lambda s: s**3),
            m2le=le(lambda s: s * s),
            a3le=le(lambda s: abs(s) ** 3),
        )

    def expect(self, g, breaks=()):
        return self._integrate(g, breaks)

    def sample(self, rng, size):
        lo, hi, top = self.xs[0], self.xs[-1], self.fs.max()
        out = np.empty(0)
        while out.size < size:
            m = 2 * (size - out.size) + 16
            s = rng.uniform(lo, hi, m)
            keep = rng.uniform(0, top, m) <= np.interp(s, self.xs, self.fs)
            out = np.concatenate([out, s[keep]])
        return out[:size]

    def negated(self):
        return DensityTable(-self.xs[::-1], self.fs[::-1], label=f"-{self.label}")


# ---------------------------------------------------------------------------
# cohorts


@dataclass(frozen=True)
class CohortSpec:
    """The n independent summands, stored as (law, multiplicity) runs.

    An iid cohort of size 10**8 costs one group, not 10**8 objects.
    """

    groups: tuple[tuple[DistributionSpec, int], ...]
    n: int = field(init=False)
    Bn2: float = field(init=False)

    def __post_init__(self):
        if not self.groups:
            raise InvalidDistribution("cohort must have at least one member")
        for spec, count in self.groups:
            if count < 1:
                raise InvalidDistribution("group multiplicities must be positive")
        object.__setattr__(self, "n", sum(c for _, c in self.groups))
        object.__setattr__(self, "Bn2", math.fsum(c * s.moment(2) for s, c in self.groups))

    @classmethod
    def iid(cls, spec: DistributionSpec, n: int) -> "CohortSpec":
        return cls(((spec, int(n)),))

    @classmethod
    def of(cls, members: Sequence[DistributionSpec]) -> "CohortSpec":
        groups: list[list] = []
        for m in members:
            if groups and groups[-1][0] is m:
                groups[-1][1] += 1
            else:
                groups.append([m, 1])
        return cls(tuple((s, c) for s, c in groups))

    @property
    def Bn(self) -> float:
        return math.sqrt(self.Bn2)

    @property
    def members(self) -> list[DistributionSpec]:
        return [s for s, c in self.groups for _ in range(c)]

    def __iter__(self) -> Iterator[tuple[DistributionSpec, int]]:
        return iter(self.groups)

    def scale(self, x: float) -> float:
        """Tilting scale b = x / B_n."""
        return x / self.Bn

    def sum_moment(self, k: float, absolute: bool = False) -> float:
        return math.fsum(c * s.moment(k, absolute) for s, c in self.groups)

    def negated(self) -> "CohortSpec":
        return CohortSpec(tuple((s.negated(), c) for s, c in self.groups))

    @property
    def is_symmetric(self) -> bool:
        return all(s.is_symmetric for s, _ in self.groups)


def moments(spec: DistributionSpec, b: float) -> TruncatedMomentSet:
    """Truncated moment set of ``spec`` at tilting scale ``b``."""
    if not (b > 0 and math.isfinite(b)):
        raise ValueError(f"tilting scale must be positive and finite, got {b}")
    tm = spec.truncated_moments(float(b))
    tm.check()
    return tm


def grouped_moments(cohort: CohortSpec, x: float) -> list[tuple[TruncatedMomentSet, int]]:
    """One moment set per group together with its multiplicity."""
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    b = cohort.scale(x)
    out, first = [], 0
    for spec, count in cohort.groups:
        try:
            out.append((moments(spec, b), count))
        except SelfNormError as exc:
            raise type(exc)(f"member {first} ({spec.label}): {exc}") from exc
        first += count
    return out


def cohort_moments(cohort: CohortSpec, x: float) -> list[TruncatedMomentSet]:
    """Per-member moment sets, all at the shared b = x / B_n."""
    return [tm for tm, count in grouped_moments(cohort, x) for _ in range(count)]
