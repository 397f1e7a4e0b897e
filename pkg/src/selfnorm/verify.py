"""Self-checks behind ``selfnorm verify``; each returns plain JSON-able records."""

from __future__ import annotations

import math
from fractions import Fraction
from math import comb

import numpy as np
from scipy import stats

from .delta import DeltaCoefficients, delta_n, linearity_check
from .distributions import CenteredUniform, CohortSpec, Normal, Rademacher, TwoPoint, moments
from .oracles import gaussian_selfnorm_tail, rademacher_tail
from .tilted import (
    conjugate_estimate,
    lemma1_expand,
    lemma2_identities,
    rademacher_enumerated_expectation,
    tilt_stats,
)

SUITES = ("lemmas", "delta", "oracles", "tilt")

LEMMA1_LAMBDAS = (0.5, 1.0, 2.0)
LEMMA1_THETAS = (0.25, 0.5, 1.0)
LEMMA1_BS = (0.02, 0.05, 0.1, 0.2, 0.4)
TREND_BS = (0.2, 0.1, 0.05, 0.025)


def reference_laws():
    return {
        "normal": Normal(1.0),
        "rademacher": Rademacher(),
        "uniform": CenteredUniform(1.0),
        "two_point": TwoPoint(0.2, 2.0, -0.5),
    }


def _rec(name, ok, **detail):
    return {"name": name, "ok": bool(ok), **detail}


def lemma1_grid() -> list[dict]:
    out = []
    for lname, law in reference_laws().items():
        for lam in LEMMA1_LAMBDAS:
            for th in LEMMA1_THETAS:
                for b in LEMMA1_BS:
                    r = lemma1_expand(law, b, lam, th)
                    out.append(_rec(f"expansion/{lname}/l={lam}/t={th}/b={b}", r.ok,
                                    remainder=r.remainder, bound=r.bound))
    return out


def trend_ratios(law, x: float = 3.0) -> tuple[list[float], list[float]]:
    """|m_n - x^2| and |sigma_n^2 - 4x^2| along b halving, with n = round((x/b)^2 / Var X)."""
    dm, dv = [], []
    for b in TREND_BS:
        n = max(1, round((x / b) ** 2 / law.moment(2)))
        st = tilt_stats(CohortSpec.iid(law, n), x)
        dm.append(abs(st.m_n - x * x))
        dv.append(abs(st.sigma_n2 - 4 * x * x))
    return dm, dv


def suite_lemmas() -> list[dict]:
    out = lemma1_grid()
    for lname, law in reference_laws().items():
        for b in TREND_BS:
            rep = lemma2_identities(law, b)
            for c in rep.checks:
                out.append(_rec(f"tilted-moment/{lname}/{c.name}/b={b}", c.ok,
                                remainder=c.remainder, bound=c.bound))
        dm, dv = trend_ratios(law)
        for label, seq in (("mean", dm), ("variance", dv)):
            ok = all(a >= 1.5 * b for a, b in zip(seq, seq[1:]))
            out.append(_rec(f"trend/{lname}/{label}", ok, values=seq))
    return out


def random_moment_sets(rng: np.random.Generator, count: int):
    laws = list(reference_laws().values())
    for _ in range(count):
        b = float(rng.uniform(0.01, 0.8))
        k = int(rng.integers(1, 4))
        yield [moments(laws[int(rng.integers(len(laws)))], b) for _ in range(k)]


def suite_delta(cases: int = 200, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    fails = 0
    for tms in random_moment_sets(rng, cases):
        c1 = DeltaCoefficients(*rng.normal(size=3))
        c2 = DeltaCoefficients(*rng.normal(size=3))
        fails += not linearity_check(c1, c2, tms)
    out = [_rec("linearity", fails == 0, cases=cases, failures=fails)]
    for lname in ("normal", "rademacher", "uniform"):
        tms = [moments(reference_laws()[lname], 0.3)]
        v1 = delta_n(tms, DeltaCoefficients(-1 / 3, -1 / 12, 2.0)).value
        v2 = delta_n(tms, DeltaCoefficients(5.0, -1 / 12, 2.0)).value
        out.append(_rec(f"symmetric-alpha/{lname}", v1 == v2, a=v1, b=v2))
    return out


def brute_rademacher(n: int, x: float) -> float:
    t = x * math.sqrt(n)
    hits = sum(comb(n, k) for k in range(n + 1) if 2 * k - n >= t - 1e-9)
    return float(Fraction(hits, 2**n))


def suite_oracles() -> list[dict]:
    out = []
    for n, x in ((4, 2.0), (4, 0.9), (25, 1.5), (60, 2.3), (200, 3.1)):
        p = rademacher_tail(n, x).p
        ref = brute_rademacher(n, x)
        out.append(_rec(f"binomial/n={n}/x={x}", abs(p - ref) <= 1e-13 * ref, p=p, ref=ref))
    for n, x in ((2, 1.0), (10, 1.5), (50, 2.5), (1000, 4.0)):
        p = gaussian_selfnorm_tail(n, x).p
        y = x * math.sqrt(n - 1) / math.sqrt(n - x * x)
        ref = float(stats.t.sf(y, n - 1))
        out.append(_rec(f"student/n={n}/x={x}", abs(p - ref) <= 1e-9 * ref, p=p, ref=ref))
    return out


def suite_tilt(seed: int = 7) -> list[dict]:
    out = []
    for n in (8, 12, 16):
        e, p = rademacher_enumerated_expectation(n, 1.7)
        out.append(_rec(f"enumeration/n={n}", abs(e - p) <= 1e-12 * p, expectation=e, exact=p))
    n, x = 100, 3.0
    st = tilt_stats(CohortSpec.iid(Rademacher(), n), x)
    b = x / math.sqrt(n)
    closed = n * (2 * b * math.tanh(b) - b * b)
    out.append(_rec("rademacher-tilt-mean", abs(st.m_n - closed) <= 1e-12 * closed, m_n=st.m_n, closed=closed))
    est = conjugate_estimate(CohortSpec.iid(Rademacher(), n), x, 20_000, seed)
    p = rademacher_tail(n, x).p
    out.append(_rec("sampler", abs(est.p_hat - p) <= 4 * est.se, p_hat=est.p_hat, se=est.se, exact=p))
    return out


_RUNNERS = {"lemmas": suite_lemmas, "delta": suite_delta, "oracles": suite_oracles, "tilt": suite_tilt}


def run_suites(which: str = "all") -> dict:
    names = SUITES if which == "all" else (which,)
    report = {}
    for s in names:
        recs = _RUNNERS[s]()
        report[s] = {"ok": all(r["ok"] for r in recs), "passed": sum(r["ok"] for r in recs),
                     "total": len(recs), "checks": recs}
    return {"ok": all(v["ok"] for v in report.values()), "suites": report}
