"""Panel-split adaptive quadrature on top of QUADPACK."""

from __future__ import annotations

import math
from typing import Callable, Iterable

from scipy import integrate

from .errors import QuadratureFailure

ABS_TOL = 1e-10


def integrate_split(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    breaks: Iterable[float] = (),
    tol: float = ABS_TOL,
    limit: int = 200,
) -> tuple[float, float]:
    """Integrate ``f`` over [lo, hi], never letting a panel straddle a break.

    Infinite endpoints are allowed. Returns (value, estimated abs error) and
    raises QuadratureFailure when the summed error estimate exceeds ``tol``.
    """
    if hi <= lo:
        return 0.0, 0.0
    cuts = sorted({c for c in breaks if lo < c < hi})
    nodes = [lo, *cuts, hi]
    npanel = len(nodes) - 1
    parts, err = [], 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        val, e, info = integrate.quad(
            f, a, b, epsabs=tol / (4 * npanel), epsrel=1e-13, limit=limit, full_output=1
        )[:3]
        if not math.isfinite(val):
            raise QuadratureFailure(f"non-finite integral on [{a}, {b}]")
        parts.append(val)
        err += e
    if err > tol:
        raise QuadratureFailure(f"error estimate {err:.3e} exceeds tolerance {tol:.1e}")
    return math.fsum(parts), err
