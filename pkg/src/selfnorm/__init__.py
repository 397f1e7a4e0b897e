"""Moderate-deviation approximations for self-normalized tail probabilities."""

from .delta import DEFAULT_GAMMA_BOUND, DeltaCoefficients, delta_i, delta_n
from .distributions import (
    CenteredUniform,
    CohortSpec,
    DensityTable,
    EmpiricalSample,
    Normal,
    Rademacher,
    TwoPoint,
    moments,
)
from .oracles import crude_mc_tail, gaussian_selfnorm_tail, rademacher_tail
from .tail import AssumptionProfile, Formula, approximate, normal_tail
from .tilted import conjugate_estimate, lemma1_expand, lemma2_identities, tilt_stats

__version__ = "0.1.0"

__all__ = [
    "AssumptionProfile",
    "CenteredUniform",
    "CohortSpec",
    "DEFAULT_GAMMA_BOUND",
    "DeltaCoefficients",
    "DensityTable",
    "EmpiricalSample",
    "Formula",
    "Normal",
    "Rademacher",
    "TwoPoint",
    "approximate",
    "conjugate_estimate",
    "crude_mc_tail",
    "delta_i",
    "delta_n",
    "gaussian_selfnorm_tail",
    "lemma1_expand",
    "lemma2_identities",
    "moments",
    "normal_tail",
    "rademacher_tail",
    "tilt_stats",
]
