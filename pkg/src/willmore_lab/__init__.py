"""Moebius-invariant surface analysis in the projectivized light cone.

Surfaces are handled as null line bundles over a conformal chart grid,
lifted to R^(n+1,1).  The package computes central-sphere-congruence data,
Willmore and constrained-Willmore residuals, conserved quantities of CMC
surfaces, and the three transformation families (spectral deformation,
Backlund dressing, quaternionic Darboux) with invariant verification.
"""

__version__ = "0.1.0"

from . import minkowski
from .errors import (
    ConservationDrift,
    DegenerateCongruence,
    DegeneracyHit,
    DeterminantImbalance,
    EmptyIntersection,
    ImmersionFailure,
    JStabilityLoss,
    MinimalAmbiguity,
    NotCMC,
    NotClosed,
    NotFlat,
    NotTransverse,
    PairingVanishes,
    PathDependence,
    PreconditionFail,
    RealityLoss,
    SingularT,
)
from .immersion import ChartGrid, SpaceForm, SurfaceLift, catalog, normalized_section

__all__ = [
    "minkowski",
    "ChartGrid",
    "SpaceForm",
    "SurfaceLift",
    "catalog",
    "normalized_section",
    "ConservationDrift",
    "DegenerateCongruence",
    "DegeneracyHit",
    "DeterminantImbalance",
    "EmptyIntersection",
    "ImmersionFailure",
    "JStabilityLoss",
    "MinimalAmbiguity",
    "NotCMC",
    "NotClosed",
    "NotFlat",
    "NotTransverse",
    "PairingVanishes",
    "PathDependence",
    "PreconditionFail",
    "RealityLoss",
    "SingularT",
]
