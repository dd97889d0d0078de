"""Exception types raised by the geometric pipelines."""


class WillmoreLabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(WillmoreLabError):
    pass


class EmptyIntersection(WillmoreLabError):
    """Two 2-planes intersect trivially."""


class NotTransverse(WillmoreLabError):
    """Two 2-planes intersect in dimension >= 2."""


class PairingVanishes(WillmoreLabError):
    """(sigma, v_inf) vanishes at some grid points; space-form projection undefined there."""

    def __init__(self, msg, points=None):
        super().__init__(msg)
        self.points = points


class DegenerateCongruence(WillmoreLabError):
    """Frame Gram matrix of the central sphere congruence is singular."""


class SphereContained(WillmoreLabError):
    """Surface lies in a proper subsphere; transformations refuse it."""


class NotConformal(WillmoreLabError):
    pass


class NotImmersed(WillmoreLabError):
    pass


class NotCMC(WillmoreLabError):
    """Surface fails the constant-mean-curvature test in the requested space-form."""

    def __init__(self, msg, variation=None):
        super().__init__(msg)
        self.variation = variation


class MinimalAmbiguity(WillmoreLabError):
    """H is zero: the unit normal N is defined only up to sign."""


class NotFlat(WillmoreLabError):
    """Connection curvature exceeds tolerance; parallel frames are path-dependent."""

    def __init__(self, msg, max_curvature=None):
        super().__init__(msg)
        self.max_curvature = max_curvature


class PathDependence(WillmoreLabError):
    def __init__(self, msg, defect=None):
        super().__init__(msg)
        self.defect = defect


class RealityLoss(WillmoreLabError):
    """Imaginary part of a transformed object exceeds tolerance."""


class ImmersionFailure(WillmoreLabError):
    """Transformed bundle fails rank Lambda^(1) = 3."""


class DegeneracyHit(WillmoreLabError):
    """A dressing margin condition fails on the whole grid."""

    def __init__(self, msg, points=None):
        super().__init__(msg)
        self.points = points


class DeterminantImbalance(WillmoreLabError):
    pass


class PreconditionFail(WillmoreLabError):
    def __init__(self, msg, measured=None):
        super().__init__(msg)
        self.measured = measured


class FitResidualTooLarge(WillmoreLabError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class NotClosed(WillmoreLabError):
    """d of a supposedly closed form exceeds tolerance."""

    def __init__(self, msg, defect=None):
        super().__init__(msg)
        self.defect = defect


class ConservationDrift(WillmoreLabError):
    def __init__(self, msg, drift=None):
        super().__init__(msg)
        self.drift = drift


class SingularT(WillmoreLabError):
    """Riccati solution loses invertibility."""


class JStabilityLoss(WillmoreLabError):
    pass


class SignAmbiguityUnresolved(WillmoreLabError):
    """Neither sign of the candidate complex structure passes the stability test."""
