"""Exception types raised by heatbv."""


class HeatBVError(Exception):
    """Base class for all library errors."""


class ConfigError(HeatBVError, ValueError):
    """Invalid user configuration (bad ids, missing pipeline fields, ...)."""


class NumericalCapacityError(HeatBVError):
    """A computation cannot be carried out within the configured numerical budget."""


class NonUniqueGeodesic(HeatBVError, ValueError):
    pass


class DomainError(HeatBVError, ValueError):
    pass


class TruncationNotReached(NumericalCapacityError):
    """The spectral series hit its hard term cap before the cutoff criterion."""


class ResolutionTooCoarse(NumericalCapacityError):
    """Quadrature spacing is too large for the kernel scale sqrt(t)."""


class IllConditionedFit(NumericalCapacityError):
    pass


class ProfileError(NumericalCapacityError):
    """Kernel distance-profile interpolation exceeded its error budget."""


class UnsupportedField(HeatBVError, ValueError):
    pass


class NotDifferentiable(HeatBVError, ValueError):
    pass


class UnsupportedManifold(HeatBVError, ValueError):
    pass
