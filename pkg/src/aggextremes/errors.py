"""Exception hierarchy shared by all modules."""


class AggExtremesError(Exception):
    """Base class for errors raised by this package."""


class ParameterDomainError(AggExtremesError, ValueError):
    """A parameter lies outside its admissible domain."""


class GeometryError(AggExtremesError, ValueError):
    """Degenerate or otherwise invalid region geometry."""


class CoverageError(AggExtremesError, ValueError):
    """A sampled field does not cover the support of a functional."""


class UnsupportedFunctionalError(AggExtremesError, TypeError):
    """The requested operation has no closed form for this functional kind."""


class NumericalQuadratureError(AggExtremesError, ArithmeticError):
    """Quadrature did not reach the requested accuracy."""


class InvalidGammaError(AggExtremesError, ValueError):
    """A variogram matrix is not a valid Husler-Reiss parameter."""


class DependenceDegeneracyError(InvalidGammaError):
    """Two exceeding coordinates are completely dependent (singular covariance)."""


class NonPSDCovarianceError(AggExtremesError, ValueError):
    """Covariance matrix is not positive semidefinite within tolerance."""


class LinearityError(AggExtremesError, ValueError):
    """The Gumbel-case coefficient requires a linear functional."""


class DegenerateDataError(AggExtremesError, ValueError):
    """Data carry no information about the scale (e.g. all values equal)."""


class EmptyExceedanceError(AggExtremesError, ValueError):
    """No (or too few) observations exceed the threshold."""


class InvalidConfigurationError(AggExtremesError, ValueError):
    """Threshold/level combination outside the model's range of validity."""


class IdentifiabilityError(AggExtremesError, ValueError):
    """Parameters cannot be identified from the supplied information."""


class ConditioningError(AggExtremesError, ValueError):
    """The conditioning event of a conditional simulation is not satisfied."""


class SchemaError(AggExtremesError, ValueError):
    """Input file does not follow the expected layout."""
