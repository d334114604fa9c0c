"""Exception hierarchy shared across the package.

Everything raised on purpose derives from HyposplitError so callers can
catch package failures without swallowing programming errors.
"""


class HyposplitError(Exception):
    """Base class for all package-specific failures."""


class DomainError(HyposplitError, ValueError):
    """A parameter or argument is outside its admissible domain."""


class NumericalError(HyposplitError):
    """A numerically computed quantity violated a structural requirement.

    Raised e.g. when a covariance loses positive definiteness beyond
    repairable rounding noise, or a log-determinant has the wrong sign.
    """


class SimulationError(HyposplitError):
    """A sample path left the numerically trustworthy region."""


class EstimationError(HyposplitError):
    """An optimisation run could not produce a usable estimate."""


class IngestionError(HyposplitError):
    """External data could not be turned into a usable series."""


class StudyError(HyposplitError):
    """A batch study failed too often to report aggregate results."""
