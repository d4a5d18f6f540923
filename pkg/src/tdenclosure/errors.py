"""Exception hierarchy shared by all modules.

The CLI maps each class to its own exit code, so scripts can tell a bad
scenario file apart from a run that simply did not produce enough signal.
"""


class EnclosureError(Exception):
    """Base class for all package errors."""


class ScenarioError(EnclosureError, ValueError):
    """Invalid configuration (geometry overlap, CFL violation, bad schema...)."""


class SizingError(ScenarioError):
    """Computational box too small for the clearance rule.

    ``minimal_box`` holds the smallest compliant ``(lo, hi)`` pair.
    """

    def __init__(self, message, minimal_box=None):
        super().__init__(message)
        self.minimal_box = minimal_box


class DomainError(EnclosureError, ValueError):
    """Argument outside the domain where a function is defined."""


class RegionError(DomainError):
    """Evaluation point on the wrong side of the source ball."""


class UnsupportedGeometryError(EnclosureError, ValueError):
    pass


class InsufficientDataError(EnclosureError, ValueError):
    """Too few indicator samples above the noise floor."""


class SimulationError(EnclosureError, RuntimeError):
    """The time stepper produced non-finite values."""


class RecordMismatchError(EnclosureError, ValueError):
    """Records built from different scenarios were combined."""
