"""
imig - Exception Hierarchy
===========================
All errors raised by the numerical pipeline derive from ImigError so the
command layer can report them uniformly and exit with a failure status.
"""


class ImigError(Exception):
    """Base class for every error raised by imig."""


class DomainError(ImigError):
    """A point lies outside the domain of a space or field."""


class InputError(ImigError):
    """Malformed or non-finite input data (LSF grids, coefficient vectors)."""


class ConfigError(ImigError):
    """Invalid configuration: case files, degrees, subdomain sequences."""


class GeometryError(ImigError):
    """Cut-cell construction failed (template mismatch, phase inconsistency)."""


class DegenerateEdgeError(GeometryError):
    """Both endpoints of an edge lie exactly on the iso-level."""


class BasisError(GeometryError):
    """Foreground basis could not be built on a cell (zero or negative area)."""


class AssemblyError(ImigError):
    """Missing material data or facet information during assembly."""


class SingularSystemError(ImigError):
    """Sparse factorization of a reduced system failed."""

    def __init__(self, message, pivot_row=None, pivot_value=None, function=None):
        super().__init__(message)
        self.pivot_row = pivot_row
        self.pivot_value = pivot_value
        self.function = function
