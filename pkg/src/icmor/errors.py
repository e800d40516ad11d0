"""Exception types shared across the package."""


class IcmorError(Exception):
    """Base class for all package-specific errors."""


class StabilityError(IcmorError):
    """A system matrix violates the Hurwitz (asymptotic stability) requirement."""


class SolverError(IcmorError):
    """A matrix-equation solver could not produce a solution meeting its contract."""


class ReductionError(IcmorError):
    """A reduction method cannot be applied with the requested parameters."""


class DataError(IcmorError):
    """External data (files, manifests) is missing or inconsistent."""
