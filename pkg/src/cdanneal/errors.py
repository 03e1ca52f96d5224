"""Exception types shared across the package."""


class CdannealError(Exception):
    """Base class for package-specific failures."""


class CapacityError(CdannealError):
    """Requested operation exceeds a hard size limit (e.g. dense conversion)."""


class ConfigError(CdannealError, ValueError):
    """Invalid run configuration (bad schema, impossible engine choice, ...)."""


class FitError(CdannealError, ValueError):
    """Too few usable points to fit after floor exclusion."""


class NumericError(CdannealError):
    """Numerical failure: NaN/Inf, SVD breakdown, exploding norms."""


class ConvergenceError(NumericError):
    """An iterative procedure did not converge within its sweep budget."""


class DegeneracyError(CdannealError):
    """Spectrum too degenerate for the requested operation."""
