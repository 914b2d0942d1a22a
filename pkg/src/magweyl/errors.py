"""Exception hierarchy shared by all modules."""


class MagweylError(Exception):
    """Base class for library errors."""


class InputError(MagweylError, ValueError):
    """Mismatched dimensions, grids or parameters."""


class DomainError(MagweylError, ValueError):
    """Evaluation point outside the admissible domain."""


class ConfigurationError(MagweylError, ValueError):
    """Invalid numerical configuration (grid parity, budgets)."""


class ResolutionError(ConfigurationError):
    """Grid too coarse for the requested computation."""

    def __init__(self, message, minimal_points=None):
        super().__init__(message)
        self.minimal_points = minimal_points


class WindowError(ConfigurationError):
    """Phase-space window misses too much integrand mass."""

    def __init__(self, message, required_half_width=None):
        super().__init__(message)
        self.required_half_width = required_half_width


class UnsupportedFamilyError(MagweylError, TypeError):
    """Operation not available for this symbol family."""


class NumericalError(MagweylError, ArithmeticError):
    """Iteration failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConsistencyError(NumericalError):
    """Two independent evaluation routes disagree."""


class ValidationError(MagweylError, ValueError):
    """Experiment configuration rejected before computation."""
