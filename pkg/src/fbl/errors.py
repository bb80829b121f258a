"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration/domain problems
exit with 2, numerical convergence failures with 3.
"""


class DomainError(ValueError):
    """An argument is outside the documented domain of an operation."""


class ConfigurationError(ValueError):
    """A request is structurally valid but cannot be satisfied as configured."""


class ConvergenceError(RuntimeError):
    """An iterative numerical procedure failed to reach its tolerance."""
