"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
numeric failures exit 2, solver non-convergence exits 3.
"""


class ConfigError(ValueError):
    """Invalid configuration: unknown keys, bad ranges, missing fields."""


class NumericError(RuntimeError):
    """A numeric computation produced a non-finite or unusable result."""


class DivergenceError(NumericError):
    """An integral or iteration failed to converge within its budget."""


class StepSizeError(NumericError):
    """A marching scheme's step is too coarse for the kernel; increase N."""


class ConvergenceError(RuntimeError):
    """An optimizer or solver stopped before meeting its convergence test."""
