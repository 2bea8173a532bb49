"""
Exception hierarchy for protocol and configuration failures.
"""


class QKDError(Exception):
    """Base class for all errors raised by the simulator."""


class ConfigError(QKDError, ValueError):
    """A parameter violates its documented range."""


class LengthMismatchError(QKDError, ValueError):
    """Two sequences that must be aligned have different lengths."""


class InsufficientSampleError(QKDError):
    """A sifted subset is smaller than the test sample drawn from it."""

    def __init__(self, subset: str, available: int, required: int):
        self.subset = subset
        self.available = available
        self.required = required
        super().__init__(
            f"{subset} subset has {available} sifted positions, "
            f"fewer than the test sample size {required}"
        )


class ReconciliationError(QKDError):
    """The final parity verification found residual mismatches."""
