"""Exception hierarchy shared across the package."""


class CnneqError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CnneqError, ValueError):
    """Invalid static configuration (bad constellation, non-finite SNR, ...)."""


class UsageError(CnneqError, ValueError):
    """Arguments inconsistent with each other (length or shape mismatch)."""


class TrainingError(CnneqError, RuntimeError):
    """Training diverged or produced a non-finite loss."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InfeasibleError(CnneqError, ValueError):
    """A throughput request cannot be met by the hardware configuration."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap
