"""Exception hierarchy and process exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_IO = 4


class QlyapError(Exception):
    """Base class for all package errors."""


class ValidationError(QlyapError):
    """Structural problem in inputs: dimension mismatch, non-Hermitian
    operator, unnormalized state, bad parameter value."""


class ConfigError(QlyapError):
    """Config file or override cannot be parsed or violates a constraint."""


class PhysicalityError(QlyapError):
    """A state left the physical cone beyond tolerance (trace, Hermiticity,
    or positivity)."""


class IntegrationError(PhysicalityError):
    """Physicality failure during integration; carries the time of failure."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t={t:.6g})")
        self.t = t
