"""Exception hierarchy shared by every layer (models, solvers, learner, harness)."""
from __future__ import annotations
from typing import Optional


class MdpSafetyError(Exception):
    """Base class for all package errors."""


class ParseError(MdpSafetyError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f'line {line}: {message}' if line is not None else message)


class ValidationError(MdpSafetyError):
    """A structural invariant does not hold (non-stochastic row, bad partition, unknown label)."""


class DomainMismatchError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CoverageError(MdpSafetyError):
    def __init__(self, state: str, action: str):
        self.state = state
        self.action = action
        super().__init__(f'importance ratio undefined at ({state}, {action}): target acts there but the baseline never does')


class TerminationError(MdpSafetyError):
    def __init__(self, message: str, trapped: tuple[str, ...] = ()):
        self.trapped = trapped
        super().__init__(message)


class SingularSystemError(TerminationError):
    pass


class CertificationError(MdpSafetyError):
    pass


class GenerationError(MdpSafetyError):
    pass
