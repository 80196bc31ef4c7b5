"""
Exception hierarchy for the link-analysis toolkit
"""

from typing import Optional


class RisageError(Exception):
    """Base class for every error raised by the package"""


class InvalidArgumentError(RisageError, ValueError):
    """An argument lies outside the documented domain"""


class ConfigError(RisageError):
    """A scenario document or runtime setting could not be used"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")


class MatchingError(RisageError, ArithmeticError):
    """Moment matching has no real solution for the supplied moments"""


class SingularInputError(RisageError, ArithmeticError):
    """A formula is singular for the supplied correlation (rho_bar = 0)"""


class ValidationFailure(RisageError):
    """At least one validation invariant failed"""

    def __init__(self, failed: list):
        self.failed = list(failed)
        super().__init__(f"{len(self.failed)} invariant(s) failed: {', '.join(self.failed)}")
