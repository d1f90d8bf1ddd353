"""
Exception types shared across the CHM package.

Everything derives from ValueError so callers that only know about
bad-argument errors can still catch them.
"""

from typing import Optional


class ChmError(ValueError):
    """Base class for all library errors."""


class DomainError(ChmError):
    """A value lies outside the domain of the function or family."""


class AssumptionError(ChmError):
    """An instance violates a standing assumption (mean on an endpoint, tied extremes)."""


class QueryError(ChmError):
    """The query set is malformed or not supported by the caller."""


class OracleError(ChmError):
    """Preconditions of the brute-force game solver are not met."""


class ConfigError(ChmError):
    """Invalid experiment configuration, optionally pinned to a file line."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(self.__str__())

    def __str__(self) -> str:
        if self.path and self.line:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path:
            return f"{self.path}: {self.message}"
        return self.message
