from __future__ import annotations


class RbmScopeError(Exception):
    pass


class ValidationError(RbmScopeError, ValueError):
    pass


class DimensionError(ValidationError):
    def __init__(self, what: str, value: int, limit: int):
        super().__init__(f"{what} = {value} exceeds the supported maximum of {limit}.")
        self.value = value
        self.limit = limit


class SupportError(RbmScopeError):
    pass


class PreconditionError(RbmScopeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class VerificationError(RbmScopeError):
    def __init__(self, message: str, failures: tuple[str, ...] = ()):
        super().__init__(message)
        self.failures = failures
