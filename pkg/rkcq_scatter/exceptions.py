"""
rkcq-scatter: Custom Exceptions
-------------------------------

This module defines the hierarchy of exceptions raised throughout the
rkcq_scatter package. Catching :class:`RKCQError` catches every failure that
originates in the library; the subclasses carry enough context (a frequency,
a panel pair, a condition estimate) to locate the problem without rerunning.
"""
from typing import Optional, Tuple


class RKCQError(Exception):
    """
    Base class for all custom exceptions raised by rkcq_scatter.
    """
    def __init__(self, message: str, original_exception: Optional[Exception] = None):
        super().__init__(message)
        self.original_exception = original_exception
        self.message = message

    def __str__(self) -> str:
        if self.original_exception:
            return f"{self.message}: {self.original_exception}"
        return self.message


class NotImplementedFeatureError(RKCQError):
    """
    Raised when a requested variant exists in principle but is not provided,
    e.g. a Radau IIA method with an unsupported number of stages.
    """
    def __init__(self, feature_name: str, message: Optional[str] = None):
        self.feature_name = feature_name
        super().__init__(message or f"Feature '{feature_name}' is not implemented")


class TableauError(RKCQError):
    """
    Raised for unknown tableau ids and for tableaux that cannot drive
    convolution quadrature (e.g. not stiffly accurate where that is required).
    """
    pass


class DomainError(RKCQError, ValueError):
    """
    Raised when an argument lies outside the domain of a function:
    a contour point with |zeta| >= 1, a Bessel argument with Re z <= 0,
    or a frequency outside the right half-plane.
    """
    pass


class SingularityError(RKCQError):
    """
    Raised when a formula is evaluated exactly at a singular point:
    I - zA singular, the fundamental solution at x = 0, the double-layer
    kernel at x = y.
    """
    pass


class DiagonalizationError(RKCQError):
    """
    Raised when the eigenvector matrix of Delta(zeta) is too ill-conditioned
    to be trusted.
    """
    def __init__(self, zeta: complex, condition: float, limit: float):
        self.zeta = zeta
        self.condition = condition
        self.limit = limit
        super().__init__(
            f"Eigenvector condition {condition:.3e} of Delta(zeta) exceeds {limit:.1e} "
            f"at zeta={zeta:.6g}"
        )


class ContractError(RKCQError, ValueError):
    """
    Raised when the caller breaks an operation's input contract: wrong array
    shapes, length mismatches, too few points for a rate fit.
    """
    pass


class SymbolEvaluationError(RKCQError):
    """
    Raised when a Laplace-domain symbol fails at a frequency. The frequency is
    part of the message; the symbol's own exception is kept as the cause.
    """
    def __init__(self, s: complex, original_exception: Optional[Exception] = None):
        self.s = s
        super().__init__(f"Symbol evaluation failed at s={s:.6g}", original_exception)


class GeometryError(RKCQError):
    """
    Raised for polygons that cannot be meshed: fewer than three vertices,
    repeated or collinear-adjacent vertices, self-intersections.
    """
    pass


class AssemblyError(RKCQError):
    """
    Raised when Galerkin assembly fails on a pair of panels.
    """
    def __init__(self, message: str, panel_pair: Optional[Tuple[int, int]] = None,
                 original_exception: Optional[Exception] = None):
        self.panel_pair = panel_pair
        if panel_pair is not None:
            message = f"{message} (panels {panel_pair[0]}, {panel_pair[1]})"
        super().__init__(message, original_exception)


class LinearAlgebraError(RKCQError):
    """
    Raised when a dense factorization or solve breaks down. Carries the
    reciprocal condition estimate when one is available.
    """
    def __init__(self, message: str, condition: Optional[float] = None,
                 original_exception: Optional[Exception] = None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message, original_exception)


class MatrixIntegrityError(RKCQError):
    """
    Raised when a quadratic form that must be real and nonnegative is not.
    """
    pass


class ConfigurationError(RKCQError):
    """
    Raised when a run configuration is invalid: unknown keys, malformed
    values, parameters outside their admissible range, or incident-wave
    parameters that violate causality.
    """
    pass


class CausalityError(ConfigurationError):
    """
    Raised when the incident wave already reaches the scatterer at t = 0.
    """
    pass


__all__ = [
    "RKCQError",
    "NotImplementedFeatureError",
    "TableauError",
    "DomainError",
    "SingularityError",
    "DiagonalizationError",
    "ContractError",
    "SymbolEvaluationError",
    "GeometryError",
    "AssemblyError",
    "LinearAlgebraError",
    "MatrixIntegrityError",
    "ConfigurationError",
    "CausalityError",
]
