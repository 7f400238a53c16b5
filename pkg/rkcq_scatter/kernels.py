"""
Modified Bessel functions and fundamental solutions of -Delta + s^2.

In two dimensions the fundamental solution is (i/4) H_0^(1)(i s |x|), which
equals K_0(s |x|) / (2 pi) for Re s > 0. All functions accept numpy arrays
and broadcast.
"""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import special

from .exceptions import DomainError, SingularityError

ArrayLike = Union[complex, np.ndarray]

INV_2PI = 1.0 / (2.0 * np.pi)


def _check_right_half_plane(z: np.ndarray) -> None:
    if np.any(z == 0):
        raise DomainError("Modified Bessel function K_nu is singular at z = 0")
    if np.any(z.real <= 0):
        raise DomainError("Modified Bessel function argument must satisfy Re z > 0")


def bessel_k0(z: ArrayLike, with_status: bool = False):
    """
    K_0(z) for Re z > 0.

    Beyond the exponential range the value underflows to 0; with
    ``with_status=True`` a boolean mask of underflowed entries is returned too.
    """
    z = np.asarray(z, dtype=complex)
    _check_right_half_plane(z)
    value = special.kv(0, z)
    if with_status:
        return value, (value == 0) & np.isfinite(z)
    return value


def bessel_k1(z: ArrayLike, with_status: bool = False):
    """K_1(z) for Re z > 0; see :func:`bessel_k0` for the status flag."""
    z = np.asarray(z, dtype=complex)
    _check_right_half_plane(z)
    value = special.kv(1, z)
    if with_status:
        return value, (value == 0) & np.isfinite(z)
    return value


def bessel_k0_scaled(z: ArrayLike) -> np.ndarray:
    """e^z K_0(z), free of underflow for large |z|."""
    z = np.asarray(z, dtype=complex)
    _check_right_half_plane(z)
    return special.kve(0, z)


def bessel_k1_scaled(z: ArrayLike) -> np.ndarray:
    """e^z K_1(z)."""
    z = np.asarray(z, dtype=complex)
    _check_right_half_plane(z)
    return special.kve(1, z)


def _k0_k1(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # hot path for assembly: no validation, one scaled evaluation per order
    decay = np.exp(-z)
    return special.kve(0, z) * decay, special.kve(1, z) * decay


def fundamental_solution(x, s: complex, d: int = 2) -> ArrayLike:
    """
    Phi(x; s), the decaying fundamental solution of -Delta + s^2 in R^d.

    ``x`` has shape (..., d); the result has shape (...).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise DomainError(f"Point dimension {x.shape[-1]} does not match d={d}")
    if complex(s).real <= 0:
        raise DomainError(f"Fundamental solution requires Re s > 0, got s={s}")
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("Fundamental solution is singular at x = 0")
    if d == 2:
        return INV_2PI * special.kv(0, s * r)
    if d == 3:
        return np.exp(-s * r) / (4.0 * np.pi * r)
    raise DomainError(f"Fundamental solution is provided for d in (2, 3), got d={d}")


def fundamental_solution_gradient_2d(x, s: complex) -> np.ndarray:
    """grad_x Phi(x; s) = -(s / 2 pi) K_1(s|x|) x / |x| in two dimensions."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("Fundamental solution gradient is singular at x = 0")
    factor = -s * INV_2PI * special.kv(1, s * r) / r
    return factor[..., None] * x


def dlp_kernel_2d(x, y, nu_y, s: complex) -> ArrayLike:
    """
    Double-layer kernel d/dnu(y) Phi(x - y; s) = (s/2pi) K_1(s r) ((x - y) . nu_y) / r.
    """
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r == 0):
        raise SingularityError("Double-layer kernel is singular at x = y")
    if complex(s).real <= 0:
        raise DomainError(f"Double-layer kernel requires Re s > 0, got s={s}")
    projection = np.sum(diff * np.asarray(nu_y, dtype=float), axis=-1)
    return s * INV_2PI * special.kv(1, s * r) * projection / r


@dataclass(frozen=True)
class FrequencyPoint:
    """A Laplace frequency together with the sector parameters it is judged against."""
    s: complex
    sigma0: float = 1.0
    delta: float = 0.2

    def __post_init__(self):
        if complex(self.s).real <= 0:
            raise DomainError(f"Frequency must satisfy Re s > 0, got s={self.s}")
        if self.sigma0 <= 0:
            raise DomainError(f"Sector requires sigma0 > 0, got {self.sigma0}")
        if not 0 <= self.delta < np.pi / 2:
            raise DomainError(f"Sector angle delta must lie in [0, pi/2), got {self.delta}")

    def in_sector(self) -> bool:
        """Membership in {Re s > sigma0, |Arg s| < pi/2 - delta}."""
        s = complex(self.s)
        return bool(s.real > self.sigma0 and abs(np.angle(s)) < np.pi / 2 - self.delta)


__all__ = [
    "FrequencyPoint",
    "bessel_k0",
    "bessel_k1",
    "bessel_k0_scaled",
    "bessel_k1_scaled",
    "fundamental_solution",
    "fundamental_solution_gradient_2d",
    "dlp_kernel_2d",
]
