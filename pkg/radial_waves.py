"""
Free radial waves for complex wave number.

Riccati-Bessel and Riccati-Hankel functions (z times the spherical Bessel and
Hankel functions), their logarithmic derivatives, and the diagonal matrix of
free outgoing waves used to factor the oscillations out of the radial
equations. All functions accept complex arguments, including the imaginary
axis, and broadcast over array arguments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from angular_coupling import ChannelBasis

logger = logging.getLogger(__name__)

# Type aliases
ComplexLike = Union[complex, float, np.ndarray]

# Constants
_RESCALE_THRESHOLD = 1e200
_RESCALE_FACTOR = 1e-200
_POLE_EPS = 1e-14


class PoleError(ArithmeticError):
    """Raised when a continued fraction hits a zero of z h_l(z)."""


def _as_complex_nonzero(z: ComplexLike) -> np.ndarray:
    arr = np.asarray(z, dtype=complex)
    if np.any(arr == 0):
        raise ValueError("radial argument must be nonzero (the free waves are singular at z = 0)")
    return arr


def _check_order(l: int) -> int:
    if int(l) != l or l < 0:
        raise ValueError(f"order must be a nonnegative integer, got {l!r}")
    return int(l)


def _unwrap(value: np.ndarray, scalar_input: bool) -> ComplexLike:
    return complex(value) if scalar_input else value


# Riccati-Hankel functions
def riccati_hankel_sequence(lmax: int, z: ComplexLike) -> np.ndarray:
    """
    z h_l^(1)(z) for l = 0..lmax by upward recurrence.

    Returns:
        Array of shape (lmax + 1,) + shape(z).
    Raises:
        ValueError: If any z is zero.
    """
    lmax = _check_order(lmax)
    z = _as_complex_nonzero(z)
    out = np.empty((lmax + 1,) + z.shape, dtype=complex)
    phase = np.exp(1j * z)
    previous = phase  # order -1
    current = -1j * phase
    out[0] = current
    for l in range(lmax):
        previous, current = current, (2 * l + 1) / z * current - previous
        out[l + 1] = current
    return out


def riccati_hankel(l: int, z: ComplexLike) -> ComplexLike:
    """
    Riccati-Hankel function z h_l^(1)(z) for complex z.

    Raises:
        ValueError: For z = 0.
    """
    l = _check_order(l)
    scalar_input = np.ndim(z) == 0
    return _unwrap(riccati_hankel_sequence(l, z)[l], scalar_input)


def riccati_hankel_derivative(l: int, z: ComplexLike) -> ComplexLike:
    """d/dz of z h_l^(1)(z), from xi_l' = xi_{l-1} - (l/z) xi_l."""
    l = _check_order(l)
    scalar_input = np.ndim(z) == 0
    zc = _as_complex_nonzero(z)
    if l == 0:
        return _unwrap(np.exp(1j * zc), scalar_input)
    seq = riccati_hankel_sequence(l, zc)
    return _unwrap(seq[l - 1] - l / zc * seq[l], scalar_input)


# Riccati-Bessel functions
def _miller_start(lmax: int, z: np.ndarray) -> int:
    size = float(np.max(np.abs(z))) if z.size else 0.0
    return lmax + int(size) + 30 + int(3.0 * size ** (1.0 / 3.0))


def riccati_bessel_sequence(lmax: int, z: ComplexLike) -> np.ndarray:
    """
    z j_l(z) for l = 0..lmax by Miller's downward recurrence.

    The unnormalized sequence is scaled to whichever closed form, sin(z) or
    sin(z)/z - cos(z), is larger in magnitude at each point.

    Returns:
        Array of shape (lmax + 1,) + shape(z).
    """
    lmax = _check_order(lmax)
    z = _as_complex_nonzero(z)
    shape = z.shape
    z = z.reshape(-1)
    top = _miller_start(max(lmax, 1), z)

    stored = np.zeros((max(lmax, 1) + 1,) + z.shape, dtype=complex)
    upper = np.zeros(z.shape, dtype=complex)
    current = np.ones(z.shape, dtype=complex)
    for n in range(top, 0, -1):
        if n <= max(lmax, 1):
            stored[n] = current
        lower = (2 * n + 1) / z * current - upper
        big = np.abs(lower) > _RESCALE_THRESHOLD
        if np.any(big):
            lower = np.where(big, lower * _RESCALE_FACTOR, lower)
            current = np.where(big, current * _RESCALE_FACTOR, current)
            stored[:, big] *= _RESCALE_FACTOR
        upper, current = current, lower
    stored[0] = current

    sin_z = np.sin(z)
    first = sin_z / z - np.cos(z)
    use_zero = np.abs(sin_z) >= np.abs(first)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(use_zero, sin_z / stored[0], first / stored[1])
    return (stored * scale)[: lmax + 1].reshape((lmax + 1,) + shape)


def riccati_bessel(l: int, z: ComplexLike) -> ComplexLike:
    """Riccati-Bessel function z j_l(z) for complex z != 0."""
    l = _check_order(l)
    scalar_input = np.ndim(z) == 0
    return _unwrap(riccati_bessel_sequence(l, z)[l], scalar_input)


def riccati_bessel_derivative(l: int, z: ComplexLike) -> ComplexLike:
    """d/dz of z j_l(z)."""
    l = _check_order(l)
    scalar_input = np.ndim(z) == 0
    zc = _as_complex_nonzero(z)
    if l == 0:
        return _unwrap(np.cos(zc), scalar_input)
    seq = riccati_bessel_sequence(l, zc)
    return _unwrap(seq[l - 1] - l / zc * seq[l], scalar_input)


def riccati_hankel2(l: int, z: ComplexLike) -> ComplexLike:
    """z h_l^(2)(z) = 2 z j_l(z) - z h_l^(1)(z)."""
    l = _check_order(l)
    scalar_input = np.ndim(z) == 0
    value = 2.0 * riccati_bessel_sequence(l, z)[l] - riccati_hankel_sequence(l, z)[l]
    return _unwrap(value, scalar_input)


def riccati_hankel2_derivative(l: int, z: ComplexLike) -> ComplexLike:
    l = _check_order(l)
    scalar_input = np.ndim(z) == 0
    value = 2.0 * np.asarray(riccati_bessel_derivative(l, z)) - np.asarray(riccati_hankel_derivative(l, z))
    return _unwrap(value, scalar_input)


def riccati_hankel_reflected(l: int, z: ComplexLike) -> ComplexLike:
    """
    The outgoing wave at the negated argument, -z h_l^(1)(-z), written as
    (-1)^(l+1) z h_l^(2)(z).
    """
    l = _check_order(l)
    sign = -1.0 if l % 2 == 0 else 1.0
    scalar_input = np.ndim(z) == 0
    return _unwrap(sign * np.asarray(riccati_hankel2(l, z)), scalar_input)


# Logarithmic derivatives
def log_derivative_sequence(lmax: int, x: ComplexLike) -> np.ndarray:
    """
    d/dx log(x h_l^(1)(x)) for l = 0..lmax by the finite continued fraction

        R_0 = i,   R_l = 1 / (l/x - R_{l-1}) - l/x.

    Raises:
        ValueError: For x = 0.
        PoleError: If a partial denominator vanishes.
    """
    lmax = _check_order(lmax)
    x = _as_complex_nonzero(x)
    out = np.empty((lmax + 1,) + x.shape, dtype=complex)
    current = np.full(x.shape, 1j, dtype=complex)
    out[0] = current
    for l in range(1, lmax + 1):
        ratio = l / x
        denom = ratio - current
        if np.any(np.abs(denom) <= _POLE_EPS * (np.abs(ratio) + np.abs(current))):
            raise PoleError(f"x h_{l}(x) has a zero at the requested argument")
        current = 1.0 / denom - ratio
        out[l] = current
    if not np.all(np.isfinite(out)):
        raise PoleError("continued fraction produced a non-finite logarithmic derivative")
    return out


def log_derivative_W(l: int, x: ComplexLike) -> ComplexLike:
    """Logarithmic derivative of the Riccati-Hankel function x h_l^(1)(x)."""
    l = _check_order(l)
    scalar_input = np.ndim(x) == 0
    return _unwrap(log_derivative_sequence(l, x)[l], scalar_input)


def second_log_derivative_W(l: int, x: ComplexLike) -> ComplexLike:
    """
    d^2/dx^2 log(x h_l^(1)(x)) = l(l+1)/x^2 - 1 - R_l(x)^2, from the free
    radial equation.
    """
    l = _check_order(l)
    scalar_input = np.ndim(x) == 0
    xc = _as_complex_nonzero(x)
    first = log_derivative_sequence(l, xc)[l]
    return _unwrap(l * (l + 1) / xc**2 - 1.0 - first**2, scalar_input)


def small_r_ratio_limit(basis: ChannelBasis) -> np.ndarray:
    """
    The r -> 0 limit of W(kr)^{-1} W(-kr): diag((-1)^l) over the channels'
    orbital indices.
    """
    return np.diag(np.where(basis.ells % 2 == 0, 1.0, -1.0)).astype(complex)


# Free-wave matrix
@dataclass(frozen=True)
class FreeWaveMatrix:
    """
    Diagonal matrix of free outgoing waves kr h_l^(1)(kr) over a basis.

    Only the per-channel orbital index enters, so every method evaluates one
    value per distinct l and spreads it over the channels.
    """

    basis: ChannelBasis
    k: complex

    def __post_init__(self) -> None:
        if complex(self.k) == 0:
            raise ValueError("wave number must be nonzero")
        object.__setattr__(self, "k", complex(self.k))

    @property
    def _lmax(self) -> int:
        return int(self.basis.ells.max()) if self.basis.dimension else 0

    def _spread(self, per_l: np.ndarray) -> np.ndarray:
        return per_l[self.basis.ells]

    def _argument(self, r: float) -> complex:
        if r == 0:
            raise ValueError("radius must be nonzero")
        return self.k * r

    def values(self, r: float) -> np.ndarray:
        """Diagonal entries x h_l^(1)(x) at x = k r."""
        return self._spread(riccati_hankel_sequence(self._lmax, self._argument(r)))

    def reflected_values(self, r: float) -> np.ndarray:
        """Diagonal entries of W(-k r)."""
        x = self._argument(r)
        lmax = self._lmax
        signs = np.where(np.arange(lmax + 1) % 2 == 0, -1.0, 1.0)
        hankel2 = 2.0 * riccati_bessel_sequence(lmax, x) - riccati_hankel_sequence(lmax, x)
        return self._spread(signs * hankel2)

    def log_derivative(self, r: float) -> np.ndarray:
        """Diagonal of d/dr log W(kr) = k R_l(kr)."""
        return self.k * self._spread(log_derivative_sequence(self._lmax, self._argument(r)))

    def log_derivative_prime(self, r: float) -> np.ndarray:
        """Diagonal of d^2/dr^2 log W(kr) = l(l+1)/r^2 - k^2 - D^2."""
        d = self.log_derivative(r)
        ells = self.basis.ells
        return ells * (ells + 1) / r**2 - self.k**2 - d**2

    def conjugate(self, matrix: np.ndarray, r: float) -> np.ndarray:
        """W(kr)^{-1} X W(kr), i.e. X_ij * w_j / w_i."""
        w = self.values(r)
        return matrix * (w[None, :] / w[:, None])

    def regular_values(self, r: float) -> Tuple[np.ndarray, np.ndarray]:
        """Riccati-Bessel values and their r-derivatives at x = k r."""
        x = self._argument(r)
        lmax = self._lmax
        seq = riccati_bessel_sequence(lmax + 1, x)[: lmax + 1]
        deriv = np.empty_like(seq)
        deriv[0] = np.cos(x)
        ells = np.arange(1, lmax + 1)
        deriv[1:] = seq[:-1] - ells / x * seq[1:]
        return self._spread(seq), self.k * self._spread(deriv)

    def regular_state(self, r: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Diagonal (H, H') of the free regular solution, normalized so that
        W^{-1} H = (i/k) x j_l(x). With this normalization H ~ r/(2l+1) as
        r -> 0 and the free Wronskian is exactly -1.
        """
        x = self._argument(r)
        lmax = self._lmax
        xi = riccati_hankel_sequence(lmax, x)
        xi_prime = np.empty_like(xi)
        xi_prime[0] = np.exp(1j * x)
        ells = np.arange(1, lmax + 1)
        xi_prime[1:] = xi[:-1] - ells / x * xi[1:]
        jhat = riccati_bessel_sequence(lmax, x)
        jhat_prime = np.empty_like(jhat)
        jhat_prime[0] = np.cos(x)
        jhat_prime[1:] = jhat[:-1] - ells / x * jhat[1:]

        h = (1j / self.k) * xi * jhat
        h_prime = 1j * (xi_prime * jhat + xi * jhat_prime)
        return np.diag(self._spread(h)), np.diag(self._spread(h_prime))

    def free_equation_residual(self, r: float, step: float = 1e-3) -> float:
        """
        Relative residual of -W'' + (L^2/r^2) W - k^2 W, with W'' from a
        five-point central difference.
        """
        samples = [self.values(r + n * step) for n in (-2, -1, 0, 1, 2)]
        w_mid = samples[2]
        second = (
            -samples[0] + 16.0 * samples[1] - 30.0 * w_mid + 16.0 * samples[3] - samples[4]
        ) / (12.0 * step**2)
        ells = self.basis.ells
        residual = -second + (ells * (ells + 1) / r**2 - self.k**2) * w_mid
        scale = np.abs(self.k**2 * w_mid) + np.abs(second)
        return float(np.max(np.abs(residual) / scale))
