"""
Closed-form reference results.

Partial-wave S-matrix elements of the spherical square well and of the
dielectric sphere, partial-wave expansions of scalar and vector plane waves,
and truncated partial-wave sums of the free scalar and dyadic Green's
functions. The engines are checked against these.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from angular_coupling import spherical_harmonic, transverse_coefficients, vector_spherical_harmonic
from radial_waves import (
    riccati_bessel,
    riccati_bessel_derivative,
    riccati_bessel_sequence,
    riccati_hankel,
    riccati_hankel2,
    riccati_hankel2_derivative,
    riccati_hankel_derivative,
    riccati_hankel_sequence,
)

logger = logging.getLogger(__name__)

# Type aliases
OracleKind = Literal["square_well", "dielectric_sphere"]
Polarization = Literal["M", "N"]
Direction = Union[Sequence[float], np.ndarray]

# Constants
_POLE_TOL = 1e-14
_EXPANSION_MARGIN = 25
_POLARIZATION_EXPONENT = {"M": 1, "N": -1}


class OracleError(ArithmeticError):
    """Raised at a pole of a closed-form S-matrix element."""


def _matched_s(
    weight: complex,
    interior_value: complex,
    interior_slope: complex,
    l: int,
    x: complex,
) -> complex:
    """
    S for an interior solution with value u and slope weight * u' at the
    surface, matched to h2 + S h1 outside (all in Riccati form at x = ka):

        S = -(w u' h2 - u h2') / (w u' h1 - u h1').
    """
    h1, dh1 = riccati_hankel(l, x), riccati_hankel_derivative(l, x)
    h2, dh2 = riccati_hankel2(l, x), riccati_hankel2_derivative(l, x)
    first = weight * interior_slope * h1
    second = interior_value * dh1
    denominator = first - second
    if abs(denominator) <= _POLE_TOL * (abs(first) + abs(second)):
        raise OracleError(f"closed-form S has a pole at ka={x} (l={l})")
    return complex(-(weight * interior_slope * h2 - interior_value * dh2) / denominator)


def _interior(l: int, z: complex) -> Tuple[complex, complex]:
    return riccati_bessel(l, z), riccati_bessel_derivative(l, z)


def s_exact_square_well(l: int, k: complex, V0: float, a: float) -> complex:
    """
    S_l of -laplacian + V with V = V0 for r < a and 0 outside.

    Uses q = sqrt(k^2 - V0) on the principal branch (both branches give the
    same S) and the hard-sphere limit e^{-2ika} for l = 0 as V0 -> +inf.

    Raises:
        ValueError: For k = 0 or a <= 0.
        OracleError: At a pole of S.
    """
    k = complex(k)
    if k == 0:
        raise ValueError("k must be nonzero")
    if a <= 0:
        raise ValueError(f"radius must be positive, got {a}")
    q = cmath.sqrt(k * k - V0)
    x = k * a
    if q == 0:
        # u ~ r^(l+1): a u'/u = l + 1
        return _matched_s(1.0, a, (l + 1) / k, l, x)
    value, slope = _interior(l, q * a)
    return _matched_s(q / k, value, slope, l, x)


def s_exact_dielectric_sphere(j: int, polarization: Polarization, k: complex, n: complex, a: float) -> complex:
    """
    S of a homogeneous sphere of refractive index n for the M (TE) or
    N (TM) partial wave of total angular momentum j. The interior slope
    carries the weight n for M and 1/n for N.

    Raises:
        ValueError: For j < 1, k = 0, a <= 0 or an unknown polarization.
        OracleError: At a pole of S.
    """
    if polarization not in _POLARIZATION_EXPONENT:
        raise ValueError(f"polarization must be 'M' or 'N', got {polarization!r}")
    if j < 1:
        raise ValueError(f"transverse partial waves need j >= 1, got {j}")
    k = complex(k)
    if k == 0 or a <= 0 or n == 0:
        raise ValueError("need k != 0, n != 0 and a > 0")
    weight = complex(n) ** _POLARIZATION_EXPONENT[polarization]
    value, slope = _interior(j, complex(n) * k * a)
    return _matched_s(weight, value, slope, j, k * a)


# Oracle specs
@dataclass(frozen=True)
class OracleSpec:
    """
    A closed-form scatterer.

    Attributes:
        kind: "square_well" (strength = V0) or "dielectric_sphere"
            (strength = refractive index n).
        strength: V0 or n.
        radius: a.
    """

    kind: OracleKind
    strength: complex
    radius: float

    def __post_init__(self) -> None:
        if self.kind not in ("square_well", "dielectric_sphere"):
            raise ValueError(f"oracle kind must be square_well or dielectric_sphere, got {self.kind!r}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.kind == "dielectric_sphere" and (np.isreal(self.strength) and np.real(self.strength) <= 0):
            raise ValueError(f"refractive index must be positive, got {self.strength}")

    def channels(self, truncation: int) -> List[Tuple[str, int, Optional[Polarization], int]]:
        """(label, l or j, polarization, degeneracy) for every partial wave."""
        if self.kind == "square_well":
            return [(f"l={l}", l, None, 2 * l + 1) for l in range(truncation + 1)]
        return [
            (f"j={j},{pol}", j, pol, 2 * j + 1)  # type: ignore[misc]
            for j in range(1, truncation + 1)
            for pol in ("M", "N")
        ]

    def s_value(self, order: int, k: complex, polarization: Optional[Polarization] = None) -> complex:
        if self.kind == "square_well":
            return s_exact_square_well(order, k, float(np.real(self.strength)), self.radius)
        return s_exact_dielectric_sphere(order, polarization or "M", k, self.strength, self.radius)


def oracle_eigenphases(spec: OracleSpec, k_grid: Sequence[complex], truncation: int) -> pd.DataFrame:
    """
    Closed-form eigenphases on a k grid, one row per (k, partial wave).

    Columns: k_re, k_im, channel, order, polarization, degeneracy, s_re,
    s_im, eigenphase, modulus. On a real grid the eigenphases are unwrapped
    along k per partial wave.
    """
    k_values = np.asarray(k_grid, dtype=complex)
    rows = []
    for label, order, pol, degeneracy in spec.channels(truncation):
        s_values = np.array([spec.s_value(order, k, pol) for k in k_values])
        doubled = np.angle(s_values)
        if np.all(k_values.imag == 0) and len(k_values) > 1:
            doubled = np.unwrap(doubled)
        for k, s, phase2 in zip(k_values, s_values, doubled):
            rows.append(
                {
                    "k_re": k.real,
                    "k_im": k.imag,
                    "channel": label,
                    "order": order,
                    "polarization": pol or "",
                    "degeneracy": degeneracy,
                    "s_re": s.real,
                    "s_im": s.imag,
                    "eigenphase": phase2 / 2.0,
                    "modulus": abs(s),
                }
            )
    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame = frame.sort_values(["k_im", "k_re", "order", "polarization"], kind="stable").reset_index(drop=True)
    logger.info("Computed %d closed-form %s eigenphases", len(frame), spec.kind)
    return frame


# Plane waves
def _direction_angles(direction: Direction) -> Tuple[float, float]:
    vec = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(vec)
    if vec.shape != (3,) or norm == 0:
        raise ValueError("direction must be a nonzero 3-vector")
    vec = vec / norm
    return float(np.arccos(np.clip(vec[2], -1.0, 1.0))), float(np.arctan2(vec[1], vec[0]))


def _point_polar(point: Direction) -> Tuple[float, float, float]:
    vec = np.asarray(point, dtype=float)
    r = float(np.linalg.norm(vec))
    if r == 0:
        return 0.0, 0.0, 0.0
    return r, float(np.arccos(np.clip(vec[2] / r, -1.0, 1.0))), float(np.arctan2(vec[1], vec[0]))


def scalar_plane_wave_coeffs(direction: Direction, l: int, m: int) -> complex:
    """Coefficient 4 pi i^l Y_l^m(k_hat)* of e^{ik.r} on j_l(kr) Y_l^m(r_hat)."""
    theta, phi = _direction_angles(direction)
    return complex(4.0 * np.pi * 1j**l * np.conj(spherical_harmonic(l, m, theta, phi)))


def vector_plane_wave_coeffs(direction: Direction, polarization: Sequence[complex], j: int, l: int, m: int) -> complex:
    """Coefficient 4 pi i^l (xi . Y^l_{jm}(k_hat)*) of xi e^{ik.r} on j_l(kr) Y^l_{jm}(r_hat)."""
    theta, phi = _direction_angles(direction)
    xi = np.asarray(polarization, dtype=complex)
    harmonic = vector_spherical_harmonic(j, l, m, theta, phi)
    return complex(4.0 * np.pi * 1j**l * np.dot(xi, np.conj(harmonic)))


def _spherical_bessel(lmax: int, z: complex) -> np.ndarray:
    if z == 0:
        out = np.zeros(lmax + 1, dtype=complex)
        out[0] = 1.0
        return out
    return riccati_bessel_sequence(lmax, z) / z


def _spherical_hankel(lmax: int, z: complex) -> np.ndarray:
    return riccati_hankel_sequence(lmax, z) / z


def plane_wave_sum(k: complex, direction: Direction, point: Direction, lmax: int) -> complex:
    """Truncated partial-wave sum of e^{ik k_hat . r}."""
    r, theta, phi = _point_polar(point)
    radial = _spherical_bessel(lmax, complex(k) * r)
    total = 0j
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            total += scalar_plane_wave_coeffs(direction, l, m) * radial[l] * complex(spherical_harmonic(l, m, theta, phi))
    return total


def vector_plane_wave_sum(
    k: complex,
    direction: Direction,
    polarization: Sequence[complex],
    point: Direction,
    jmax: int,
) -> np.ndarray:
    """Truncated (l, j, m) expansion of xi e^{ik k_hat . r} as a Cartesian 3-vector."""
    r, theta, phi = _point_polar(point)
    radial = _spherical_bessel(jmax + 1, complex(k) * r)
    total = np.zeros(3, dtype=complex)
    for j in range(jmax + 1):
        for l in (j - 1, j, j + 1):
            if l < 0 or (j == 0 and l != 1):
                continue
            for m in range(-j, j + 1):
                coeff = vector_plane_wave_coeffs(direction, polarization, j, l, m)
                total += coeff * radial[l] * vector_spherical_harmonic(j, l, m, theta, phi)
    return total


def _mode_kinds(j: int) -> Tuple[str, ...]:
    return ("L",) if j == 0 else ("M", "N", "L")


def _regular_mode(kind: str, j: int, m: int, radial: np.ndarray, theta: float, phi: float) -> np.ndarray:
    """sum over l of c_l i^l z_l(kr) Y^l_{jm}: a solution of the free vector equation."""
    out = np.zeros(3, dtype=complex)
    for l, weight in transverse_coefficients(kind, j).items():  # type: ignore[arg-type]
        out += weight * 1j**l * radial[l] * vector_spherical_harmonic(j, l, m, theta, phi)
    return out


def _mode_angular(kind: str, j: int, m: int, theta: float, phi: float) -> np.ndarray:
    out = np.zeros(3, dtype=complex)
    for l, weight in transverse_coefficients(kind, j).items():  # type: ignore[arg-type]
        out += weight * vector_spherical_harmonic(j, l, m, theta, phi)
    return out


def regular_vector_mode(kind: str, j: int, m: int, k: complex, point: Direction) -> np.ndarray:
    """
    Regular free vector mode sum over l of c_l i^l j_l(kr) Y^l_{jm}(r_hat) at a
    Cartesian point; divergence-free for M and N, curl-free for L.
    """
    r, theta, phi = _point_polar(point)
    radial = _spherical_bessel(j + 1, complex(k) * r)
    return _regular_mode(kind, j, m, radial, theta, phi)


def vector_plane_wave_modes(
    direction: Direction, polarization: Sequence[complex], jmax: int
) -> Dict[Tuple[str, int, int], complex]:
    """
    Coefficients 4 pi (xi . X_chi(k_hat)*) of xi e^{ik.r} on the regular
    M, N and L modes; L coefficients vanish for transverse xi.
    """
    theta, phi = _direction_angles(direction)
    xi = np.asarray(polarization, dtype=complex)
    coeffs = {}
    for j in range(jmax + 1):
        for kind in _mode_kinds(j):
            for m in range(-j, j + 1):
                angular = _mode_angular(kind, j, m, theta, phi)
                coeffs[(kind, j, m)] = complex(4.0 * np.pi * np.dot(xi, np.conj(angular)))
    return coeffs


def vector_plane_wave_mode_sum(
    k: complex,
    direction: Direction,
    polarization: Sequence[complex],
    point: Direction,
    jmax: int,
) -> np.ndarray:
    """The (M, N, L) form of the vector plane-wave expansion."""
    r, theta, phi = _point_polar(point)
    radial = _spherical_bessel(jmax + 1, complex(k) * r)
    total = np.zeros(3, dtype=complex)
    for (kind, j, m), coeff in vector_plane_wave_modes(direction, polarization, jmax).items():
        total += coeff * _regular_mode(kind, j, m, radial, theta, phi)
    return total


# Green's functions
def _ordered(point: Direction, source: Direction) -> Tuple[Tuple[float, float, float], Tuple[float, float, float], bool]:
    first, second = _point_polar(point), _point_polar(source)
    if first[0] == second[0]:
        raise ValueError("partial-wave Green's function sums need distinct radii")
    return first, second, first[0] < second[0]


def default_expansion_order(k: complex, r_outer: float) -> int:
    return int(math.ceil(abs(complex(k)) * r_outer)) + _EXPANSION_MARGIN


def greens_function_closed(point: Direction, source: Direction, k: complex) -> complex:
    """e^{ik|r - r'|} / (4 pi |r - r'|)."""
    distance = float(np.linalg.norm(np.asarray(point, dtype=float) - np.asarray(source, dtype=float)))
    if distance == 0:
        raise ValueError("the Green's function is singular at coincident points")
    return complex(cmath.exp(1j * complex(k) * distance) / (4.0 * np.pi * distance))


def greens_function_partial_wave(
    point: Direction,
    source: Direction,
    k: complex,
    lmax: Optional[int] = None,
    dyadic: bool = False,
    form: Literal["ljm", "mnl"] = "ljm",
) -> Union[complex, np.ndarray]:
    """
    Truncated partial-wave sum of the free Green's function.

    Scalar: ik sum j_l(k r<) h_l(k r>) Y_l^m(r_hat) Y_l^m(r_hat')*.
    Dyadic (the free Green's function of the generalized Helmholtz
    operator, which reduces to the scalar one times the identity): the same
    sum over Y^l_{jm}(r_hat) Y^l_{jm}(r_hat')^dagger, or, with
    ``form="mnl"``, over the regular-times-outgoing M, N and L modes with the
    angular factor of the source-side mode conjugated.

    Args:
        lmax: Truncation; defaults to ceil(|k| r>) + 25 (j truncation for the
            dyadic sums).
    Raises:
        ValueError: For coincident radii or an unknown form.
    """
    if form not in ("ljm", "mnl"):
        raise ValueError(f"form must be 'ljm' or 'mnl', got {form!r}")
    k = complex(k)
    first, second, first_inner = _ordered(point, source)
    r_outer = max(first[0], second[0])
    lmax = default_expansion_order(k, r_outer) if lmax is None else int(lmax)
    top = lmax + 1 if dyadic else lmax

    def radial(polar: Tuple[float, float, float], inner: bool) -> np.ndarray:
        return _spherical_bessel(top, k * polar[0]) if inner else _spherical_hankel(top, k * polar[0])

    radial_point = radial(first, first_inner)
    radial_source = radial(second, not first_inner)

    if not dyadic:
        total = 0j
        for l in range(lmax + 1):
            for m in range(-l, l + 1):
                total += (
                    radial_point[l]
                    * radial_source[l]
                    * complex(spherical_harmonic(l, m, first[1], first[2]))
                    * complex(np.conj(spherical_harmonic(l, m, second[1], second[2])))
                )
        return 1j * k * total

    total = np.zeros((3, 3), dtype=complex)
    for j in range(lmax + 1):
        for m in range(-j, j + 1):
            if form == "ljm":
                for l in (j - 1, j, j + 1):
                    if l < 0 or (j == 0 and l != 1):
                        continue
                    left = radial_point[l] * vector_spherical_harmonic(j, l, m, first[1], first[2])
                    right = radial_source[l] * np.conj(vector_spherical_harmonic(j, l, m, second[1], second[2]))
                    total += np.outer(left, right)
            else:
                for kind in _mode_kinds(j):
                    left = _regular_mode(kind, j, m, radial_point, first[1], first[2])
                    right = np.conj(_regular_mode(kind, j, m, np.conj(radial_source), second[1], second[2]))
                    total += np.outer(left, right)
    return 1j * k * total
