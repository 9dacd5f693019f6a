"""
Angular-momentum algebra for partial-wave channel coupling.

This module provides the Wigner 3j and 6j symbols, Clebsch-Gordan
coefficients, the scalar and vector channel-coupling coefficients that turn a
multipole source into a channel-mixing matrix, and evaluation of ordinary,
vector and transverse spherical harmonics. Everything here is independent of
the wave number and the radius, so coupling tensors are built once per basis
and shared read-only between solves.

All phases follow the Condon-Shortley convention.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from types import MappingProxyType
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple, TypedDict, Union

import numpy as np

try:
    from scipy.special import sph_harm_y
except ImportError:  # scipy < 1.15
    sph_harm_y = None
    from scipy.special import sph_harm

logger = logging.getLogger(__name__)

# Type aliases
BasisKind = Literal["scalar", "vector"]
ScalarChannel = Tuple[int, int]
VectorChannel = Tuple[int, int, int]
Channel = Union[ScalarChannel, VectorChannel]
SourceKey = Tuple[int, int]
ArrayLike = Union[float, np.ndarray]


class BasisMetadata(TypedDict):
    kind: str
    truncation: int
    source_lmax: int
    dimension: int
    channels: List[List[int]]


# Constants
_FOUR_PI = 4.0 * math.pi
_SQRT_HALF = math.sqrt(0.5)
# Cartesian components of the spherical unit vectors e_{+1}, e_0, e_{-1}.
_SPHERICAL_UNIT_VECTORS: Dict[int, np.ndarray] = {
    1: np.array([-_SQRT_HALF, -1j * _SQRT_HALF, 0.0]),
    0: np.array([0.0, 0.0, 1.0], dtype=complex),
    -1: np.array([_SQRT_HALF, -1j * _SQRT_HALF, 0.0]),
}
_TRANSVERSE_KINDS = ("M", "N", "L")


# Argument validation
def _as_angular_momentum(name: str, value: int) -> int:
    if isinstance(value, (bool, np.bool_)):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, (float, np.floating)):
        if not float(value).is_integer():
            raise ValueError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    value = int(value)
    return value


def _validate_js(**js: int) -> Tuple[int, ...]:
    out = []
    for name, value in js.items():
        j = _as_angular_momentum(name, value)
        if j < 0:
            raise ValueError(f"{name} must be nonnegative, got {value!r}")
        out.append(j)
    return tuple(out)


def _triangle(a: int, b: int, c: int) -> bool:
    return abs(a - b) <= c <= a + b


def _triangle_delta(a: int, b: int, c: int) -> Fraction:
    return Fraction(
        math.factorial(a + b - c) * math.factorial(a - b + c) * math.factorial(-a + b + c),
        math.factorial(a + b + c + 1),
    )


def _signed_sqrt(value: Fraction, sign: int) -> float:
    # value is exact; only the final square root is rounded
    if value == 0:
        return 0.0
    return sign * math.sqrt(float(value))


# Wigner symbols
@lru_cache(maxsize=65536)
def _wigner3j_cached(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    if m1 + m2 + m3 != 0 or not _triangle(j1, j2, j3):
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0

    t_min = max(0, j2 - j3 - m1, j1 - j3 + m2)
    t_max = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    if t_min > t_max:
        return 0.0

    total = Fraction(0)
    for t in range(t_min, t_max + 1):
        denom = (
            math.factorial(t)
            * math.factorial(j3 - j2 + t + m1)
            * math.factorial(j3 - j1 + t - m2)
            * math.factorial(j1 + j2 - j3 - t)
            * math.factorial(j1 - t - m1)
            * math.factorial(j2 - t + m2)
        )
        total += Fraction((-1) ** t, denom)
    if total == 0:
        return 0.0

    weight = _triangle_delta(j1, j2, j3) * (
        math.factorial(j1 + m1) * math.factorial(j1 - m1)
        * math.factorial(j2 + m2) * math.factorial(j2 - m2)
        * math.factorial(j3 + m3) * math.factorial(j3 - m3)
    )
    phase = -1 if (j1 - j2 - m3) % 2 else 1
    sign = phase * (1 if total > 0 else -1)
    return _signed_sqrt(total * total * weight, sign)


def wigner3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """
    Wigner 3j symbol by the Racah sum with exact integer factorials.

    Args:
        j1, j2, j3: Nonnegative integer angular momenta.
        m1, m2, m3: Integer projections.
    Returns:
        The symbol; exactly 0.0 when the projections do not sum to zero,
        the triangle rule fails, or a projection exceeds its momentum.
    Raises:
        ValueError: If any j is negative or not an integer.
    """
    j1, j2, j3 = _validate_js(j1=j1, j2=j2, j3=j3)
    m1, m2, m3 = (_as_angular_momentum(name, m) for name, m in (("m1", m1), ("m2", m2), ("m3", m3)))
    return _wigner3j_cached(j1, j2, j3, m1, m2, m3)


@lru_cache(maxsize=65536)
def _wigner6j_cached(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> float:
    if not (
        _triangle(j1, j2, j3) and _triangle(j1, j5, j6)
        and _triangle(j4, j2, j6) and _triangle(j4, j5, j3)
    ):
        return 0.0

    a = (j1 + j2 + j3, j1 + j5 + j6, j4 + j2 + j6, j4 + j5 + j3)
    b = (j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4)
    t_min = max(a)
    t_max = min(b)
    if t_min > t_max:
        return 0.0

    total = Fraction(0)
    for t in range(t_min, t_max + 1):
        denom = 1
        for ai in a:
            denom *= math.factorial(t - ai)
        for bi in b:
            denom *= math.factorial(bi - t)
        total += Fraction((-1) ** t * math.factorial(t + 1), denom)
    if total == 0:
        return 0.0

    weight = (
        _triangle_delta(j1, j2, j3) * _triangle_delta(j1, j5, j6)
        * _triangle_delta(j4, j2, j6) * _triangle_delta(j4, j5, j3)
    )
    return _signed_sqrt(total * total * weight, 1 if total > 0 else -1)


def wigner6j(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> float:
    """
    Wigner 6j symbol {j1 j2 j3; j4 j5 j6} by the Racah sum.

    Returns 0.0 whenever one of the four triads violates the triangle rule.
    """
    js = _validate_js(j1=j1, j2=j2, j3=j3, j4=j4, j5=j5, j6=j6)
    return _wigner6j_cached(*js)


def clebsch_gordan(j1: int, m1: int, j2: int, m2: int, j: int, m: int) -> float:
    """
    Clebsch-Gordan coefficient <j1 m1; j2 m2 | j m>.

    Zero unless m = m1 + m2 and (j1, j2, j) form a triangle.
    """
    j1, j2, j = _validate_js(j1=j1, j2=j2, j=j)
    m1, m2, m = (_as_angular_momentum(name, v) for name, v in (("m1", m1), ("m2", m2), ("m", m)))
    if m1 + m2 != m:
        return 0.0
    phase = -1.0 if (j1 - j2 + m) % 2 else 1.0
    return phase * math.sqrt(2 * j + 1) * _wigner3j_cached(j1, j2, j, m1, m2, -m)


# Channel coupling coefficients
@lru_cache(maxsize=262144)
def _scalar_coupling_cached(l: int, m: int, lp: int, mp: int, lpp: int, mpp: int) -> float:
    if m + mp != mpp or (l + lp + lpp) % 2:
        return 0.0
    parity = _wigner3j_cached(l, lp, lpp, 0, 0, 0)
    if parity == 0.0:
        return 0.0
    projection = _wigner3j_cached(l, lp, lpp, m, mp, -mpp)
    if projection == 0.0:
        return 0.0
    phase = -1.0 if mpp % 2 else 1.0
    norm = math.sqrt((2 * l + 1) * (2 * lp + 1) * (2 * lpp + 1) / _FOUR_PI)
    return phase * norm * parity * projection


def scalar_coupling(l: int, m: int, lp: int, mp: int, lpp: int, mpp: int) -> float:
    """
    Coupling of the column channel (l, m) into the row channel (lpp, mpp)
    through a source moment (lp, mp):

        Z = integral of Y_l^m * Y_lp^mp * conj(Y_lpp^mpp) over the sphere.
    """
    l, lp, lpp = _validate_js(l=l, lp=lp, lpp=lpp)
    for name, (ll, mm) in (("m", (l, m)), ("mp", (lp, mp)), ("mpp", (lpp, mpp))):
        if abs(_as_angular_momentum(name, mm)) > ll:
            raise ValueError(f"|{name}| must not exceed its angular momentum, got {mm!r} for l={ll}")
    return _scalar_coupling_cached(l, int(m), lp, int(mp), lpp, int(mpp))


def _valid_vector_channel(j: int, l: int, m: int) -> bool:
    if j < 0 or l < 0 or abs(m) > j:
        return False
    if j == 0:
        return l == 1
    return abs(l - j) <= 1


@lru_cache(maxsize=262144)
def _vector_coupling_cached(
    j: int, l: int, m: int, lp: int, mp: int, jpp: int, lpp: int, mpp: int
) -> float:
    if m + mp != mpp or (l + lp + lpp) % 2:
        return 0.0
    projection = _wigner3j_cached(jpp, lp, j, -mpp, mp, m)
    if projection == 0.0:
        return 0.0
    recoupling = _wigner6j_cached(lpp, jpp, 1, j, l, lp)
    if recoupling == 0.0:
        return 0.0
    orbital = _wigner3j_cached(lpp, lp, l, 0, 0, 0)
    if orbital == 0.0:
        return 0.0

    phase = -1.0 if (jpp - mpp + lpp + 1 + j + lp + lpp) % 2 else 1.0
    norm = math.sqrt(
        (2 * j + 1) * (2 * jpp + 1)
        * (2 * lpp + 1) * (2 * lp + 1) * (2 * l + 1) / _FOUR_PI
    )
    return phase * norm * projection * recoupling * orbital


def vector_coupling(
    j: int, l: int, m: int, lp: int, mp: int, jpp: int, lpp: int, mpp: int
) -> float:
    """
    Coupling of the vector channel (j, l, m) into (jpp, lpp, mpp) through a
    scalar source moment (lp, mp):

        Z = integral of conj(Y^lpp_{jpp mpp}) . Y^l_{jm} * Y_lp^mp over the sphere,

    evaluated through the reduced matrix element of Y_lp between vector
    spherical harmonics (one 3j, one 6j and the orbital parity 3j).
    """
    j, l, lp, jpp, lpp = _validate_js(j=j, l=l, lp=lp, jpp=jpp, lpp=lpp)
    m, mp, mpp = (_as_angular_momentum(name, v) for name, v in (("m", m), ("mp", mp), ("mpp", mpp)))
    if not _valid_vector_channel(j, l, m):
        raise ValueError(f"invalid vector channel (j={j}, l={l}, m={m})")
    if not _valid_vector_channel(jpp, lpp, mpp):
        raise ValueError(f"invalid vector channel (j={jpp}, l={lpp}, m={mpp})")
    if abs(mp) > lp:
        raise ValueError(f"|mp| must not exceed lp, got mp={mp} for lp={lp}")
    return _vector_coupling_cached(j, l, m, lp, mp, jpp, lpp, mpp)


# Channel bases
@dataclass(frozen=True)
class ChannelBasis:
    """
    Ordered set of scattering channels.

    A scalar basis holds (l, m) for l = 0..lmax; a vector basis holds
    (j, l, m) for j = 0..lmax (read as jmax), l in {j-1, j, j+1} and
    m = -j..j, with j = 0 carrying only l = 1. Ordering is lexicographic in
    the tuple and therefore deterministic.
    """

    kind: BasisKind
    lmax: int
    source_lmax: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("scalar", "vector"):
            raise ValueError(f"basis kind must be 'scalar' or 'vector', got {self.kind!r}")
        if int(self.lmax) != self.lmax or self.lmax < 0:
            raise ValueError(f"basis truncation must be a nonnegative integer, got {self.lmax!r}")
        if int(self.source_lmax) != self.source_lmax or self.source_lmax < 0:
            raise ValueError(f"source_lmax must be a nonnegative integer, got {self.source_lmax!r}")

    @classmethod
    def scalar(cls, lmax: int, source_lmax: int = 0) -> "ChannelBasis":
        return cls("scalar", int(lmax), int(source_lmax))

    @classmethod
    def vector(cls, jmax: int, source_lmax: int = 0) -> "ChannelBasis":
        return cls("vector", int(jmax), int(source_lmax))

    @property
    def jmax(self) -> int:
        return self.lmax

    @cached_property
    def channels(self) -> Tuple[Channel, ...]:
        if self.kind == "scalar":
            return tuple((l, m) for l in range(self.lmax + 1) for m in range(-l, l + 1))
        out: List[VectorChannel] = []
        for j in range(self.lmax + 1):
            for l in (j - 1, j, j + 1):
                if not _valid_vector_channel(j, l, 0):
                    continue
                out.extend((j, l, m) for m in range(-j, j + 1))
        return tuple(out)

    @property
    def dimension(self) -> int:
        return len(self.channels)

    def __len__(self) -> int:
        return self.dimension

    @cached_property
    def _positions(self) -> Mapping[Channel, int]:
        return MappingProxyType({ch: i for i, ch in enumerate(self.channels)})

    def index(self, channel: Channel) -> int:
        try:
            return self._positions[tuple(channel)]
        except KeyError as exc:
            raise ValueError(f"channel {channel!r} is not in this {self.kind} basis") from exc

    def __contains__(self, channel: object) -> bool:
        return isinstance(channel, tuple) and channel in self._positions

    @cached_property
    def ells(self) -> np.ndarray:
        """Orbital index l of every channel, in basis order."""
        pos = 0 if self.kind == "scalar" else 1
        arr = np.array([ch[pos] for ch in self.channels], dtype=int)
        arr.flags.writeable = False
        return arr

    @cached_property
    def ms(self) -> np.ndarray:
        arr = np.array([ch[-1] for ch in self.channels], dtype=int)
        arr.flags.writeable = False
        return arr

    def block(self, j: int, m: int) -> List[int]:
        """Indices of the vector channels sharing (j, m), ordered by l."""
        if self.kind != "vector":
            raise ValueError("blocks by (j, m) are only defined for vector bases")
        return [i for i, (jj, _l, mm) in enumerate(self.channels) if jj == j and mm == m]

    def labels(self) -> List[str]:
        if self.kind == "scalar":
            return [f"l={l},m={m}" for l, m in self.channels]
        return [f"j={j},l={l},m={m}" for j, l, m in self.channels]

    def with_truncation(self, lmax: int) -> "ChannelBasis":
        return ChannelBasis(self.kind, int(lmax), self.source_lmax)

    def metadata(self) -> BasisMetadata:
        return {
            "kind": self.kind,
            "truncation": self.lmax,
            "source_lmax": self.source_lmax,
            "dimension": self.dimension,
            "channels": [list(ch) for ch in self.channels],
        }


def source_keys(source_lmax: int) -> Tuple[SourceKey, ...]:
    """All (l', m') moments up to source_lmax."""
    return tuple((l, m) for l in range(source_lmax + 1) for m in range(-l, l + 1))


# Coupling tensors
@dataclass(frozen=True, eq=False)
class CouplingTensor:
    """
    Precomputed coupling coefficients for one (basis, source pattern) pair.

    ``entries[(lp, mp)]`` is the real matrix whose (row, column) element is
    the coupling of column channel ``basis.channels[column]`` into row channel
    ``out_basis.channels[row]`` through the moment (lp, mp).
    """

    basis: ChannelBasis
    out_basis: ChannelBasis
    entries: Mapping[SourceKey, np.ndarray]
    _stack: np.ndarray = field(repr=False, compare=False)

    @property
    def keys(self) -> Tuple[SourceKey, ...]:
        return tuple(self.entries.keys())

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.out_basis.dimension, self.basis.dimension)

    def contract(self, moments: Mapping[SourceKey, complex]) -> np.ndarray:
        """
        Sum of moment value times coupling matrix over the source pattern.

        Moments outside the pattern raise ValueError; missing ones count as 0.
        """
        unknown = set(moments) - set(self.entries)
        if unknown:
            raise ValueError(f"source moments {sorted(unknown)} are not covered by this coupling tensor")
        values = np.array([moments.get(key, 0.0) for key in self.entries], dtype=complex)
        if values.size == 0:
            return np.zeros(self.shape, dtype=complex)
        return np.tensordot(values, self._stack, axes=1)

    def contract_stacked(self, moment_rows: np.ndarray) -> np.ndarray:
        """
        Contract several sets of moment values at once.

        Args:
            moment_rows: Array of shape (n, len(keys)) in key order.
        Returns:
            Array of shape (n, rows, columns).
        """
        moment_rows = np.asarray(moment_rows, dtype=complex)
        if self._stack.shape[0] == 0:
            return np.zeros((moment_rows.shape[0],) + self.shape, dtype=complex)
        return np.tensordot(moment_rows, self._stack, axes=([1], [0]))


def _coupling_matrix(basis: ChannelBasis, out_basis: ChannelBasis, key: SourceKey) -> np.ndarray:
    lp, mp = key
    matrix = np.zeros((out_basis.dimension, basis.dimension))
    rows_by_m: Dict[int, List[Tuple[int, Channel]]] = {}
    for row, channel in enumerate(out_basis.channels):
        rows_by_m.setdefault(channel[-1], []).append((row, channel))

    for col, channel in enumerate(basis.channels):
        m = channel[-1]
        for row, target in rows_by_m.get(m + mp, ()):
            if basis.kind == "scalar":
                l = channel[0]
                lpp, mpp = target
                value = _scalar_coupling_cached(l, m, lp, mp, lpp, mpp)
            else:
                j, l, _ = channel
                jpp, lpp, mpp = target
                value = _vector_coupling_cached(j, l, m, lp, mp, jpp, lpp, mpp)
            if value != 0.0:
                matrix[row, col] = value
    matrix.flags.writeable = False
    return matrix


@lru_cache(maxsize=64)
def _build_coupling_tensor_cached(
    basis: ChannelBasis, keys: Tuple[SourceKey, ...], out_basis: ChannelBasis
) -> CouplingTensor:
    logger.info(
        "Building %s coupling tensor: %d -> %d channels, %d source moments",
        basis.kind, basis.dimension, out_basis.dimension, len(keys),
    )
    entries = {key: _coupling_matrix(basis, out_basis, key) for key in keys}
    if entries:
        stack = np.stack([entries[key] for key in keys])
    else:
        stack = np.zeros((0, out_basis.dimension, basis.dimension))
    stack.flags.writeable = False
    return CouplingTensor(basis, out_basis, MappingProxyType(entries), stack)


def build_coupling_tensor(
    basis: ChannelBasis,
    moment_keys: Optional[Iterable[SourceKey]] = None,
    out_basis: Optional[ChannelBasis] = None,
) -> CouplingTensor:
    """
    Build (or fetch from cache) the coupling tensor of a basis.

    Args:
        basis: Column basis.
        moment_keys: Source sparsity pattern; defaults to every (l', m') with
            l' <= basis.source_lmax.
        out_basis: Row basis of the same kind; defaults to ``basis``. A larger
            row basis gives the rectangular tensors used to multiply a field by
            a source without truncating the product.
    Returns:
        An immutable CouplingTensor.
    """
    out_basis = basis if out_basis is None else out_basis
    if out_basis.kind != basis.kind:
        raise ValueError(f"cannot couple a {basis.kind} basis into a {out_basis.kind} basis")
    if moment_keys is None:
        keys = source_keys(basis.source_lmax)
    else:
        keys = tuple(sorted({(int(l), int(m)) for l, m in moment_keys}))
    for lp, mp in keys:
        if lp < 0 or abs(mp) > lp:
            raise ValueError(f"invalid source moment (l={lp}, m={mp})")
    return _build_coupling_tensor_cached(basis, keys, out_basis)


# Spherical harmonics
def spherical_harmonic(l: int, m: int, theta: ArrayLike, phi: ArrayLike) -> np.ndarray:
    """
    Condon-Shortley spherical harmonic Y_l^m at polar angle theta and
    azimuth phi. Returns zero for |m| > l.
    """
    if abs(m) > l:
        return np.zeros(np.broadcast(np.asarray(theta), np.asarray(phi)).shape, dtype=complex)
    if sph_harm_y is not None:
        return np.asarray(sph_harm_y(l, m, theta, phi), dtype=complex)
    return np.asarray(sph_harm(m, l, phi, theta), dtype=complex)


def vector_spherical_harmonic(j: int, l: int, m: int, theta: ArrayLike, phi: ArrayLike) -> np.ndarray:
    """
    Vector spherical harmonic Y^l_{jm}(theta, phi) in Cartesian components.

        Y^l_{jm} = sum over s of <l, m-s; 1, s | j, m> Y_l^{m-s} e_s

    Returns:
        Complex array of shape broadcast(theta, phi).shape + (3,).
    Raises:
        ValueError: If (j, l, m) is not a vector channel.
    """
    j, l = _validate_js(j=j, l=l)
    m = _as_angular_momentum("m", m)
    if not _valid_vector_channel(j, l, m):
        raise ValueError(f"invalid vector spherical harmonic (j={j}, l={l}, m={m})")

    theta_arr, phi_arr = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    out = np.zeros(theta_arr.shape + (3,), dtype=complex)
    for sigma, unit in _SPHERICAL_UNIT_VECTORS.items():
        if abs(m - sigma) > l:
            continue
        coeff = clebsch_gordan(l, m - sigma, 1, sigma, j, m)
        if coeff == 0.0:
            continue
        out += coeff * spherical_harmonic(l, m - sigma, theta_arr, phi_arr)[..., None] * unit
    return out


def transverse_weights(j: int) -> Tuple[float, float]:
    """(sqrt((j+1)/(2j+1)), sqrt(j/(2j+1)))."""
    return math.sqrt((j + 1) / (2 * j + 1)), math.sqrt(j / (2 * j + 1))


def transverse_coefficients(kind: Literal["M", "N", "L"], j: int) -> Dict[int, float]:
    """
    Weights over the orbital index l of the asymptotic M, N and L
    combinations of Y^l_{jm}: M = Y^j, N = a Y^{j-1} + b Y^{j+1},
    L = b Y^{j-1} - a Y^{j+1} (= r_hat Y_{jm}). The three weight vectors are
    orthonormal.
    """
    if kind not in _TRANSVERSE_KINDS:
        raise ValueError(f"kind must be one of {_TRANSVERSE_KINDS}, got {kind!r}")
    if j == 0:
        if kind != "L":
            raise ValueError(f"the {kind} combination needs j >= 1")
        return {1: -1.0}
    if kind == "M":
        return {j: 1.0}
    a, b = transverse_weights(j)
    if kind == "N":
        return {j - 1: a, j + 1: b}
    return {j - 1: b, j + 1: -a}


def transverse_combination(
    kind: Literal["M", "N", "L"], j: int, m: int, theta: ArrayLike, phi: ArrayLike
) -> np.ndarray:
    """
    Transverse (M, N) or longitudinal (L) vector spherical harmonic.

    M is Y^{l=j}; N and L are the orthogonal combinations of Y^{l=j-1} and
    Y^{l=j+1}. L exists for j = 0, where it reduces to -Y^{l=1}_{00}.
    """
    if kind not in _TRANSVERSE_KINDS:
        raise ValueError(f"kind must be one of {_TRANSVERSE_KINDS}, got {kind!r}")
    (j,) = _validate_js(j=j)
    if j == 0 and kind != "L":
        raise ValueError(f"the {kind} combination needs j >= 1")
    if abs(m) > j:
        raise ValueError(f"|m| must not exceed j, got m={m} for j={j}")

    out = np.zeros(np.broadcast(np.asarray(theta), np.asarray(phi)).shape + (3,), dtype=complex)
    for l, weight in transverse_coefficients(kind, j).items():
        out += weight * vector_spherical_harmonic(j, l, m, theta, phi)
    return out


# Quadrature
@lru_cache(maxsize=8)
def _quadrature_cached(n_theta: int, n_phi: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    weights = np.repeat(w[:, None], n_phi, axis=1) * (2.0 * np.pi / n_phi)
    for arr in (tt, pp, weights):
        arr.flags.writeable = False
    return tt, pp, weights


def angular_quadrature(n_theta: int = 64, n_phi: int = 128) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes in cos(theta) times a uniform trapezoid rule in phi.

    Returns:
        (theta, phi, weights) as 2-D arrays of shape (n_theta, n_phi); the
        weights sum to 4*pi.
    """
    if n_theta < 1 or n_phi < 1:
        raise ValueError("quadrature needs at least one node in each angle")
    return _quadrature_cached(int(n_theta), int(n_phi))


def basis_functions(basis: ChannelBasis, theta: ArrayLike, phi: ArrayLike) -> np.ndarray:
    """
    Angular functions of every channel of a basis, stacked along axis 0.

    Scalar bases give shape (dim,) + grid; vector bases (dim,) + grid + (3,).
    """
    if basis.kind == "scalar":
        return np.stack([spherical_harmonic(l, m, theta, phi) for l, m in basis.channels])
    return np.stack([vector_spherical_harmonic(j, l, m, theta, phi) for j, l, m in basis.channels])


def project_channels(
    values: Sequence[np.ndarray] | np.ndarray,
    basis: ChannelBasis,
    theta: np.ndarray,
    phi: np.ndarray,
    weights: np.ndarray,
) -> np.ndarray:
    """
    Project sampled angular functions onto a channel basis by quadrature.

    Args:
        values: Array of shape (n,) + grid (scalar) or (n,) + grid + (3,)
            (vector) holding n sampled functions.
    Returns:
        Coefficients of shape (dim, n).
    """
    funcs = basis_functions(basis, theta, phi)
    values = np.asarray(values)
    if basis.kind == "scalar":
        return np.einsum("a...,n...,...->an", funcs.conj(), values, weights)
    return np.einsum("a...c,n...c,...->an", funcs.conj(), values, weights)
