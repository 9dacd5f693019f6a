"""
Radial differential operators over scalar and vector channel bases.

Scalar fields are expanded as f = sum (psi_lm(r)/r) Y_lm and vector fields as
E = sum (psi_jlm(r)/r) Y^l_jm. Every operator here maps the radial
coefficient vector psi to the coefficient vector of the result in the same
1/r representation, as psi -> A psi' + B psi with r-dependent matrices A and
B. Gradient, divergence and curl have constant A and B = C/r; multiplication
by the permittivity has A = 0 and B from the coupling tensors. Composing them
gives the coefficients of the generalized Helmholtz operator

    O E = curl curl E - eps grad div (eps E) - k^2 eps E

as O psi = c2 psi'' + c1 psi' + c0 psi, from which the Maxwell engine reads
d2 = -c2, d1 = c1 and d0 = c0, so that psi'' = D1 psi' + D0 psi with
D1 = d2^{-1} d1 and D0 = d2^{-1} d0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from angular_coupling import ChannelBasis, SourceKey, build_coupling_tensor, transverse_weights
from config import Config
from source_models import MultipoleField

logger = logging.getLogger(__name__)

# Type aliases
MomentJet = Tuple[Dict[SourceKey, complex], ...]


class OperatorAssemblyError(np.linalg.LinAlgError):
    """Raised when the leading coefficient d2 of the assembled operator is singular."""

    def __init__(self, condition: float, r: float):
        super().__init__(
            f"d2 condition number {condition:.3g} at r={r:.6g} exceeds {Config.CONDITION_LIMIT:.3g}; "
            "the internal truncation is inconsistent with the basis"
        )
        self.condition = condition
        self.r = r


def _sum(x: Optional[np.ndarray], y: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if x is None or y is None:
        return None
    return x + y


# Coefficient jets
@dataclass(frozen=True)
class CoefficientJet:
    """
    A matrix-valued function of r at one radius, with its first two
    derivatives. A derivative of None is unknown; it stays unknown through
    sums and products.
    """

    value: np.ndarray
    first: Optional[np.ndarray] = None
    second: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, value: np.ndarray) -> "CoefficientJet":
        value = np.asarray(value, dtype=complex)
        zero = np.zeros_like(value)
        return cls(value, zero, zero)

    @classmethod
    def over_r(cls, coefficient: np.ndarray, r: float) -> "CoefficientJet":
        """C/r and its derivatives."""
        c = np.asarray(coefficient, dtype=complex)
        return cls(c / r, -c / r**2, 2.0 * c / r**3)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def derivative(self) -> "CoefficientJet":
        if self.first is None:
            raise ValueError("the first derivative of this coefficient is unknown")
        return CoefficientJet(self.first, self.second, None)

    def scaled(self, factor: complex) -> "CoefficientJet":
        return CoefficientJet(
            factor * self.value,
            None if self.first is None else factor * self.first,
            None if self.second is None else factor * self.second,
        )

    def __add__(self, other: "CoefficientJet") -> "CoefficientJet":
        return CoefficientJet(self.value + other.value, _sum(self.first, other.first), _sum(self.second, other.second))

    def __neg__(self) -> "CoefficientJet":
        return self.scaled(-1.0)

    def __sub__(self, other: "CoefficientJet") -> "CoefficientJet":
        return self + (-other)

    def __matmul__(self, other: "CoefficientJet") -> "CoefficientJet":
        value = self.value @ other.value
        first = None
        if self.first is not None and other.first is not None:
            first = self.first @ other.value + self.value @ other.first
        second = None
        if first is not None and self.second is not None and other.second is not None:
            second = self.second @ other.value + 2.0 * (self.first @ other.first) + self.value @ other.second
        return CoefficientJet(value, first, second)


# Block operators
@dataclass(frozen=True)
class SecondOrderBlockOperator:
    """psi -> second psi'' + first psi' + zeroth psi from in_basis into out_basis at one radius."""

    in_basis: ChannelBasis
    out_basis: ChannelBasis
    second: CoefficientJet
    first: CoefficientJet
    zeroth: CoefficientJet

    def _check_compatible(self, other: "SecondOrderBlockOperator") -> None:
        if other.in_basis != self.in_basis or other.out_basis != self.out_basis:
            raise ValueError("cannot add operators between different bases")

    def __add__(self, other: "SecondOrderBlockOperator") -> "SecondOrderBlockOperator":
        self._check_compatible(other)
        return SecondOrderBlockOperator(
            self.in_basis, self.out_basis,
            self.second + other.second, self.first + other.first, self.zeroth + other.zeroth,
        )

    def __sub__(self, other: "SecondOrderBlockOperator") -> "SecondOrderBlockOperator":
        self._check_compatible(other)
        return SecondOrderBlockOperator(
            self.in_basis, self.out_basis,
            self.second - other.second, self.first - other.first, self.zeroth - other.zeroth,
        )

    def plus_multiplication(self, jet: CoefficientJet) -> "SecondOrderBlockOperator":
        """self + (multiplication by jet)."""
        return SecondOrderBlockOperator(self.in_basis, self.out_basis, self.second, self.first, self.zeroth + jet)

    def apply(self, psi: np.ndarray, dpsi: np.ndarray, d2psi: np.ndarray) -> np.ndarray:
        return self.second.value @ d2psi + self.first.value @ dpsi + self.zeroth.value @ psi


@dataclass(frozen=True)
class FirstOrderBlockOperator:
    """psi -> slope psi' + offset psi from in_basis into out_basis at one radius."""

    in_basis: ChannelBasis
    out_basis: ChannelBasis
    slope: CoefficientJet
    offset: CoefficientJet

    @classmethod
    def multiplication(cls, in_basis: ChannelBasis, out_basis: ChannelBasis, jet: CoefficientJet) -> "FirstOrderBlockOperator":
        return cls(in_basis, out_basis, CoefficientJet.constant(np.zeros(jet.shape)), jet)

    def left_multiply(self, jet: CoefficientJet, out_basis: ChannelBasis) -> "FirstOrderBlockOperator":
        """(multiplication by jet) o self."""
        return FirstOrderBlockOperator(self.in_basis, out_basis, jet @ self.slope, jet @ self.offset)

    def right_multiply(self, jet: CoefficientJet, in_basis: ChannelBasis) -> "FirstOrderBlockOperator":
        """self o (multiplication by jet): A (M psi)' + B M psi = A M psi' + (A M' + B M) psi."""
        return FirstOrderBlockOperator(
            in_basis, self.out_basis, self.slope @ jet, self.slope @ jet.derivative() + self.offset @ jet
        )

    def compose(self, inner: "FirstOrderBlockOperator") -> SecondOrderBlockOperator:
        """
        self o inner for self = (A2, B2) and inner = (A1, B1):

            A2 A1 psi'' + (A2 A1' + A2 B1 + B2 A1) psi' + (A2 B1' + B2 B1) psi.
        """
        if inner.out_basis != self.in_basis:
            raise ValueError("inner operator does not map into this operator's basis")
        a2, b2, a1, b1 = self.slope, self.offset, inner.slope, inner.offset
        return SecondOrderBlockOperator(
            inner.in_basis,
            self.out_basis,
            a2 @ a1,
            a2 @ a1.derivative() + a2 @ b1 + b2 @ a1,
            a2 @ b1.derivative() + b2 @ b1,
        )

    def apply(self, psi: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
        return self.slope.value @ dpsi + self.offset.value @ psi


@dataclass(frozen=True)
class LadderOperator:
    """Constant-coefficient operator psi -> A psi' + (C/r) psi between two bases."""

    name: str
    in_basis: ChannelBasis
    out_basis: ChannelBasis
    slope: np.ndarray
    inverse_r: np.ndarray

    @cached_property
    def _slope_jet(self) -> CoefficientJet:
        return CoefficientJet.constant(self.slope)

    def at(self, r: float) -> FirstOrderBlockOperator:
        if r <= 0:
            raise ValueError(f"{self.name} is only defined for r > 0, got r={r}")
        return FirstOrderBlockOperator(self.in_basis, self.out_basis, self._slope_jet, CoefficientJet.over_r(self.inverse_r, r))


def gradient_ladder(scalar_basis: ChannelBasis, vector_basis: ChannelBasis) -> LadderOperator:
    """
    grad (psi/r Y_jm) = (1/r) [b (psi' + j psi/r) Y^{j-1}_jm - a (psi' - (j+1) psi/r) Y^{j+1}_jm].
    """
    if scalar_basis.kind != "scalar" or vector_basis.kind != "vector":
        raise ValueError("the gradient maps a scalar basis into a vector basis")
    if vector_basis.jmax < scalar_basis.lmax:
        raise ValueError("the vector basis is too small to hold the gradient")
    slope = np.zeros((vector_basis.dimension, scalar_basis.dimension), dtype=complex)
    inverse_r = np.zeros_like(slope)
    for col, (j, m) in enumerate(scalar_basis.channels):
        a, b = transverse_weights(j)
        if j >= 1:
            row = vector_basis.index((j, j - 1, m))
            slope[row, col], inverse_r[row, col] = b, b * j
        row = vector_basis.index((j, j + 1, m))
        slope[row, col], inverse_r[row, col] = -a, a * (j + 1)
    return LadderOperator("gradient", scalar_basis, vector_basis, slope, inverse_r)


def divergence_ladder(vector_basis: ChannelBasis, scalar_basis: ChannelBasis) -> LadderOperator:
    """
    div (psi/r Y^{j+1}_jm) = -(a/r) (psi' + (j+1) psi/r) Y_jm,
    div (psi/r Y^{j-1}_jm) = (b/r) (psi' - j psi/r) Y_jm and
    div (psi/r Y^j_jm) = 0.
    """
    if scalar_basis.kind != "scalar" or vector_basis.kind != "vector":
        raise ValueError("the divergence maps a vector basis into a scalar basis")
    if scalar_basis.lmax < vector_basis.jmax:
        raise ValueError("the scalar basis is too small to hold the divergence")
    slope = np.zeros((scalar_basis.dimension, vector_basis.dimension), dtype=complex)
    inverse_r = np.zeros_like(slope)
    for col, (j, l, m) in enumerate(vector_basis.channels):
        a, b = transverse_weights(j)
        row = scalar_basis.index((j, m))
        if l == j + 1:
            slope[row, col], inverse_r[row, col] = -a, -a * (j + 1)
        elif l == j - 1:
            slope[row, col], inverse_r[row, col] = b, -b * j
    return LadderOperator("divergence", vector_basis, scalar_basis, slope, inverse_r)


def curl_ladder(vector_basis: ChannelBasis) -> LadderOperator:
    """
    Curl within a vector basis; it conserves (j, m) and swaps l = j with
    l = j +- 1:

        Y^{j+1} -> i b (psi' + (j+1) psi/r) Y^j
        Y^j     -> i b (psi' - (j+1) psi/r) Y^{j+1} + i a (psi' + j psi/r) Y^{j-1}
        Y^{j-1} -> i a (psi' - j psi/r) Y^j
    """
    if vector_basis.kind != "vector":
        raise ValueError("the curl needs a vector basis")
    slope = np.zeros((vector_basis.dimension, vector_basis.dimension), dtype=complex)
    inverse_r = np.zeros_like(slope)

    def put(target: Tuple[int, int, int], col: int, a_coeff: complex, c_coeff: complex) -> None:
        row = vector_basis.index(target)
        slope[row, col], inverse_r[row, col] = a_coeff, c_coeff

    for col, (j, l, m) in enumerate(vector_basis.channels):
        if j == 0:
            continue
        a, b = transverse_weights(j)
        if l == j + 1:
            put((j, j, m), col, 1j * b, 1j * b * (j + 1))
        elif l == j:
            put((j, j + 1, m), col, 1j * b, -1j * b * (j + 1))
            put((j, j - 1, m), col, 1j * a, 1j * a * j)
        else:
            put((j, j, m), col, 1j * a, -1j * a * j)
    return LadderOperator("curl", vector_basis, vector_basis, slope, inverse_r)


# Operator blocks
@dataclass(frozen=True)
class OperatorBlocks:
    """
    Gradient, divergence and curl blocks of a vector basis, with the
    extended bases the eps grad div eps pathway passes through.

    Attributes:
        basis: Vector basis of the solution (j <= jmax).
        extended: Vector basis holding eps E without truncation.
        scalar: Scalar basis holding div (eps E).
        source_lmax: Largest source multipole the blocks can handle.
    """

    basis: ChannelBasis
    extended: ChannelBasis
    scalar: ChannelBasis
    source_lmax: int
    grad: LadderOperator
    div: LadderOperator
    curl: LadderOperator

    def _check_source(self, field_: MultipoleField) -> None:
        if field_.source_lmax > self.source_lmax:
            raise ValueError(
                f"source multipoles up to l={field_.source_lmax} need blocks built for source_lmax >= "
                f"{field_.source_lmax}, got {self.source_lmax}"
            )

    def epsilon_jet(
        self,
        field_: MultipoleField,
        moments: MomentJet,
        in_basis: ChannelBasis,
        out_basis: ChannelBasis,
    ) -> CoefficientJet:
        """Multiplication by the source, from in_basis into out_basis, with its radial derivatives."""
        self._check_source(field_)
        tensor = build_coupling_tensor(in_basis, field_.coupling_keys(), out_basis)
        return CoefficientJet(*(tensor.contract(values) for values in moments))

    def epsilon_mul(self, field_: MultipoleField, r: float, out_basis: Optional[ChannelBasis] = None) -> FirstOrderBlockOperator:
        out_basis = out_basis or self.basis
        jet = self.epsilon_jet(field_, field_.moment_jet(r), self.basis, out_basis)
        return FirstOrderBlockOperator.multiplication(self.basis, out_basis, jet)

    def scalar_epsilon_mul(self, field_: MultipoleField, r: float) -> FirstOrderBlockOperator:
        jet = self.epsilon_jet(field_, field_.moment_jet(r), self.scalar, self.scalar)
        return FirstOrderBlockOperator.multiplication(self.scalar, self.scalar, jet)


def build_operator_blocks(
    basis: ChannelBasis,
    scalar_lmax: Optional[int] = None,
    source_lmax: Optional[int] = None,
) -> OperatorBlocks:
    """
    Build the operator blocks of a vector basis.

    Args:
        basis: Vector basis; its source_lmax is the default source range.
        scalar_lmax: Internal scalar (and extended vector) truncation;
            defaults to jmax + source_lmax + 1.
        source_lmax: Largest source multipole, if larger than the basis'.
    Raises:
        ValueError: For a scalar basis or an internal truncation too small
            to hold eps E.
    """
    if basis.kind != "vector":
        raise ValueError("operator blocks need a vector basis")
    source_lmax = max(basis.source_lmax, source_lmax or 0)
    required = basis.jmax + source_lmax + 1
    scalar_lmax = required if scalar_lmax is None else int(scalar_lmax)
    if scalar_lmax < required:
        raise ValueError(
            f"internal truncation {scalar_lmax} is below jmax + source_lmax + 1 = {required}"
        )
    extended = ChannelBasis.vector(scalar_lmax, source_lmax)
    scalar = ChannelBasis.scalar(scalar_lmax, source_lmax)
    logger.info(
        "Building operator blocks: jmax=%d, internal truncation %d (%d vector, %d scalar channels)",
        basis.jmax, scalar_lmax, extended.dimension, scalar.dimension,
    )
    return OperatorBlocks(
        basis,
        extended,
        scalar,
        source_lmax,
        gradient_ladder(scalar, extended),
        divergence_ladder(extended, scalar),
        curl_ladder(basis),
    )


# Generalized Helmholtz operator
class OperatorTriple(NamedTuple):
    """
    Coefficients of the generalized Helmholtz operator at one (k, r).

    d2 psi'' = d1 psi' + d0 psi, reduced to psi'' = D1 psi' + D0 psi;
    D1_prime is the radial derivative of D1.
    """

    d2: np.ndarray
    d1: np.ndarray
    d0: np.ndarray
    D1: np.ndarray
    D0: np.ndarray
    D1_prime: np.ndarray
    condition: float


def generalized_operator(field_: MultipoleField, blocks: OperatorBlocks, k: complex, r: float) -> SecondOrderBlockOperator:
    """curl curl - eps grad div eps - k^2 eps as a second-order block operator on blocks.basis."""
    if field_.kind != "permittivity":
        raise ValueError(f"the Maxwell operator needs a permittivity source, got {field_.kind}")
    basis, extended = blocks.basis, blocks.extended
    moments = field_.moment_jet(r)
    eps_in = blocks.epsilon_jet(field_, moments, basis, extended)
    eps_out = blocks.epsilon_jet(field_, moments, extended, basis)
    eps_same = blocks.epsilon_jet(field_, moments, basis, basis)

    curl = blocks.curl.at(r)
    gauge = blocks.grad.at(r).left_multiply(eps_out, basis).compose(blocks.div.at(r).right_multiply(eps_in, basis))
    return (curl.compose(curl) - gauge).plus_multiplication(eps_same.scaled(-complex(k) ** 2))


def assemble_generalized_operator(field_: MultipoleField, blocks: OperatorBlocks, k: complex, r: float) -> OperatorTriple:
    """
    Assemble (d2, d1, d0) and the reduced (D1, D0, D1') at one radius.

    d2 is factored once and reused for every reduced coefficient;
    D1' = d2^{-1} (d1' - d2' D1).

    Raises:
        ValueError: For a non-permittivity source or r <= 0.
        OperatorAssemblyError: If d2 is numerically singular.
    """
    operator = generalized_operator(field_, blocks, k, r)
    d2 = -operator.second.value
    d2_prime = -operator.second.first
    d1, d1_prime, d0 = operator.first.value, operator.first.first, operator.zeroth.value
    condition = float(np.linalg.cond(d2))
    if not np.isfinite(condition) or condition > Config.CONDITION_LIMIT:
        raise OperatorAssemblyError(condition, r)
    logger.debug("d2 condition number %.3g at r=%.6g", condition, r)
    factors = lu_factor(d2)
    D1 = lu_solve(factors, d1)
    D0 = lu_solve(factors, d0)
    D1_prime = lu_solve(factors, d1_prime - d2_prime @ D1)
    return OperatorTriple(d2, d1, d0, D1, D0, D1_prime, condition)


def operator_residual(triple: OperatorTriple, psi: Sequence[np.ndarray]) -> float:
    """
    Relative residual of d2 psi'' - d1 psi' - d0 psi for a (psi, psi',
    psi'') triple of coefficient vectors or matrices.
    """
    value, first, second = (np.asarray(p) for p in psi)
    lhs = triple.d2 @ second
    rhs = triple.d1 @ first + triple.d0 @ value
    scale = np.linalg.norm(lhs) + np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs) / scale) if scale else 0.0
