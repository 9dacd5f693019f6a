"""
Electromagnetic S-matrix of a position-dependent permittivity.

The generalized Helmholtz operator assembled in vector_operators turns
Maxwell's equations into psi'' = D1 psi' + D0 psi over a vector basis, and
the reduced-equation machinery of helmholtz_vpm integrates it exactly as for
a potential. With D1 != 0 the r-independent bilinear form picks up a
-Phi^t D1 F term (the modified Wronskian). Only the transverse M and N waves
are physical, so the fitted S-matrix is also reported projected onto them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from angular_coupling import ChannelBasis, transverse_coefficients
from config import Config
from helmholtz_vpm import (
    IntegrationRadii,
    RadialCoefficients,
    RadialEquation,
    ScatteringResult,
    _log_result,
    eigen_decomposition,
    fitted_s_matrix,
    integrate_through,
    reduced_outgoing_rhs,
    reduced_regular_rhs,
    s_from_wronskians,
    unitarity_residual,
    wronskian,
)
from matrix_ode import MatrixState, SecondOrderRhs
from radial_waves import FreeWaveMatrix, small_r_ratio_limit
from source_models import MultipoleField
from vector_operators import OperatorBlocks, OperatorTriple, assemble_generalized_operator, build_operator_blocks

logger = logging.getLogger(__name__)

# Type aliases
TripleProvider = Callable[[float], OperatorTriple]

# Constants
_TRANSVERSE_KINDS = ("M", "N")
_INV_SQRT_TWO_PI = 1.0 / math.sqrt(2.0 * math.pi)


def coefficients_from_triple(triple: OperatorTriple) -> RadialCoefficients:
    return RadialCoefficients(triple.D0, triple.D1, triple.D1_prime)


class MaxwellEquation(RadialEquation):
    """Generalized Helmholtz equation of a permittivity over a vector basis."""

    engine = "maxwell"

    def __init__(
        self,
        field_: MultipoleField,
        basis: ChannelBasis,
        k: complex,
        blocks: Optional[OperatorBlocks] = None,
    ):
        if basis.kind != "vector":
            raise ValueError("the Maxwell engine needs a vector basis")
        super().__init__(basis, k)
        if field_.kind != "permittivity":
            raise ValueError(f"the Maxwell engine needs a permittivity source, got {field_.kind}")
        self.field = field_
        self.blocks = blocks if blocks is not None else build_operator_blocks(basis, source_lmax=field_.source_lmax)
        if self.blocks.basis != basis:
            raise ValueError("operator blocks were built for a different basis")

    def triple(self, r: float) -> OperatorTriple:
        return assemble_generalized_operator(self.field, self.blocks, self.k, r)

    def coefficients(self, r: float) -> RadialCoefficients:
        return coefficients_from_triple(self.triple(r))

    def reflected(self) -> "MaxwellEquation":
        return MaxwellEquation(self.field, self.basis, -self.k, self.blocks)


def maxwell_outgoing_rhs(k: complex, triple_provider: TripleProvider, basis: ChannelBasis) -> SecondOrderRhs:
    """
    Right-hand side of

        -G'' + (D1 G - 2 G') D + D1 G' + (D0 + k^2) G - G L^2/r^2 = 0,

    D = d/dr log W, for the outgoing solution F = G W with G(inf) = 1,
    G'(inf) = 0.
    """
    free = FreeWaveMatrix(basis, k)
    return reduced_outgoing_rhs(free, lambda r: coefficients_from_triple(triple_provider(r)))


def maxwell_regular_rhs(k: complex, triple_provider: TripleProvider, basis: ChannelBasis) -> SecondOrderRhs:
    """
    Right-hand side for the regular row solution W^{-1} H of the adjoint
    equation, including the D H D1 - H' D1 - H D1' terms.
    """
    free = FreeWaveMatrix(basis, k)
    return reduced_regular_rhs(free, lambda r: coefficients_from_triple(triple_provider(r)))


def modified_wronskian(
    regular_state: MatrixState,
    outgoing_state: MatrixState,
    D1: np.ndarray,
    free: FreeWaveMatrix,
    r: float,
) -> np.ndarray:
    """Phi^t F' - Phi^t' F - Phi^t D1 F; independent of r along Maxwell solutions."""
    return wronskian(regular_state, outgoing_state, free, r, d1=D1)


# Transverse projection
def transverse_basis(basis: ChannelBasis) -> Tuple[np.ndarray, List[str]]:
    """
    Orthonormal columns spanning the outgoing M and N waves of every
    (j >= 1, m), with their labels.

    Channel l of the outgoing wave carries x h_l(x) ~ (-i)^(l+1) e^{ix}, so
    the angular weights of transverse_coefficients are multiplied by
    i^(l - j) to keep the asymptotic field perpendicular to r_hat.
    """
    if basis.kind != "vector":
        raise ValueError("transverse projection needs a vector basis")
    columns: List[np.ndarray] = []
    labels: List[str] = []
    for j in range(1, basis.jmax + 1):
        for m in range(-j, j + 1):
            for kind in _TRANSVERSE_KINDS:
                column = np.zeros(basis.dimension, dtype=complex)
                for l, weight in transverse_coefficients(kind, j).items():
                    column[basis.index((j, l, m))] = weight * 1j ** (l - j)
                columns.append(column)
                labels.append(f"j={j},{kind},m={m}")
    if not columns:
        return np.zeros((basis.dimension, 0), dtype=complex), labels
    return np.stack(columns, axis=1), labels


def transverse_projector(basis: ChannelBasis) -> np.ndarray:
    """Orthogonal projector onto the transverse waves: rank 2 per (j >= 1, m), zero on j = 0."""
    q, _ = transverse_basis(basis)
    return q @ q.conj().T


def maxwell_s_matrix(
    field_: MultipoleField,
    basis: ChannelBasis,
    k: complex,
    r0: Optional[float] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    trace: bool = False,
    blocks: Optional[OperatorBlocks] = None,
    log: bool = False,
    log_level: int = logging.INFO,
    logger_override: Optional[logging.Logger] = None,
) -> ScatteringResult:
    """
    Electromagnetic S-matrix by modified-Wronskian fitting at r0.

    The full-basis S is kept in ``S``; the physical S projected onto the
    transverse waves is ``transverse_S`` and carries the eigenphases. The
    commutator ||[S, P]||_2 is recorded as a diagnostic and logged as a
    warning above Config.COMMUTATOR_TOL.

    Args:
        field_: Permittivity source.
        basis: Vector basis with jmax >= 1.
        blocks: Precomputed operator blocks to share across k.
        log: If True, log a one-line summary of the result.
        log_level: Logging level to use when log is True.
        logger_override: Optional logger instance to use instead of module logger.
    Raises:
        IllConditionedFitError: If the modified Wronskian cannot be inverted.
        OperatorAssemblyError: If d2 turns singular.
        IntegrationError: Propagated from the ODE solver.
    """
    if basis.kind != "vector" or basis.jmax < 1:
        raise ValueError("the Maxwell S-matrix needs a vector basis with jmax >= 1")
    radii = IntegrationRadii.for_source(k, field_.support_radius, r0)
    equation = MaxwellEquation(field_, basis, k, blocks)
    logger.info("Solving Maxwell problem at k=%s (jmax=%d, %d channels)", k, basis.jmax, basis.dimension)
    S, diagnostics, traces = fitted_s_matrix(equation, radii, rtol, atol, trace)

    q, labels = transverse_basis(basis)
    projector = q @ q.conj().T
    transverse_S = q.conj().T @ S @ q
    commutator = float(np.linalg.norm(S @ projector - projector @ S, 2))
    diagnostics["commutator"] = commutator
    diagnostics["transverse_unitarity"] = unitarity_residual(transverse_S)
    if commutator > Config.COMMUTATOR_TOL:
        logger.warning(
            "S-matrix does not commute with the transverse projector at k=%s: ||[S, P]|| = %.3g",
            k, commutator,
        )

    phases, values, eigen_labels = eigen_decomposition(transverse_S, labels)
    result = ScatteringResult(
        complex(k), basis, S, phases, values, eigen_labels, diagnostics, "maxwell", traces, transverse_S, labels
    )
    _log_result(result, log, log_level, logger_override)
    return result


# Wavefunction reconstruction
@dataclass
class Wavefunction:
    """
    Normalized physical wavefunction matrix on a radial grid.

    Attributes:
        r: Grid radii, ascending.
        values: (n_r, dim, dim) matrices; the outer branch for r >= r0 and
            the inner branch below.
        eigenvalues: (n_r, dim) eigenvalues of each matrix, by decreasing modulus.
        derivative_mismatch: Relative jump of the radial derivative at r0.
    """

    r: np.ndarray
    values: np.ndarray
    eigenvalues: np.ndarray
    r0: float
    S: np.ndarray
    derivative_mismatch: float


def _sorted_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    values = np.linalg.eigvals(matrix)
    return values[np.argsort(-np.abs(values), kind="stable")]


def reconstruct_wavefunction(
    field_: MultipoleField,
    basis: ChannelBasis,
    k: complex,
    r_grid: Sequence[float],
    r0: Optional[float] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    blocks: Optional[OperatorBlocks] = None,
) -> Wavefunction:
    """
    Rebuild the normalized wavefunction from the variable-phase solutions.

    Outside r0 it is (1/sqrt(2 pi)) (F_k S - F_{-k} M) P with F = G W; inside
    it is W^{-1} H C, with the constant matrix C fixed by equating the two
    branches at r0.

    Raises:
        ValueError: For grid points outside (r_small, r_big).
        numpy.linalg.LinAlgError: If the matching system at r0 is singular.
    """
    grid = np.unique(np.asarray(r_grid, dtype=float))
    radii = IntegrationRadii.for_source(k, field_.support_radius, r0)
    if grid.size == 0 or grid[0] <= radii.r_small or grid[-1] >= radii.r_big:
        raise ValueError(f"grid radii must lie inside ({radii.r_small}, {radii.r_big})")
    equation = MaxwellEquation(field_, basis, k, blocks)
    reflected = equation.reflected()
    dim = basis.dimension
    unit = (np.eye(dim, dtype=complex), np.zeros((dim, dim), dtype=complex))
    inner_stops = [r for r in grid if r < radii.r0] + [radii.r0]
    outer_stops = [r for r in grid[::-1] if r > radii.r0] + [radii.r0]

    regular, _ = integrate_through(
        equation.regular_rhs(), equation.free.regular_state(radii.r_small), radii.r_small, inner_stops, rtol, atol, False
    )
    reflected_regular, _ = integrate_through(
        reflected.regular_rhs(), reflected.free.regular_state(radii.r_small), radii.r_small, [radii.r0], rtol, atol, False
    )
    outgoing, _ = integrate_through(equation.outgoing_rhs(), unit, radii.r_big, outer_stops, rtol, atol, False)
    incoming, _ = integrate_through(reflected.outgoing_rhs(), unit, radii.r_big, outer_stops, rtol, atol, False)

    r_fit = radii.r0
    w_plus = modified_wronskian(regular[r_fit], outgoing[r_fit], equation.coefficients(r_fit).d1, equation.free, r_fit)
    w_minus = modified_wronskian(
        reflected_regular[r_fit], incoming[r_fit], reflected.coefficients(r_fit).d1, reflected.free, r_fit
    )
    limit = small_r_ratio_limit(basis)
    S, _ = s_from_wronskians(w_plus, w_minus, limit)
    projector = transverse_projector(basis)

    def outer(r: float) -> Tuple[np.ndarray, np.ndarray]:
        parts = []
        for (g, dg), free in ((outgoing[r], equation.free), (incoming[r], reflected.free)):
            w = free.values(r)
            d = free.log_derivative(r)
            parts.append((g * w[None, :], (dg + g * d[None, :]) * w[None, :]))
        (f_plus, df_plus), (f_minus, df_minus) = parts
        value = _INV_SQRT_TWO_PI * (f_plus @ S - f_minus @ limit) @ projector
        slope = _INV_SQRT_TWO_PI * (df_plus @ S - df_minus @ limit) @ projector
        return value, slope

    def inner(r: float) -> Tuple[np.ndarray, np.ndarray]:
        h, dh = regular[r]
        w = equation.free.values(r)
        d = equation.free.log_derivative(r)
        return h / w[:, None], (dh - d[:, None] * h) / w[:, None]

    outer_value, outer_slope = outer(r_fit)
    inner_value, inner_slope = inner(r_fit)
    matching = np.linalg.solve(inner_value, outer_value)
    scale = float(np.linalg.norm(outer_slope))
    mismatch = float(np.linalg.norm(inner_slope @ matching - outer_slope)) / scale if scale else 0.0
    if mismatch > Config.FIT_TOL:
        logger.info("Wavefunction branches differ in slope at r0=%.4g by %.3g (relative)", r_fit, mismatch)

    values = np.empty((grid.size, dim, dim), dtype=complex)
    for index, r in enumerate(grid):
        if r < r_fit:
            values[index] = inner(r)[0] @ matching
        else:
            values[index] = outer(r)[0]
    eigenvalues = np.stack([_sorted_eigenvalues(v) for v in values])
    return Wavefunction(grid, values, eigenvalues, r_fit, S, mismatch)
