"""
Variable phase S-matrix for the Helmholtz equation with an asymmetric
potential.

The radial problem is written as Phi'' = D1 Phi' + D0 Phi over a channel
basis. Free outgoing waves W(kr) are factored out of the outgoing solution
(F = G W) and of the regular row solution (Phi^t = W^{-1} H), so G and H
carry no oscillations and stay bounded on the imaginary k axis. G is
integrated inward from r_big, H outward from r_small, and the r-independent
Wronskian of the two at a fitting point r0 gives the S-matrix without ever
evaluating an exponentially large free wave.

The reduced-equation machinery here is shared with the Maxwell engine, which
supplies its own (D0, D1, D1') coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, TypedDict, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from angular_coupling import ChannelBasis, CouplingTensor, build_coupling_tensor
from config import Config
from matrix_ode import MatrixState, RadialMatrixSolution, SecondOrderRhs, integrate
from radial_waves import FreeWaveMatrix, small_r_ratio_limit
from source_models import MultipoleField

logger = logging.getLogger(__name__)

# Type aliases
PotentialProvider = Callable[[float], np.ndarray]
Trace = Tuple[np.ndarray, np.ndarray]
FieldLike = Union[MultipoleField, Callable[[complex], MultipoleField]]

# Constants
_FIT_CHECK_FACTOR = 1.4
_AMBIGUITY_MARGIN = 0.1
_DEGENERACY_TOL = 1e-6


class IllConditionedFitError(np.linalg.LinAlgError):
    """
    Raised when a Wronskian matrix is too ill-conditioned to invert.

    Attributes:
        condition: 2-norm condition number of the offending matrix.
    """

    def __init__(self, condition: float, label: str = "Wronskian"):
        super().__init__(
            f"{label} condition number {condition:.3g} exceeds {Config.CONDITION_LIMIT:.3g}; "
            "try moving the fitting point r0"
        )
        self.condition = condition


class RadialCoefficients(NamedTuple):
    """Coefficients of Phi'' = D1 Phi' + D0 Phi at one radius; D1 = None means zero."""

    d0: np.ndarray
    d1: Optional[np.ndarray] = None
    d1_prime: Optional[np.ndarray] = None


class ScatteringDiagnostics(TypedDict, total=False):
    unitarity: float
    fit_sensitivity: float
    condition: float
    condition_reflected: float
    commutator: float
    transverse_unitarity: float
    r_small: float
    r0: float
    r_big: float
    n_steps: int
    method: str


# Radii
@dataclass(frozen=True)
class IntegrationRadii:
    r_small: float
    r0: float
    r_big: float

    def __post_init__(self) -> None:
        if not 0 < self.r_small < self.r0 < self.r_big:
            raise ValueError(
                f"radii must satisfy 0 < r_small < r0 < r_big, got "
                f"r_small={self.r_small}, r0={self.r0}, r_big={self.r_big}"
            )

    @classmethod
    def for_source(cls, k: complex, support_radius: float, r0: Optional[float] = None) -> "IntegrationRadii":
        """
        Default radii: r_small = min(1/|k|, R) * Config.R_SMALL_FACTOR,
        r_big = max(1/|k|, R) * Config.R_BIG_FACTOR and r0 = R/2, where R is
        the source support radius (1/|k| for an empty source).
        """
        scale = 1.0 / abs(complex(k))
        radius = support_radius if support_radius > 0 else scale
        r_small = min(scale, radius) * Config.R_SMALL_FACTOR
        r_big = max(scale, radius) * Config.R_BIG_FACTOR
        return cls(r_small, radius / 2.0 if r0 is None else float(r0), r_big)

    def check_radius(self) -> float:
        """Second fitting point used for the fit-sensitivity diagnostic."""
        candidate = self.r0 * _FIT_CHECK_FACTOR
        return candidate if candidate < self.r_big else self.r0 / _FIT_CHECK_FACTOR


# Radial equations
class RadialEquation:
    """
    Reduced radial equation at one wave number. Subclasses provide the
    coefficients and the same equation at -k.
    """

    engine = "generic"

    def __init__(self, basis: ChannelBasis, k: complex):
        self.basis = basis
        self.k = complex(k)
        self.free = FreeWaveMatrix(basis, self.k)

    def coefficients(self, r: float) -> RadialCoefficients:
        raise NotImplementedError

    def reflected(self) -> "RadialEquation":
        raise NotImplementedError

    def outgoing_rhs(self) -> SecondOrderRhs:
        return reduced_outgoing_rhs(self.free, self.coefficients)

    def regular_rhs(self) -> SecondOrderRhs:
        return reduced_regular_rhs(self.free, self.coefficients)


def assemble_potential_matrix(field_: MultipoleField, tensor: CouplingTensor, r: float) -> np.ndarray:
    """
    V(r)[row, col] = sum over source moments of V_{l'm'}(r) times the
    coupling of channel col into channel row.

    Raises:
        ValueError: For a non-potential field, a rectangular tensor or moments
            the tensor does not cover.
    """
    if field_.kind != "potential":
        raise ValueError(f"expected a potential source, got a {field_.kind} source")
    if tensor.basis != tensor.out_basis:
        raise ValueError("the potential matrix needs a square coupling tensor")
    return tensor.contract(field_.moment_values(r))


def _helmholtz_coefficients(free: FreeWaveMatrix, potential: PotentialProvider) -> Callable[[float], RadialCoefficients]:
    ells = free.basis.ells
    centrifugal = (ells * (ells + 1)).astype(float)
    k2 = free.k**2

    def coefficients(r: float) -> RadialCoefficients:
        if r == 0:
            raise ValueError("the radial equations are singular at r = 0")
        d0 = np.array(potential(r), dtype=complex)
        d0[np.diag_indices_from(d0)] += centrifugal / r**2 - k2
        return RadialCoefficients(d0)

    return coefficients


class HelmholtzEquation(RadialEquation):
    """-Phi'' + (L^2/r^2) Phi + V Phi = k^2 Phi over a scalar or vector basis."""

    engine = "helmholtz"

    def __init__(
        self,
        field_: MultipoleField,
        basis: ChannelBasis,
        k: complex,
        tensor: Optional[CouplingTensor] = None,
    ):
        super().__init__(basis, k)
        if field_.kind != "potential":
            raise ValueError(f"the Helmholtz engine needs a potential source, got {field_.kind}")
        self.field = field_
        self.tensor = tensor if tensor is not None else build_coupling_tensor(basis, field_.coupling_keys())
        if self.tensor.basis != basis:
            raise ValueError("coupling tensor basis does not match the requested basis")
        self._coefficients = _helmholtz_coefficients(self.free, self.potential)

    def potential(self, r: float) -> np.ndarray:
        return assemble_potential_matrix(self.field, self.tensor, r)

    def coefficients(self, r: float) -> RadialCoefficients:
        return self._coefficients(r)

    def reflected(self) -> "HelmholtzEquation":
        return HelmholtzEquation(self.field, self.basis, -self.k, self.tensor)


# Right-hand sides
def reduced_outgoing_rhs(
    free: FreeWaveMatrix, coefficients: Callable[[float], RadialCoefficients]
) -> SecondOrderRhs:
    """
    G'' for F = G W:

        G'' = (D1 G - 2 G') D + D1 G' + (D0 + k^2) G - G L^2/r^2,

    with D = d/dr log W diagonal.
    """
    ells = free.basis.ells
    centrifugal = (ells * (ells + 1)).astype(float)
    k2 = free.k**2

    def rhs(r: float, g: np.ndarray, dg: np.ndarray) -> np.ndarray:
        d = free.log_derivative(r)
        c = coefficients(r)
        out = -2.0 * dg * d[None, :] + c.d0 @ g + k2 * g - g * (centrifugal / r**2)[None, :]
        if c.d1 is not None:
            out += (c.d1 @ g) * d[None, :] + c.d1 @ dg
        return out

    return rhs


def reduced_regular_rhs(
    free: FreeWaveMatrix, coefficients: Callable[[float], RadialCoefficients]
) -> SecondOrderRhs:
    """
    H'' for the row solution Phi^t = W^{-1} H of the adjoint equation
    Psi'' = -(Psi D1)' + Psi D0:

        H'' = 2 D H' + (L^2/r^2 - k^2 - 2 D^2) H + H D0 + D H D1 - H' D1 - H D1'.
    """
    ells = free.basis.ells
    centrifugal = (ells * (ells + 1)).astype(float)
    k2 = free.k**2

    def rhs(r: float, h: np.ndarray, dh: np.ndarray) -> np.ndarray:
        d = free.log_derivative(r)
        c = coefficients(r)
        diagonal = centrifugal / r**2 - k2 - 2.0 * d**2
        out = 2.0 * d[:, None] * dh + diagonal[:, None] * h + h @ c.d0
        if c.d1 is not None:
            out += d[:, None] * (h @ c.d1) - dh @ c.d1
            if c.d1_prime is not None:
                out -= h @ c.d1_prime
        return out

    return rhs


def outgoing_rhs(k: complex, potential: PotentialProvider, basis: ChannelBasis) -> SecondOrderRhs:
    """
    Right-hand side of -G'' - 2 G' D + [L^2, G]/r^2 + V G = 0 for the
    outgoing solution F = G W, with boundary data G(inf) = 1, G'(inf) = 0.

    Raises:
        ValueError: For k = 0, or when evaluated at r = 0.
    """
    free = FreeWaveMatrix(basis, k)
    return reduced_outgoing_rhs(free, _helmholtz_coefficients(free, potential))


def regular_rhs(k: complex, potential: PotentialProvider, basis: ChannelBasis) -> SecondOrderRhs:
    """
    Right-hand side of -H'' + 2 (D H)' - [L^2, H]/r^2 + H V = 0 for the
    regular row solution W^{-1} H.

    Raises:
        ValueError: For k = 0, or when evaluated at r = 0.
    """
    free = FreeWaveMatrix(basis, k)
    return reduced_regular_rhs(free, _helmholtz_coefficients(free, potential))


# Wronskians
def wronskian(
    regular_state: MatrixState,
    outgoing_state: MatrixState,
    free: FreeWaveMatrix,
    r: float,
    d1: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Wronskian Phi^t F' - Phi^t' F - Phi^t D1 F in the conjugated form

        W^{-1} [H (G' + G D) - (H' - D H) G - H D1 G] W,

    which only touches W through its log-derivative and the ratios
    w_j / w_i, so it stays finite on the imaginary axis. Independent of r
    along solutions; -1 for the free problem.
    """
    h, dh = regular_state
    g, dg = outgoing_state
    d = free.log_derivative(r)
    inner = h @ (dg + g * d[None, :]) - (dh - d[:, None] * h) @ g
    if d1 is not None:
        inner = inner - h @ d1 @ g
    return free.conjugate(inner, r)


def check_condition(matrix: np.ndarray, label: str = "Wronskian") -> float:
    """
    Condition number of a matrix about to be inverted.

    Raises:
        IllConditionedFitError: Above Config.CONDITION_LIMIT.
    """
    condition = float(np.linalg.cond(matrix))
    if not np.isfinite(condition) or condition > Config.CONDITION_LIMIT:
        raise IllConditionedFitError(condition, label)
    if condition > Config.CONDITION_WARNING:
        logger.warning("%s condition number %.3g is large; results may lose accuracy", label, condition)
    return condition


def s_from_wronskians(
    w_plus: np.ndarray, w_minus: np.ndarray, limit: np.ndarray
) -> Tuple[np.ndarray, float]:
    """S = W_k^{-1} M W_{-k} M, with M the small-r limit of W(kr)^{-1} W(-kr)."""
    condition = check_condition(w_plus)
    return np.linalg.solve(w_plus, limit @ w_minus @ limit), condition


# Radial solves
@dataclass
class RadialSolve:
    """
    Regular and outgoing states of one equation at a set of fitting radii.

    Attributes:
        regular, outgoing: radius -> (H, H') and (G, G').
        traces: "H" and "G" eigenvalue traces when requested.
    """

    regular: Dict[float, MatrixState]
    outgoing: Dict[float, MatrixState]
    traces: Dict[str, Trace] = field(default_factory=dict)
    n_steps: int = 0


def integrate_through(
    rhs: SecondOrderRhs,
    initial: MatrixState,
    r_start: float,
    stops: Sequence[float],
    rtol: Optional[float],
    atol: Optional[float],
    trace: bool,
) -> Tuple[Dict[float, MatrixState], List[RadialMatrixSolution]]:
    """Integrate from r_start through each stop in turn, restarting exactly at every stop."""
    states: Dict[float, MatrixState] = {}
    pieces: List[RadialMatrixSolution] = []
    state, r = initial, r_start
    max_step = abs(stops[-1] - r_start) * Config.MAX_STEP_FRACTION
    for stop in stops:
        if stop == r:
            states[stop] = state
            continue
        piece = integrate(rhs, state, r, stop, rtol=rtol, atol=atol, max_step=max_step, trace=trace)
        pieces.append(piece)
        state, r = piece.state, stop
        states[stop] = state
    return states, pieces


def _joined_trace(pieces: Sequence[RadialMatrixSolution]) -> Trace:
    arrays = [piece.trace_arrays() for piece in pieces if piece.trace]
    if not arrays:
        return np.empty(0), np.empty((0, 0), dtype=complex)
    return np.concatenate([a[0] for a in arrays]), np.concatenate([a[1] for a in arrays])


def solve_radial(
    equation: RadialEquation,
    radii: IntegrationRadii,
    fit_radii: Optional[Sequence[float]] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    trace: bool = False,
    regular_initial: Optional[MatrixState] = None,
) -> RadialSolve:
    """
    Integrate H outward from r_small and G inward from r_big, stopping
    exactly at every fitting radius.

    Args:
        fit_radii: Radii where both states are wanted; defaults to (r0,).
        trace: Record eigenvalues of H and G along the way.
        regular_initial: (H, H') at r_small; defaults to the free regular
            state, for which the free Wronskian is -1.
    """
    fit_radii = sorted(fit_radii if fit_radii is not None else (radii.r0,))
    if fit_radii[0] <= radii.r_small or fit_radii[-1] >= radii.r_big:
        raise ValueError(f"fitting radii {fit_radii} must lie inside ({radii.r_small}, {radii.r_big})")
    dim = equation.basis.dimension
    if regular_initial is None:
        regular_initial = equation.free.regular_state(radii.r_small)
    outgoing_initial = (np.eye(dim, dtype=complex), np.zeros((dim, dim), dtype=complex))

    regular, regular_pieces = integrate_through(
        equation.regular_rhs(), regular_initial, radii.r_small, fit_radii, rtol, atol, trace
    )
    outgoing, outgoing_pieces = integrate_through(
        equation.outgoing_rhs(), outgoing_initial, radii.r_big, fit_radii[::-1], rtol, atol, trace
    )
    solve = RadialSolve(regular, outgoing)
    solve.n_steps = sum(p.n_steps for p in regular_pieces + outgoing_pieces)
    if trace:
        solve.traces["H"] = _joined_trace(regular_pieces)
        solve.traces["G"] = _joined_trace(outgoing_pieces)
    return solve


def fit_wronskians(
    equation: RadialEquation,
    radii: IntegrationRadii,
    fit_radii: Sequence[float],
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    trace: bool = False,
) -> Tuple[Dict[float, np.ndarray], RadialSolve]:
    """Wronskian of the regular and outgoing solutions at each fitting radius."""
    solve = solve_radial(equation, radii, fit_radii, rtol, atol, trace)
    values = {}
    for r in fit_radii:
        d1 = equation.coefficients(r).d1
        values[r] = wronskian(solve.regular[r], solve.outgoing[r], equation.free, r, d1)
    return values, solve


# Results
@dataclass
class ScatteringResult:
    """
    S-matrix at one wave number.

    Attributes:
        S: Full-basis S-matrix.
        eigenphases: Half the argument of each S eigenvalue (of the projected
            S for the Maxwell engine).
        eigenvalues: The eigenvalues themselves, in eigenphase order.
        eigen_labels: Label of the dominant channel of each eigenvector.
        transverse_S, transverse_labels: Projected S in the (M, N) basis
            (Maxwell engine only).
    """

    k: complex
    basis: ChannelBasis
    S: np.ndarray
    eigenphases: np.ndarray
    eigenvalues: np.ndarray
    eigen_labels: List[str]
    diagnostics: ScatteringDiagnostics
    engine: str = "helmholtz"
    traces: Dict[str, Trace] = field(default_factory=dict)
    transverse_S: Optional[np.ndarray] = None
    transverse_labels: Optional[List[str]] = None

    @property
    def T(self) -> np.ndarray:
        return t_matrix(self.S)

    @property
    def physical_S(self) -> np.ndarray:
        return self.S if self.transverse_S is None else self.transverse_S

    def as_dict(self) -> Dict[str, Any]:
        """JSON-ready dump: basis metadata and row-major re/im arrays."""
        out: Dict[str, Any] = {
            "k": [self.k.real, self.k.imag],
            "engine": self.engine,
            "basis": self.basis.metadata(),
            "S": {"re": self.S.real.tolist(), "im": self.S.imag.tolist()},
            "eigenphases": self.eigenphases.tolist(),
            "eigen_labels": list(self.eigen_labels),
            "diagnostics": dict(self.diagnostics),
        }
        if self.transverse_S is not None:
            out["transverse_S"] = {"re": self.transverse_S.real.tolist(), "im": self.transverse_S.imag.tolist()}
            out["transverse_labels"] = list(self.transverse_labels or [])
        return out


def t_matrix(S: np.ndarray) -> np.ndarray:
    """T = (S - 1)/2."""
    S = np.asarray(S)
    return (S - np.eye(S.shape[0])) / 2.0


def unitarity_residual(S: np.ndarray) -> float:
    """||S^dagger S - 1||_2."""
    return float(np.linalg.norm(S.conj().T @ S - np.eye(S.shape[0]), 2))


def eigen_decomposition(S: np.ndarray, labels: Sequence[str]) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """
    Eigenphases, eigenvalues and dominant-channel labels of S, ordered by
    dominant channel and then by phase.
    """
    values, vectors = np.linalg.eig(S)
    dominant = np.argmax(np.abs(vectors), axis=0)
    phases = 0.5 * np.angle(values)
    order = np.lexsort((phases, dominant))
    return phases[order], values[order], [labels[i] for i in dominant[order]]


def _log_result(
    result: ScatteringResult,
    log: bool,
    log_level: int,
    logger_override: Optional[logging.Logger],
) -> None:
    if not log:
        return
    active_logger = logger_override or logger
    active_logger.log(
        log_level,
        "%s S-matrix at k=%s (dimension %d): unitarity=%.3g, fit sensitivity=%.3g, condition=%.3g",
        result.engine,
        result.k,
        result.basis.dimension,
        result.diagnostics.get("unitarity", float("nan")),
        result.diagnostics.get("fit_sensitivity", float("nan")),
        result.diagnostics.get("condition", float("nan")),
    )


def fitted_s_matrix(
    equation: RadialEquation,
    radii: IntegrationRadii,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    trace: bool = False,
) -> Tuple[np.ndarray, ScatteringDiagnostics, Dict[str, Trace]]:
    """
    Wronskian-fitted S-matrix of an equation at +k and -k, with the
    fit-sensitivity diagnostic ||S(r0) - S(r_check)||_2.
    """
    r_check = radii.check_radius()
    fit_radii = sorted((radii.r0, r_check))
    plus, plus_solve = fit_wronskians(equation, radii, fit_radii, rtol, atol, trace)
    minus, minus_solve = fit_wronskians(equation.reflected(), radii, fit_radii, rtol, atol, False)
    limit = small_r_ratio_limit(equation.basis)

    S, condition = s_from_wronskians(plus[radii.r0], minus[radii.r0], limit)
    S_check, _ = s_from_wronskians(plus[r_check], minus[r_check], limit)
    diagnostics: ScatteringDiagnostics = {
        "unitarity": unitarity_residual(S),
        "fit_sensitivity": float(np.linalg.norm(S - S_check, 2)),
        "condition": condition,
        "condition_reflected": float(np.linalg.cond(minus[radii.r0])),
        "r_small": radii.r_small,
        "r0": radii.r0,
        "r_big": radii.r_big,
        "n_steps": plus_solve.n_steps + minus_solve.n_steps,
        "method": "wronskian",
    }
    return S, diagnostics, plus_solve.traces


def s_matrix(
    field_: MultipoleField,
    basis: ChannelBasis,
    k: complex,
    r0: Optional[float] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    trace: bool = False,
    tensor: Optional[CouplingTensor] = None,
    log: bool = False,
    log_level: int = logging.INFO,
    logger_override: Optional[logging.Logger] = None,
) -> ScatteringResult:
    """
    S-matrix of a potential by Wronskian fitting at r0.

    Integrates H outward to r0 and G inward to r0 for both +k and -k and
    forms S = W_k^{-1} M W_{-k} M.

    Args:
        field_: Potential source.
        basis: Scalar or vector channel basis.
        r0: Fitting point; defaults to half the source support radius.
        trace: Keep eigenvalue traces of H and G at +k.
        tensor: Precomputed coupling tensor to share across k.
        log: If True, log a one-line summary of the result.
        log_level: Logging level to use when log is True.
        logger_override: Optional logger instance to use instead of module logger.
    Raises:
        IllConditionedFitError: If W_k cannot be inverted reliably.
        IntegrationError: Propagated from the ODE solver.
    """
    radii = IntegrationRadii.for_source(k, field_.support_radius, r0)
    equation = HelmholtzEquation(field_, basis, k, tensor)
    logger.info("Solving %s Helmholtz problem at k=%s (%d channels)", basis.kind, k, basis.dimension)
    S, diagnostics, traces = fitted_s_matrix(equation, radii, rtol, atol, trace)
    phases, values, labels = eigen_decomposition(S, basis.labels())
    result = ScatteringResult(complex(k), basis, S, phases, values, labels, diagnostics, "helmholtz", traces)
    _log_result(result, log, log_level, logger_override)
    return result


def _direct_wronskian(
    equation: RadialEquation,
    radii: IntegrationRadii,
    rtol: Optional[float],
    atol: Optional[float],
) -> np.ndarray:
    dim = equation.basis.dimension
    initial = (np.eye(dim, dtype=complex), np.zeros((dim, dim), dtype=complex))
    solution = integrate(equation.outgoing_rhs(), initial, radii.r_big, radii.r_small, rtol=rtol, atol=atol)
    regular = equation.free.regular_state(radii.r_small)
    d1 = equation.coefficients(radii.r_small).d1
    return wronskian(regular, solution.state, equation.free, radii.r_small, d1)


def s_matrix_direct(
    field_: MultipoleField,
    basis: ChannelBasis,
    k: complex,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    tensor: Optional[CouplingTensor] = None,
) -> ScatteringResult:
    """
    S-matrix from deep inward integration of G at +k and -k alone.

    Regularity is imposed at r_small against the free regular wave, which
    takes the r -> 0 limit of W^{-1} G_k^{-1} G_{-k} W(-kr) M. Only stable on
    the real axis; kept as a cross-check for the Wronskian route.
    """
    if abs(complex(k).imag) > 1e-12 * abs(complex(k)):
        logger.warning("Direct S-matrix requested at non-real k=%s; inward integration is unstable there", k)
    radii = IntegrationRadii.for_source(k, field_.support_radius)
    equation = HelmholtzEquation(field_, basis, k, tensor)
    w_plus = _direct_wronskian(equation, radii, rtol, atol)
    w_minus = _direct_wronskian(equation.reflected(), radii, rtol, atol)
    S, condition = s_from_wronskians(w_plus, w_minus, small_r_ratio_limit(basis))
    diagnostics: ScatteringDiagnostics = {
        "unitarity": unitarity_residual(S),
        "condition": condition,
        "r_small": radii.r_small,
        "r_big": radii.r_big,
        "method": "direct",
    }
    phases, values, labels = eigen_decomposition(S, basis.labels())
    return ScatteringResult(complex(k), basis, S, phases, values, labels, diagnostics, "helmholtz-direct")


# Eigenphase tracking
@dataclass
class EigenphaseTrack:
    """
    Eigenphases followed continuously across a k grid.

    Attributes:
        phases: (n_k, n) unwrapped eigenphases.
        eigenvalues: (n_k, n) eigenvalues in tracked order.
        ambiguous: Grid indices where the eigenvector matching was unclear.
    """

    phases: np.ndarray
    eigenvalues: np.ndarray
    ambiguous: List[int]


def _is_ambiguous(overlap: np.ndarray, rows: np.ndarray, cols: np.ndarray, values: np.ndarray) -> bool:
    for row, col in zip(rows, cols):
        chosen = overlap[row, col]
        rivals = np.nonzero(overlap[row] >= chosen - _AMBIGUITY_MARGIN)[0]
        for rival in rivals:
            if rival != col and abs(values[rival] - values[col]) > _DEGENERACY_TOL:
                return True
    return False


def track_eigenphases(matrices: Sequence[np.ndarray]) -> EigenphaseTrack:
    """
    Follow S eigenvalues across consecutive grid points by maximal
    eigenvector overlap (a linear assignment problem), then unwrap 2 delta.

    Ambiguous matches (a rival eigenvector almost as close, with a different
    eigenvalue) are logged and flagged but not fatal.
    """
    if not matrices:
        raise ValueError("need at least one matrix to track")
    n = matrices[0].shape[0]
    tracked_values = np.empty((len(matrices), n), dtype=complex)
    ambiguous: List[int] = []
    previous_vectors: Optional[np.ndarray] = None
    for index, S in enumerate(matrices):
        values, vectors = np.linalg.eig(S)
        vectors = vectors / np.linalg.norm(vectors, axis=0, keepdims=True)
        if previous_vectors is None:
            order = np.argsort(np.angle(values))
        else:
            overlap = np.abs(previous_vectors.conj().T @ vectors)
            rows, cols = linear_sum_assignment(overlap, maximize=True)
            order = cols[np.argsort(rows)]
            if _is_ambiguous(overlap, rows, cols, values):
                ambiguous.append(index)
                logger.warning("Eigenvalue tracking is ambiguous at grid index %d", index)
        tracked_values[index] = values[order]
        previous_vectors = vectors[:, order]
    doubled = np.unwrap(np.angle(tracked_values), axis=0)
    return EigenphaseTrack(doubled / 2.0, tracked_values, ambiguous)


@dataclass
class DensityOfStates:
    k: np.ndarray
    delta_rho: np.ndarray
    total_phase: np.ndarray
    ambiguous: List[int]


def density_from_phases(k_grid: Sequence[float], phases: np.ndarray) -> np.ndarray:
    """(1/pi) d/dk of the summed eigenphases, by central differences."""
    k_grid = np.asarray(k_grid, dtype=float)
    total = np.asarray(phases).sum(axis=1)
    if k_grid.size < 2:
        raise ValueError("the density of states needs at least two k points")
    return np.gradient(total, k_grid) / np.pi


def density_of_states_delta(
    field_: FieldLike,
    basis: ChannelBasis,
    k_grid: Sequence[float],
    engine: Optional[Callable[..., ScatteringResult]] = None,
    **engine_kwargs: Any,
) -> DensityOfStates:
    """
    Change in the continuum density of states, (1/pi) d/dk sum_i delta_i(k).

    Args:
        field_: Source, or a function k -> source for k-dependent models.
        k_grid: Real, uniform grid.
        engine: S-matrix solver with the s_matrix signature; defaults to
            s_matrix. The physical (projected) S is tracked.
    Raises:
        ValueError: For a complex or non-uniform grid.
    """
    k_array = np.asarray(k_grid)
    if np.iscomplexobj(k_array) and np.any(k_array.imag != 0):
        raise ValueError("the density of states is defined on a real k grid")
    k_array = k_array.real.astype(float)
    steps = np.diff(k_array)
    if steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("the k grid must be uniform")
    engine = engine or s_matrix
    matrices = []
    for k in k_array:
        source = field_(k) if callable(field_) and not isinstance(field_, MultipoleField) else field_
        matrices.append(engine(source, basis, k, **engine_kwargs).physical_S)
    track = track_eigenphases(matrices)
    return DensityOfStates(k_array, density_from_phases(k_array, track.phases), track.phases.sum(axis=1), track.ambiguous)
