"""
Adaptive integration of second-order complex matrix ODEs.

The engines write their radial equations as M'' = f(r, M, M') for complex
matrices M. Here the pair (M, M') is stacked into one first-order state and
advanced with the embedded Cash-Karp 5(4) Runge-Kutta pair, with per-step
error control, cubic Hermite dense output at requested radii and an optional
eigenvalue trace of M. Integration runs outward (increasing r) or inward.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from config import Config

logger = logging.getLogger(__name__)

# Type aliases
MatrixState = Tuple[np.ndarray, np.ndarray]
SecondOrderRhs = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
Direction = Literal["inward", "outward"]

# Cash-Karp 5(4) tableau
_NODES = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_STAGE_WEIGHTS = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_FIFTH_ORDER = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_ERROR_WEIGHTS = np.array([-277 / 64512, 0.0, 6925 / 370944, -6925 / 202752, -277 / 14336, 277 / 7084])

# Step control
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_UNDERFLOW = 1e-13
_OVERFLOW = 1e250


class IntegrationError(RuntimeError):
    """
    Raised when an integration cannot continue.

    Attributes:
        last_r: Last accepted radius.
        reason: Short machine-readable cause ("step_underflow", "non_finite",
            "max_steps").
    """

    def __init__(self, message: str, last_r: float, reason: str):
        super().__init__(f"{message} (last accepted r={last_r:.6g})")
        self.last_r = last_r
        self.reason = reason


@dataclass
class RadialMatrixSolution:
    """
    Result of one matrix ODE integration.

    Attributes:
        direction: "outward" when r_end > r_start, else "inward".
        value, derivative: M and M' at r_end.
        samples: Dense-output states at the requested radii.
        trace: (r, eigenvalues of M) at every accepted step when requested.
    """

    direction: Direction
    r_start: float
    r_end: float
    value: np.ndarray
    derivative: np.ndarray
    samples: Dict[float, MatrixState] = field(default_factory=dict)
    trace: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    n_steps: int = 0
    n_rejected: int = 0
    n_evaluations: int = 0

    @property
    def state(self) -> MatrixState:
        return self.value, self.derivative

    def state_at(self, r: float) -> MatrixState:
        """Dense-output state at a radius requested through ``t_eval``."""
        if r == self.r_end:
            return self.state
        if r in self.samples:
            return self.samples[r]
        nearest = min(self.samples, key=lambda x: abs(x - r), default=None)
        if nearest is not None and abs(nearest - r) <= 1e-12 * max(abs(r), 1.0):
            return self.samples[nearest]
        raise KeyError(f"no dense output at r={r}; pass it in t_eval")

    def trace_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Trace as (radii, eigenvalues) arrays, eigenvalues sorted by real part per row."""
        if not self.trace:
            return np.empty(0), np.empty((0, 0), dtype=complex)
        radii = np.array([r for r, _ in self.trace])
        eigs = np.array([np.sort_complex(e) for _, e in self.trace])
        return radii, eigs


def _hermite(theta: float, h: float, y0: np.ndarray, f0: np.ndarray, y1: np.ndarray, f1: np.ndarray) -> np.ndarray:
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2 * t3 - 3 * t2 + 1) * y0
        + (t3 - 2 * t2 + theta) * h * f0
        + (-2 * t3 + 3 * t2) * y1
        + (t3 - t2) * h * f1
    )


def _error_norm(error: np.ndarray, y_old: np.ndarray, y_new: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.max(np.abs(error) / scale))


def integrate(
    rhs: SecondOrderRhs,
    initial: MatrixState,
    r_start: float,
    r_end: float,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    max_step: Optional[float] = None,
    first_step: Optional[float] = None,
    t_eval: Sequence[float] = (),
    trace: bool = False,
    max_steps: Optional[int] = None,
) -> RadialMatrixSolution:
    """
    Integrate M'' = rhs(r, M, M') from r_start to r_end.

    Args:
        rhs: Second derivative of the (rows x cols) complex matrix M.
        initial: (M, M') at r_start.
        rtol, atol: Error tolerances; default Config.RTOL and Config.ATOL.
        max_step: Largest step size; defaults to
            |r_end - r_start| * Config.MAX_STEP_FRACTION.
        first_step: Initial step size; defaults to max_step / 10.
        t_eval: Radii inside the interval where the state is sampled by
            cubic Hermite interpolation.
        trace: Record the eigenvalues of M at every accepted step.
    Returns:
        RadialMatrixSolution.
    Raises:
        ValueError: For r_start == r_end or mismatched initial data.
        IntegrationError: On step underflow, non-finite values or too many
            steps.
    """
    if r_start == r_end:
        raise ValueError("r_start and r_end must differ")
    m0 = np.array(initial[0], dtype=complex)
    d0 = np.array(initial[1], dtype=complex)
    if m0.shape != d0.shape or m0.ndim != 2:
        raise ValueError(f"initial value and derivative must be matrices of one shape, got {m0.shape} and {d0.shape}")

    rtol = Config.RTOL if rtol is None else rtol
    atol = Config.ATOL if atol is None else atol
    max_steps = Config.MAX_STEPS if max_steps is None else max_steps
    span = abs(r_end - r_start)
    max_step = span * Config.MAX_STEP_FRACTION if max_step is None else min(max_step, span)
    direction_sign = 1.0 if r_end > r_start else -1.0
    direction: Direction = "outward" if direction_sign > 0 else "inward"

    pending = sorted(
        (float(r) for r in t_eval if min(r_start, r_end) <= r <= max(r_start, r_end)),
        key=lambda r: direction_sign * r,
    )
    pending_index = 0

    result = RadialMatrixSolution(direction, r_start, r_end, m0, d0)

    def derivative(r: float, y: np.ndarray) -> np.ndarray:
        result.n_evaluations += 1
        return np.stack([y[1], rhs(r, y[0], y[1])])

    r = float(r_start)
    y = np.stack([m0, d0])
    f = derivative(r, y)
    h = min(max_step, first_step if first_step is not None else max_step / 10.0)
    square = m0.shape[0] == m0.shape[1]
    if trace and square:
        result.trace.append((r, np.linalg.eigvals(y[0])))

    while direction_sign * (r_end - r) > 0:
        if result.n_steps + result.n_rejected >= max_steps:
            raise IntegrationError(f"exceeded {max_steps} steps", r, "max_steps")
        h = min(h, abs(r_end - r))
        if h <= _UNDERFLOW * max(abs(r), span):
            raise IntegrationError("step size underflow", r, "step_underflow")
        step = direction_sign * h

        stages = [f]
        for i in range(1, 6):
            increment = sum(w * k for w, k in zip(_STAGE_WEIGHTS[i], stages))
            stages.append(derivative(r + _NODES[i] * step, y + step * increment))
        y_new = y + step * sum(w * k for w, k in zip(_FIFTH_ORDER, stages) if w != 0.0)
        error = step * sum(w * k for w, k in zip(_ERROR_WEIGHTS, stages) if w != 0.0)

        if not np.all(np.isfinite(y_new)) or np.max(np.abs(y_new)) > _OVERFLOW:
            if h <= _UNDERFLOW * max(abs(r), span) * 10:
                raise IntegrationError("non-finite matrix entries", r, "non_finite")
            h *= _MIN_FACTOR
            result.n_rejected += 1
            continue

        err = _error_norm(error, y, y_new, rtol, atol)
        if err > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-0.2))
            result.n_rejected += 1
            continue

        r_new = r_end if abs(r_end - (r + step)) <= 1e-14 * span else r + step
        f_new = derivative(r_new, y_new)
        while pending_index < len(pending) and direction_sign * (pending[pending_index] - r_new) <= 0:
            target = pending[pending_index]
            theta = (target - r) / (r_new - r)
            sample = _hermite(theta, r_new - r, y, f, y_new, f_new)
            result.samples[target] = (sample[0], sample[1])
            pending_index += 1

        r, y, f = r_new, y_new, f_new
        result.n_steps += 1
        if trace and square:
            result.trace.append((r, np.linalg.eigvals(y[0])))
        factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** (-0.2)))
        h = min(max_step, h * factor)

    result.value, result.derivative = y[0], y[1]
    logger.debug(
        "Integrated %s from r=%.6g to r=%.6g: %d steps, %d rejected, %d evaluations",
        direction,
        r_start,
        r_end,
        result.n_steps,
        result.n_rejected,
        result.n_evaluations,
    )
    return result
