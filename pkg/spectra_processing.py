"""
k-sweeps through the scattering engines and the files they produce.

A run config (JSON) names the engine, the source, the truncation and the k
points. run_sweep solves every k point, in a process pool when more than one
worker is configured, and writes the eigenphase, diagnostics and S-matrix
files; run_checks runs the consistency checks (unitarity, projector
commutation, fitting-point independence and oracle agreement); run_convergence
repeats a sweep at doubled truncation and reports how far the eigenphases
moved.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent import futures
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, TypedDict, Union

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from analytic_oracles import OracleError, OracleSpec, oracle_eigenphases
from angular_coupling import ChannelBasis
from config import Config
from helmholtz_vpm import (
    ScatteringResult,
    density_from_phases,
    s_matrix,
    s_matrix_direct,
    track_eigenphases,
    unitarity_residual,
)
from maxwell_vpm import maxwell_s_matrix, reconstruct_wavefunction
from source_models import MultipoleField, SourceSpec, load_source_spec
from utils import pandas_to_csv, parse_complex, write_json

logger = logging.getLogger(__name__)


class GridSpec(TypedDict):
    kmin: float
    kmax: float
    knum: int


class RadialGridSpec(TypedDict):
    rmin: float
    rmax: float
    rnum: int


class RunConfig(TypedDict, total=False):
    """
    A sweep request. Exactly one of k, k_grid (real k) and kappa_grid
    (k = i kappa) gives the k points.
    """

    engine: str
    source: Union[str, SourceSpec]
    truncation: int
    source_lmax: int
    k: Any
    k_grid: GridSpec
    kappa_grid: GridSpec
    r0: Optional[float]
    rtol: float
    atol: float
    method: str
    oracle: Union[bool, Dict[str, Any]]
    reconstruct: bool
    r_grid: Union[RadialGridSpec, List[float]]
    trace: bool
    density: bool
    workers: int
    output_dir: str
    tolerances: Dict[str, float]


class ConfigReport(TypedDict):
    valid: bool
    problems: List[str]


class PointOutcome(TypedDict, total=False):
    """Plain-data result of one k point, safe to return from a worker process."""

    index: int
    k: complex
    error: str
    record: Dict[str, Any]
    physical_S: np.ndarray
    eigenphases: np.ndarray
    eigenvalues: np.ndarray
    eigen_labels: List[str]
    diagnostics: Dict[str, Any]
    real_source: bool
    traces: Dict[str, Tuple[np.ndarray, np.ndarray]]
    wavefunction: Dict[str, Any]


class SweepSummary(TypedDict):
    n_points: int
    n_failed: int
    files: Dict[str, str]
    max_oracle_deviation: Optional[float]
    outcomes: List[PointOutcome]


class CheckEntry(TypedDict, total=False):
    name: str
    k_re: float
    k_im: float
    status: str
    residual: Optional[float]
    tolerance: Optional[float]
    detail: str


class CheckReport(TypedDict):
    passed: bool
    checks: List[CheckEntry]
    path: str


# Constants
ENGINES = ("scalar", "vector", "maxwell")
METHODS = ("wronskian", "direct")
K_KEYS = ("k", "k_grid", "kappa_grid")
OUTPUT_FILES = {
    "eigenphases": "eigenphases.csv",
    "diagnostics": "diagnostics.csv",
    "smatrix": "smatrix.json",
    "checks": "checks.json",
    "wavefunction": "wavefunction.csv",
    "trace": "trace.csv",
    "density": "density.csv",
    "convergence": "convergence.csv",
    "oracle": "oracle.csv",
}
DIAGNOSTIC_COLUMNS = (
    "unitarity",
    "transverse_unitarity",
    "commutator",
    "fit_sensitivity",
    "condition",
    "condition_reflected",
    "r_small",
    "r0",
    "r_big",
    "n_steps",
    "method",
)
_ORACLE_ENGINES = {"square_well": "scalar", "dielectric_sphere": "maxwell"}
_ENGINE_ERRORS = (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError)


def _defaults() -> RunConfig:
    return {
        "engine": "scalar",
        "truncation": 2,
        "r0": None,
        "rtol": Config.RTOL,
        "atol": Config.ATOL,
        "method": "wronskian",
        "oracle": False,
        "reconstruct": False,
        "trace": False,
        "density": False,
        "workers": Config.WORKERS,
        "output_dir": Config.OUTPUT_DIR,
    }


# Run configs
def load_run_config(
    path: Optional[Union[str, os.PathLike]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Merge defaults, a JSON config file and explicit overrides, in increasing
    precedence. Overrides set to None are ignored; an override of any k
    field replaces every k field of the file. A relative source path is read
    relative to the config file.
    """
    config = _defaults()
    base_dir = None
    if path is not None:
        with open(path, "r", encoding="utf-8") as handle:
            file_config = json.load(handle)
        if not isinstance(file_config, dict):
            raise ValueError(f"run config {path} must hold a JSON object")
        config.update(file_config)  # type: ignore[typeddict-item]
        base_dir = os.path.dirname(os.path.abspath(path))

    active = {key: value for key, value in (overrides or {}).items() if value is not None}
    if any(key in active for key in K_KEYS):
        for key in K_KEYS:
            config.pop(key, None)  # type: ignore[misc]
    config.update(active)  # type: ignore[typeddict-item]

    source = config.get("source")
    if isinstance(source, str) and base_dir and not os.path.isabs(source):
        candidate = os.path.join(base_dir, source)
        if os.path.exists(candidate):
            config["source"] = candidate
    return config


def _grid_problems(name: str, grid: Any, positive: bool) -> List[str]:
    if not isinstance(grid, dict) or not {"kmin", "kmax", "knum"} <= set(grid):
        return [f"{name} needs kmin, kmax and knum"]
    problems = []
    try:
        kmin, kmax, knum = float(grid["kmin"]), float(grid["kmax"]), int(grid["knum"])
    except (TypeError, ValueError):
        return [f"{name} values must be numbers, got {grid}"]
    if knum < 1:
        problems.append(f"{name}.knum must be at least 1, got {knum}")
    if kmin > kmax:
        problems.append(f"{name}.kmin {kmin} exceeds kmax {kmax}")
    if positive and kmin <= 0:
        problems.append(f"{name}.kmin must be positive, got {kmin}")
    return problems


def validate_run_config(config: Mapping[str, Any], strict: bool = False) -> ConfigReport:
    """
    Check a run config for the invariants every sweep relies on.

    Args:
        config: Merged run config
        strict: If True, raise ValueError when any problem is found

    Returns:
        A dict with keys: 'valid', 'problems'
    """
    problems: List[str] = []
    engine = config.get("engine")
    if engine not in ENGINES:
        problems.append(f"engine must be one of {ENGINES}, got {engine!r}")
    if not config.get("source"):
        problems.append("source is required (a source spec file or an inline spec)")

    truncation = config.get("truncation")
    if not isinstance(truncation, int) or isinstance(truncation, bool) or truncation < 0:
        problems.append(f"truncation must be a nonnegative integer, got {truncation!r}")
    elif engine == "maxwell" and truncation < 1:
        problems.append("the maxwell engine needs truncation (jmax) >= 1")
    source_lmax = config.get("source_lmax")
    if source_lmax is not None and (not isinstance(source_lmax, int) or source_lmax < 0):
        problems.append(f"source_lmax must be a nonnegative integer, got {source_lmax!r}")

    k_keys = [key for key in K_KEYS if config.get(key) is not None]
    if len(k_keys) != 1:
        problems.append(f"exactly one of {K_KEYS} must be given, got {k_keys or 'none'}")
    elif k_keys[0] == "k":
        try:
            if parse_complex(config["k"]) == 0:
                problems.append("k must be nonzero")
        except ValueError as exc:
            problems.append(str(exc))
    else:
        problems.extend(_grid_problems(k_keys[0], config[k_keys[0]], positive=True))

    for key in ("rtol", "atol"):
        value = config.get(key)
        if not isinstance(value, (int, float)) or value <= 0:
            problems.append(f"{key} must be positive, got {value!r}")
    r0 = config.get("r0")
    if r0 is not None and (not isinstance(r0, (int, float)) or r0 <= 0):
        problems.append(f"r0 must be positive, got {r0!r}")
    workers = config.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        problems.append(f"workers must be a positive integer, got {workers!r}")
    for name, value in (config.get("tolerances") or {}).items():
        if not isinstance(value, (int, float)) or value <= 0:
            problems.append(f"tolerance {name} must be positive, got {value!r}")

    method = config.get("method", "wronskian")
    if method not in METHODS:
        problems.append(f"method must be one of {METHODS}, got {method!r}")
    elif method == "direct" and engine == "maxwell":
        problems.append("the direct method is only available for the scalar and vector engines")
    if config.get("reconstruct"):
        if engine != "maxwell":
            problems.append("wavefunction reconstruction needs the maxwell engine")
        if not config.get("r_grid"):
            problems.append("reconstruct needs an r_grid")
    if config.get("density"):
        grid = config.get("k_grid")
        if not isinstance(grid, dict) or int(grid.get("knum", 0)) < 2:
            problems.append("density needs a real k_grid with at least two points")
    problems.extend(_oracle_problems(config))

    if strict and problems:
        raise ValueError(f"Invalid run config: {'; '.join(problems)}")
    return {"valid": not problems, "problems": problems}


def _oracle_problems(config: Mapping[str, Any]) -> List[str]:
    if not config.get("oracle") or not config.get("source"):
        return []
    try:
        spec = resolve_oracle(config)
    except (OSError, KeyError, ValueError) as exc:
        return [f"oracle: {exc}"]
    if spec is None:
        return []
    expected = _ORACLE_ENGINES[spec.kind]
    if config.get("engine") != expected:
        return [f"the {spec.kind} oracle compares with the {expected} engine, not {config.get('engine')!r}"]
    return []


def source_spec(config: Mapping[str, Any]) -> SourceSpec:
    """The source spec of a config, read from disk when given as a path."""
    source = config["source"]
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as handle:
            return json.load(handle)
    return source


def k_points(config: Mapping[str, Any]) -> np.ndarray:
    """Complex k values of a config, in sweep order."""
    if config.get("k") is not None:
        return np.array([parse_complex(config["k"])], dtype=complex)
    if config.get("k_grid") is not None:
        grid = config["k_grid"]
        return np.linspace(float(grid["kmin"]), float(grid["kmax"]), int(grid["knum"])).astype(complex)
    if config.get("kappa_grid") is not None:
        grid = config["kappa_grid"]
        return 1j * np.linspace(float(grid["kmin"]), float(grid["kmax"]), int(grid["knum"]))
    raise ValueError(f"config has none of {K_KEYS}")


def r_grid(config: Mapping[str, Any]) -> np.ndarray:
    grid = config.get("r_grid")
    if isinstance(grid, dict):
        return np.linspace(float(grid["rmin"]), float(grid["rmax"]), int(grid["rnum"]))
    if grid is None:
        raise ValueError("config has no r_grid")
    return np.asarray(grid, dtype=float)


def tolerances(config: Mapping[str, Any]) -> Dict[str, float]:
    out = {
        "unitarity": Config.UNITARITY_TOL,
        "commutator": Config.COMMUTATOR_TOL,
        "fit": Config.FIT_TOL,
        "oracle": Config.ORACLE_TOL,
    }
    out.update({name: float(value) for name, value in (config.get("tolerances") or {}).items()})
    return out


def resolve_oracle(config: Mapping[str, Any]) -> Optional[OracleSpec]:
    """
    Closed-form scatterer for the oracle comparison: an explicit
    {"kind", "strength", "radius"} mapping, or (for oracle: true) the one
    matching a square_well or smooth_ball source.
    """
    oracle = config.get("oracle")
    if not oracle:
        return None
    if isinstance(oracle, dict):
        return OracleSpec(oracle["kind"], parse_complex(oracle["strength"]), float(oracle["radius"]))
    spec = source_spec(config)
    model, params = spec.get("model"), spec.get("params", {})
    if model == "square_well":
        return OracleSpec("square_well", complex(params["V0"]), float(params["a"]))
    if model == "smooth_ball":
        return OracleSpec("dielectric_sphere", complex(np.sqrt(complex(1.0 + params["h"]))), float(params["w"]))
    raise ValueError(f"no closed form for source model {model!r}; give the oracle explicitly")


# Solving
def build_source(config: Mapping[str, Any], k: complex) -> MultipoleField:
    return load_source_spec(source_spec(config), k)


def build_basis(config: Mapping[str, Any], field_: MultipoleField) -> ChannelBasis:
    source_lmax = config.get("source_lmax")
    source_lmax = field_.source_lmax if source_lmax is None else int(source_lmax)
    truncation = int(config["truncation"])
    if config["engine"] == "scalar":
        return ChannelBasis.scalar(truncation, source_lmax)
    return ChannelBasis.vector(truncation, source_lmax)


def _engine_result(config: Mapping[str, Any], field_: MultipoleField, basis: ChannelBasis, k: complex) -> ScatteringResult:
    rtol, atol, r0 = config.get("rtol"), config.get("atol"), config.get("r0")
    trace = bool(config.get("trace"))
    if config["engine"] == "maxwell":
        return maxwell_s_matrix(field_, basis, k, r0=r0, rtol=rtol, atol=atol, trace=trace)
    if config.get("method") == "direct":
        return s_matrix_direct(field_, basis, k, rtol=rtol, atol=atol)
    return s_matrix(field_, basis, k, r0=r0, rtol=rtol, atol=atol, trace=trace)


def solve_point(config: Mapping[str, Any], k: complex) -> ScatteringResult:
    """S-matrix of the configured source and engine at one k."""
    field_ = build_source(config, k)
    return _engine_result(config, field_, build_basis(config, field_), k)


def _solve_point(task: Tuple[int, complex, Mapping[str, Any]]) -> PointOutcome:
    index, k, config = task
    try:
        field_ = build_source(config, k)
        basis = build_basis(config, field_)
        result = _engine_result(config, field_, basis, k)
    except _ENGINE_ERRORS as exc:
        return {"index": index, "k": k, "error": f"{type(exc).__name__}: {exc}"}

    outcome: PointOutcome = {
        "index": index,
        "k": k,
        "record": result.as_dict(),
        "physical_S": result.physical_S,
        "eigenphases": result.eigenphases,
        "eigenvalues": result.eigenvalues,
        "eigen_labels": list(result.eigen_labels),
        "diagnostics": dict(result.diagnostics),
        "real_source": field_.real,
        "traces": dict(result.traces),
    }
    if config.get("reconstruct"):
        try:
            wave = reconstruct_wavefunction(
                field_, basis, k, r_grid(config), config.get("r0"), config.get("rtol"), config.get("atol")
            )
        except _ENGINE_ERRORS as exc:
            outcome["error"] = f"wavefunction: {type(exc).__name__}: {exc}"
        else:
            outcome["wavefunction"] = {
                "r": wave.r,
                "eigenvalues": wave.eigenvalues,
                "derivative_mismatch": wave.derivative_mismatch,
            }
    return outcome


class _Progress:
    """Completed-point counter updated from pool callbacks."""

    def __init__(self, total: int):
        self.total = total
        self.done = 0
        self._lock = threading.Lock()

    def advance(self, k: complex) -> int:
        with self._lock:
            self.done += 1
            done = self.done
        logger.info("Finished k=%s (%d/%d)", k, done, self.total)
        return done


def _solve_tasks(tasks: Sequence[Tuple[int, complex, Mapping[str, Any]]], workers: int) -> List[PointOutcome]:
    progress = _Progress(len(tasks))
    workers = max(1, min(int(workers), len(tasks)))
    if workers == 1:
        outcomes = []
        for task in tasks:
            outcomes.append(_solve_point(task))
            progress.advance(task[1])
    else:
        with futures.ProcessPoolExecutor(max_workers=workers) as executor:
            wait_for = []
            for task in tasks:
                future = executor.submit(_solve_point, task)
                future.add_done_callback(lambda _f, k=task[1]: progress.advance(k))
                wait_for.append(future)
            outcomes = [f.result() for f in futures.as_completed(wait_for)]
    outcomes.sort(key=lambda outcome: outcome["index"])
    for outcome in outcomes:
        if "error" in outcome:
            logger.error("Engine failed at k=%s: %s", outcome["k"], outcome["error"])
    return outcomes


def solve_points(config: Mapping[str, Any], ks: Sequence[complex]) -> List[PointOutcome]:
    """Solve every k point of a config; outcomes come back in k order."""
    tasks = [(index, complex(k), dict(config)) for index, k in enumerate(ks)]
    return _solve_tasks(tasks, int(config.get("workers", 1)))


# Oracle comparison
def oracle_values(spec: OracleSpec, k: complex, truncation: int) -> np.ndarray:
    """Closed-form S values repeated by degeneracy, one per engine eigenvalue."""
    values: List[complex] = []
    for _label, order, polarization, degeneracy in spec.channels(truncation):
        values.extend([spec.s_value(order, k, polarization)] * degeneracy)
    return np.array(values, dtype=complex)


def match_oracle(eigenvalues: np.ndarray, oracle: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pair engine eigenvalues with closed-form values by minimal distance.

    Returns:
        (matched oracle value per eigenvalue, eigenphase deviation per eigenvalue)
    """
    eigenvalues = np.asarray(eigenvalues, dtype=complex)
    if oracle.size != eigenvalues.size:
        raise ValueError(f"engine has {eigenvalues.size} eigenvalues but the oracle has {oracle.size}")
    rows, cols = linear_sum_assignment(np.abs(eigenvalues[:, None] - oracle[None, :]))
    matched = np.empty_like(eigenvalues)
    matched[rows] = oracle[cols]
    return matched, np.abs(np.angle(eigenvalues / matched)) / 2.0


# Tables
def _tracked_labels(outcome: PointOutcome, values: np.ndarray) -> List[str]:
    rows, cols = linear_sum_assignment(np.abs(values[:, None] - outcome["eigenvalues"][None, :]))
    labels = [""] * values.size
    for row, col in zip(rows, cols):
        labels[row] = outcome["eigen_labels"][col]
    return labels


def eigenphase_frame(
    outcomes: Sequence[PointOutcome],
    oracle: Optional[OracleSpec] = None,
    truncation: Optional[int] = None,
) -> pd.DataFrame:
    """
    One row per (k, eigenvalue), with oracle columns when an oracle is given.

    On a real grid with at least two solved points the eigenvalues are
    followed across k by eigenvector overlap and the phases are unwrapped, so
    each index is one continuous curve; ambiguous matches are flagged. A
    single k or complex k keeps the per-point order of the engine.
    """
    columns = ["k_re", "k_im", "index", "channel", "eigenphase", "modulus", "eigen_re", "eigen_im", "ambiguous"]
    if oracle is not None:
        columns += ["oracle_eigenphase", "deviation"]
    solved = [outcome for outcome in outcomes if "eigenvalues" in outcome]
    track = None
    if len(solved) > 1 and all(outcome["k"].imag == 0 for outcome in solved):
        track = track_eigenphases([outcome["physical_S"] for outcome in solved])

    rows = []
    for position, outcome in enumerate(solved):
        k = outcome["k"]
        if track is None:
            phases, values, labels = outcome["eigenphases"], outcome["eigenvalues"], outcome["eigen_labels"]
            ambiguous = False
        else:
            phases, values = track.phases[position], track.eigenvalues[position]
            labels = _tracked_labels(outcome, values)
            ambiguous = position in track.ambiguous
        matched = deviation = None
        if oracle is not None:
            try:
                matched, deviation = match_oracle(values, oracle_values(oracle, k, int(truncation or 0)))
            except OracleError as exc:
                logger.warning("No closed-form value at k=%s: %s", k, exc)
        for i, (label, phase, value) in enumerate(zip(labels, phases, values)):
            row = {
                "k_re": k.real,
                "k_im": k.imag,
                "index": i,
                "channel": label,
                "eigenphase": float(phase),
                "modulus": abs(value),
                "eigen_re": value.real,
                "eigen_im": value.imag,
                "ambiguous": ambiguous,
            }
            if oracle is not None:
                row["oracle_eigenphase"] = float(phase + np.angle(matched[i] / value) / 2.0) if matched is not None else np.nan
                row["deviation"] = float(deviation[i]) if deviation is not None else np.nan
            rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def diagnostics_frame(outcomes: Sequence[PointOutcome], engine: str) -> pd.DataFrame:
    columns = ["k_re", "k_im", "engine", "status", "error", *DIAGNOSTIC_COLUMNS]
    rows = []
    for outcome in outcomes:
        k = outcome["k"]
        row: Dict[str, Any] = {
            "k_re": k.real,
            "k_im": k.imag,
            "engine": engine,
            "status": "failed" if "error" in outcome else "ok",
            "error": outcome.get("error", ""),
        }
        diagnostics = outcome.get("diagnostics", {})
        for name in DIAGNOSTIC_COLUMNS:
            row[name] = diagnostics.get(name, "" if name == "method" else np.nan)
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def smatrix_document(config: Mapping[str, Any], outcomes: Sequence[PointOutcome]) -> Dict[str, Any]:
    points = []
    for outcome in outcomes:
        if "record" in outcome:
            points.append(outcome["record"])
        else:
            points.append({"k": outcome["k"], "error": outcome["error"]})
    return {"engine": config.get("engine"), "config": dict(config), "points": points}


def _eigenvalue_rows(k: complex, extra: Dict[str, Any], radii: np.ndarray, eigenvalues: np.ndarray) -> List[Dict[str, Any]]:
    rows = []
    for r, values in zip(radii, eigenvalues):
        for i, value in enumerate(values):
            rows.append(
                {"k_re": k.real, "k_im": k.imag, **extra, "r": float(r), "index": i,
                 "eigen_re": value.real, "eigen_im": value.imag, "modulus": abs(value)}
            )
    return rows


def trace_frame(outcomes: Sequence[PointOutcome]) -> pd.DataFrame:
    """Eigenvalues of G and H along r at every accepted step."""
    rows = []
    for outcome in outcomes:
        for name, (radii, eigenvalues) in sorted(outcome.get("traces", {}).items()):
            rows.extend(_eigenvalue_rows(outcome["k"], {"solution": name}, radii, eigenvalues))
    columns = ["k_re", "k_im", "solution", "r", "index", "eigen_re", "eigen_im", "modulus"]
    return pd.DataFrame(rows, columns=columns)


def wavefunction_frame(outcomes: Sequence[PointOutcome]) -> pd.DataFrame:
    rows = []
    for outcome in outcomes:
        wave = outcome.get("wavefunction")
        if wave is None:
            continue
        extra = {"derivative_mismatch": wave["derivative_mismatch"]}
        rows.extend(_eigenvalue_rows(outcome["k"], extra, wave["r"], wave["eigenvalues"]))
    columns = ["k_re", "k_im", "derivative_mismatch", "r", "index", "eigen_re", "eigen_im", "modulus"]
    return pd.DataFrame(rows, columns=columns)


def density_frame(outcomes: Sequence[PointOutcome]) -> pd.DataFrame:
    """Delta rho(k) from eigenphases tracked across a real grid."""
    ks = np.array([outcome["k"].real for outcome in outcomes])
    track = track_eigenphases([outcome["physical_S"] for outcome in outcomes])
    flagged = np.zeros(ks.size, dtype=bool)
    flagged[track.ambiguous] = True
    return pd.DataFrame(
        {
            "k": ks,
            "delta_rho": density_from_phases(ks, track.phases),
            "total_phase": track.phases.sum(axis=1),
            "ambiguous": flagged,
        }
    )


def _output_path(config: Mapping[str, Any], key: str) -> str:
    return os.path.join(config.get("output_dir") or Config.OUTPUT_DIR, OUTPUT_FILES[key])


# Pipelines
def run_sweep(config: RunConfig) -> SweepSummary:
    """
    Solve every k point of a config and write the result files.

    Always writes eigenphases.csv, diagnostics.csv and smatrix.json; adds
    trace.csv, wavefunction.csv and density.csv when requested. Engine
    failures are recorded per k and the sweep continues.

    Raises:
        ValueError: For an invalid config.
    """
    validate_run_config(config, strict=True)
    ks = k_points(config)
    logger.info("Sweeping %d k points with the %s engine", len(ks), config["engine"])
    outcomes = solve_points(config, ks)
    oracle = resolve_oracle(config)

    files: Dict[str, str] = {}
    eigen = eigenphase_frame(outcomes, oracle, config["truncation"])
    files["eigenphases"] = pandas_to_csv(eigen, _output_path(config, "eigenphases"))
    files["diagnostics"] = pandas_to_csv(diagnostics_frame(outcomes, config["engine"]), _output_path(config, "diagnostics"))
    files["smatrix"] = write_json(smatrix_document(config, outcomes), _output_path(config, "smatrix"))
    if config.get("trace"):
        files["trace"] = pandas_to_csv(trace_frame(outcomes), _output_path(config, "trace"))
    if config.get("reconstruct"):
        files["wavefunction"] = pandas_to_csv(wavefunction_frame(outcomes), _output_path(config, "wavefunction"))

    failed = [outcome for outcome in outcomes if "error" in outcome]
    if config.get("density"):
        if failed:
            logger.warning("Skipping the density of states: %d k points failed", len(failed))
        else:
            files["density"] = pandas_to_csv(density_frame(outcomes), _output_path(config, "density"))

    max_deviation = None
    if oracle is not None and eigen["deviation"].notna().any():
        max_deviation = float(eigen["deviation"].max())
        logger.info("Max |delta - delta_oracle| = %.3g", max_deviation)
    logger.info("Sweep finished: %d/%d k points solved; files in %s", len(outcomes) - len(failed), len(outcomes),
                config.get("output_dir"))
    return {
        "n_points": len(outcomes),
        "n_failed": len(failed),
        "files": files,
        "max_oracle_deviation": max_deviation,
        "outcomes": outcomes,
    }


def _entry(name: str, k: complex, residual: Optional[float], tolerance: Optional[float], detail: str = "") -> CheckEntry:
    if residual is None:
        status = "skipped" if tolerance is None else "failed"
    else:
        status = "passed" if residual <= tolerance else "failed"
    return {
        "name": name,
        "k_re": k.real,
        "k_im": k.imag,
        "status": status,
        "residual": residual,
        "tolerance": tolerance,
        "detail": detail,
    }


def _moved_r0(outcome: PointOutcome) -> float:
    r0, r_big = outcome["diagnostics"]["r0"], outcome["diagnostics"]["r_big"]
    return 2.0 * r0 if 2.0 * r0 < r_big else r0 / 2.0


def run_checks(config: RunConfig) -> CheckReport:
    """
    Consistency checks on every k point: unitarity of the physical S (real
    sources at real k), projector commutation (Maxwell engine), independence
    of the fitting point under r0 -> 2 r0, and agreement with the closed form
    when an oracle is configured. Writes checks.json.

    Raises:
        ValueError: For an invalid config.
    """
    validate_run_config(config, strict=True)
    limits = tolerances(config)
    plain = {**config, "trace": False, "reconstruct": False}
    ks = k_points(config)
    outcomes = solve_points(plain, ks)
    oracle = resolve_oracle(config)

    moved_tasks = [
        (outcome["index"], outcome["k"], {**plain, "r0": _moved_r0(outcome)})
        for outcome in outcomes
        if "error" not in outcome and config.get("method", "wronskian") == "wronskian"
    ]
    moved = {outcome["index"]: outcome for outcome in _solve_tasks(moved_tasks, int(config.get("workers", 1)))}

    checks: List[CheckEntry] = []
    for outcome in outcomes:
        k = outcome["k"]
        if "error" in outcome:
            checks.append(_entry("solve", k, None, 0.0, outcome["error"]))
            continue
        S = outcome["physical_S"]
        if k.imag == 0 and outcome["real_source"]:
            checks.append(_entry("unitarity", k, unitarity_residual(S), limits["unitarity"]))
        else:
            checks.append(_entry("unitarity", k, None, None, "S is only unitary for real sources at real k"))
        if config["engine"] == "maxwell":
            checks.append(_entry("commutator", k, float(outcome["diagnostics"]["commutator"]), limits["commutator"]))

        other = moved.get(outcome["index"])
        if other is None:
            checks.append(_entry("fit_point", k, None, None, "the direct method has no fitting point"))
        elif "error" in other:
            checks.append(_entry("fit_point", k, None, limits["fit"], other["error"]))
        else:
            change = float(np.linalg.norm(other["physical_S"] - S, 2))
            r0_detail = f"r0={outcome['diagnostics']['r0']:.6g} -> {other['diagnostics']['r0']:.6g}"
            checks.append(_entry("fit_point", k, change, limits["fit"], r0_detail))

        if oracle is not None:
            try:
                _, deviation = match_oracle(outcome["eigenvalues"], oracle_values(oracle, k, config["truncation"]))
            except OracleError as exc:
                checks.append(_entry("oracle", k, None, None, str(exc)))
            else:
                checks.append(_entry("oracle", k, float(deviation.max()), limits["oracle"], oracle.kind))

    passed = all(entry["status"] != "failed" for entry in checks)
    path = write_json({"passed": passed, "checks": checks}, _output_path(config, "checks"))
    logger.info("Checks %s (%d entries) written to %s", "passed" if passed else "failed", len(checks), path)
    return {"passed": passed, "checks": checks, "path": path}


def _eigenphase_change(base: np.ndarray, refined: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(np.abs(base[:, None] - refined[None, :]))
    return float(np.max(np.abs(np.angle(base[rows] / refined[cols]))) / 2.0) if rows.size else 0.0


def run_convergence(config: RunConfig) -> pd.DataFrame:
    """
    Repeat the sweep at doubled truncation and report, per k, the largest
    change of the low-truncation eigenphases. Writes convergence.csv.

    Raises:
        ValueError: For an invalid config.
    """
    validate_run_config(config, strict=True)
    ks = k_points(config)
    truncation = int(config["truncation"])
    doubled_truncation = max(2 * truncation, truncation + 1)
    plain = {**config, "trace": False, "reconstruct": False}
    base = solve_points(plain, ks)
    refined = solve_points({**plain, "truncation": doubled_truncation}, ks)

    rows = []
    for low, high in zip(base, refined):
        k = low["k"]
        failed = "error" in low or "error" in high
        change = np.nan if failed else _eigenphase_change(low["eigenvalues"], high["eigenvalues"])
        rows.append(
            {
                "k_re": k.real,
                "k_im": k.imag,
                "truncation": truncation,
                "doubled_truncation": doubled_truncation,
                "max_change": change,
                "status": "failed" if failed else "ok",
            }
        )
    frame = pd.DataFrame(rows)
    pandas_to_csv(frame, _output_path(config, "convergence"))
    if frame["max_change"].notna().any():
        logger.info("Convergence estimate: max eigenphase change %.3g", float(frame["max_change"].max()))
    return frame


def write_oracle_table(
    spec: OracleSpec,
    ks: Sequence[complex],
    truncation: int,
    path: Union[str, os.PathLike],
) -> pd.DataFrame:
    """Closed-form eigenphase table for the oracle command."""
    frame = oracle_eigenphases(spec, ks, truncation)
    pandas_to_csv(frame, path)
    return frame
