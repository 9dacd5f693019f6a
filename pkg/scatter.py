"""
Main CLI entrypoint for S-matrix sweeps, consistency checks and closed-form
oracle tables.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Any, Dict, Optional

import numpy as np
import typer

from analytic_oracles import OracleSpec
from config import Config
from spectra_processing import (
    ENGINES,
    OUTPUT_FILES,
    load_run_config,
    run_checks,
    run_convergence,
    run_sweep,
    write_oracle_table,
)
from utils import make_json_safe, parse_complex

app = typer.Typer(help="Variable phase S-matrix CLI")


def _configure_logging(level: Optional[str]) -> None:
    name = (level or Config.LOG_LEVEL).upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        raise typer.BadParameter(f"unknown log level {level!r}", param_hint="--log-level")
    logging.basicConfig(level=numeric, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _grid_override(kmin: Optional[float], kmax: Optional[float], knum: Optional[int], k_imag: bool) -> Dict[str, Any]:
    given = [value is not None for value in (kmin, kmax, knum)]
    if not any(given):
        if k_imag:
            raise typer.BadParameter("--k-imag needs --kmin, --kmax and --knum", param_hint="--k-imag")
        return {}
    if not all(given):
        raise typer.BadParameter("give --kmin, --kmax and --knum together", param_hint="--kmin/--kmax/--knum")
    key = "kappa_grid" if k_imag else "k_grid"
    return {key: {"kmin": kmin, "kmax": kmax, "knum": knum}}


@app.command("run")
def run_cmd(
    config_path: str = typer.Option(..., "--config", help="Path to a JSON run config"),
    engine: Optional[str] = typer.Option(None, "--engine", help=f"One of {', '.join(ENGINES)}"),
    kmin: Optional[float] = typer.Option(None, "--kmin", help="First k (or kappa with --k-imag)"),
    kmax: Optional[float] = typer.Option(None, "--kmax", help="Last k (or kappa with --k-imag)"),
    knum: Optional[int] = typer.Option(None, "--knum", help="Number of grid points"),
    k_imag: bool = typer.Option(False, "--k-imag", help="Sweep k = i kappa on the imaginary axis"),
    k: Optional[str] = typer.Option(None, "--k", help="Single complex wave number, e.g. 1.5 or 0+2j"),
    jmax: Optional[int] = typer.Option(None, "--jmax", help="Basis truncation (l_max or j_max)"),
    r0: Optional[float] = typer.Option(None, "--r0", help="Fitting point"),
    oracle: bool = typer.Option(False, "--oracle", help="Compare eigenphases with the closed form"),
    convergence: bool = typer.Option(False, "--convergence", help="Also rerun at doubled truncation"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Worker processes for the k points"),
    json_output: bool = typer.Option(False, "--json", help="Emit JSON output"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Logging level"),
) -> None:
    """Sweep k and write eigenphase, diagnostics and S-matrix files."""
    _configure_logging(log_level)
    overrides: Dict[str, Any] = {
        "engine": engine,
        "truncation": jmax,
        "r0": r0,
        "output_dir": out,
        "workers": workers,
        "oracle": True if oracle else None,
        "k": k,
    }
    overrides.update(_grid_override(kmin, kmax, knum, k_imag))
    if k is not None and ("k_grid" in overrides or "kappa_grid" in overrides):
        raise typer.BadParameter("--k cannot be combined with a k grid", param_hint="--k")

    try:
        config = load_run_config(config_path, overrides)
        summary = run_sweep(config)
        estimate = run_convergence(config) if convergence else None
    except (OSError, ValueError) as exc:
        typer.echo(f"Error: {exc}")
        raise typer.Exit(code=2)

    convergence_estimate = None
    if estimate is not None and estimate["max_change"].notna().any():
        convergence_estimate = float(estimate["max_change"].max())

    if json_output:
        report = {key: summary[key] for key in ("n_points", "n_failed", "files", "max_oracle_deviation")}
        report["convergence_estimate"] = convergence_estimate
        typer.echo(json.dumps(make_json_safe(report), indent=2))
    else:
        typer.echo("Sweep")
        typer.echo(f"- Engine: {config['engine']}")
        typer.echo(f"- Solved: {summary['n_points'] - summary['n_failed']}/{summary['n_points']} k points")
        for name, path in summary["files"].items():
            typer.echo(f"- {name}: {path}")
        if summary["max_oracle_deviation"] is not None:
            typer.echo(f"- Max |delta - delta_oracle|: {summary['max_oracle_deviation']:.3g}")
        if convergence_estimate is not None:
            typer.echo(f"- Convergence estimate: {convergence_estimate:.3g}")

    if summary["n_failed"]:
        raise typer.Exit(code=1)


@app.command("check")
def check_cmd(
    config_path: str = typer.Option(..., "--config", help="Path to a JSON run config"),
    r0: Optional[float] = typer.Option(None, "--r0", help="Fitting point"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Worker processes for the k points"),
    json_output: bool = typer.Option(False, "--json", help="Emit JSON output"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Logging level"),
) -> None:
    """Run the consistency checks and write checks.json."""
    _configure_logging(log_level)
    try:
        config = load_run_config(config_path, {"r0": r0, "output_dir": out, "workers": workers})
        report = run_checks(config)
    except (OSError, ValueError) as exc:
        typer.echo(f"Error: {exc}")
        raise typer.Exit(code=2)

    if json_output:
        typer.echo(json.dumps(make_json_safe(report), indent=2))
    else:
        typer.echo("Checks")
        for entry in report["checks"]:
            k = complex(entry["k_re"], entry["k_im"])
            residual = "-" if entry["residual"] is None else f"{entry['residual']:.3g}"
            typer.echo(f"- {entry['name']} at k={k}: {entry['status']} (residual {residual})")
        typer.echo(f"Report: {report['path']}")

    if not report["passed"]:
        raise typer.Exit(code=1)


@app.command("oracle")
def oracle_cmd(
    kind: str = typer.Option(..., "--kind", help="square_well or dielectric_sphere"),
    strength: str = typer.Option(..., "--strength", help="V0 for the well, refractive index n for the sphere"),
    radius: float = typer.Option(1.0, "--radius", help="Radius a"),
    kmin: float = typer.Option(..., "--kmin", help="First k (or kappa with --k-imag)"),
    kmax: float = typer.Option(..., "--kmax", help="Last k (or kappa with --k-imag)"),
    knum: int = typer.Option(..., "--knum", help="Number of grid points"),
    k_imag: bool = typer.Option(False, "--k-imag", help="Tabulate k = i kappa"),
    truncation: int = typer.Option(3, "--truncation", "--lmax", "--jmax", help="Largest l (well) or j (sphere)"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory"),
    json_output: bool = typer.Option(False, "--json", help="Emit JSON output"),
) -> None:
    """Write the closed-form eigenphase table of a square well or dielectric sphere."""
    if knum < 1 or kmin > kmax:
        raise typer.BadParameter("need knum >= 1 and kmin <= kmax", param_hint="--kmin/--kmax/--knum")
    try:
        spec = OracleSpec(kind, parse_complex(strength), radius)  # type: ignore[arg-type]
    except ValueError as exc:
        typer.echo(f"Error: {exc}")
        raise typer.Exit(code=2)

    grid = np.linspace(kmin, kmax, knum)
    ks = 1j * grid if k_imag else grid.astype(complex)
    path = os.path.join(out or Config.OUTPUT_DIR, OUTPUT_FILES["oracle"])
    try:
        frame = write_oracle_table(spec, ks, truncation, path)
    except ArithmeticError as exc:
        typer.echo(f"Error: {exc}")
        raise typer.Exit(code=1)

    if json_output:
        typer.echo(json.dumps(make_json_safe(frame), indent=2))
        return
    typer.echo(f"Wrote {len(frame)} closed-form eigenphases to {path}")


if __name__ == "__main__":
    app()
