# ============================================================
# cli.py
# Command-line entry point:
#   run <config>        simulate one controller, write CSV + summary
#   compare <config>    fractional vs standard vs bang-bang
#   bound <config>      both finite-time bound expressions
#   lemma1              random sweep of the power-sum inequality
#   selftest            run the test suites
# Exit codes: 0 ok, 1 config error, 2 integration failure.
# ============================================================

from __future__ import annotations

import logging
from pathlib import Path

import typer
from rich.console import Console
from rich.table import Table

from .analysis import bound_simulation_form, bound_theorem_form, lemma1_sweep
from .errors import ConfigError, IntegrationError
from .experiment import ExperimentConfig, compare_controllers, load_config, run_experiment
from .settings import LOG_FORMAT, LOG_LEVEL
from .states import lyapunov_value

log = logging.getLogger(__name__)

EXIT_CONFIG = 1
EXIT_INTEGRATION = 2

app = typer.Typer(help="Finite-time Lyapunov stabilisation of ladder n-level quantum systems.",
                  no_args_is_help=True, add_completion=False)
console = Console()
err_console = Console(stderr=True)


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging.")):
    logging.basicConfig(level=logging.DEBUG if verbose else LOG_LEVEL, format=LOG_FORMAT)


def _load(path: Path) -> ExperimentConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        log.error(f"Config error in {path}: {exc}")
        err_console.print(f"[red]config error[/red] {exc}")
        raise typer.Exit(EXIT_CONFIG)


def _fmt(value) -> str:
    if value is None:
        return "—"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


@app.command()
def run(config: Path = typer.Argument(..., help="Experiment file."),
        progress: bool = typer.Option(True, help="Show a progress bar.")):
    """Simulate the configured controller and write trajectory + summary."""
    cfg = _load(config)
    try:
        result = run_experiment(cfg, progress=progress)
    except IntegrationError as exc:
        log.error(f"Integration failed: {exc}")
        err_console.print(f"[red]integration failure[/red] {exc}")
        raise typer.Exit(EXIT_INTEGRATION)

    table = Table(title=f"{cfg.name} ({cfg.controller.value})")
    table.add_column("field")
    table.add_column("value", justify="right")
    if result.population_at_probe is not None:
        table.add_row(f"population at t = {cfg.probe_time:g}", _fmt(result.population_at_probe))
    for key, value in result.report.model_dump().items():
        table.add_row(key, _fmt(value))
    console.print(table)
    console.print(f"trajectory → {result.csv_path}\nsummary    → {result.summary_path}")


@app.command()
def compare(config: Path = typer.Argument(..., help="Experiment file."),
            progress: bool = typer.Option(False, help="Show progress bars.")):
    """Run the scenario under the fractional, standard and bang-bang laws."""
    cfg = _load(config)
    try:
        result = compare_controllers(cfg, progress=progress)
    except ConfigError as exc:
        err_console.print(f"[red]config error[/red] {exc}")
        raise typer.Exit(EXIT_CONFIG)
    except IntegrationError as exc:
        log.error(f"Integration failed: {exc}")
        err_console.print(f"[red]integration failure[/red] {exc}")
        raise typer.Exit(EXIT_INTEGRATION)

    table = Table(title=f"{cfg.name}: populations at t = {result.reference_time:.4f}")
    for col in ("controller", "t_f", "population", "final population", "max |u|", "∫V̇dt"):
        table.add_column(col, justify="right")
    for row in result.rows:
        table.add_row(row.kind.value, _fmt(row.t_f), _fmt(row.population_at_reference),
                      _fmt(row.final_population), _fmt(row.max_abs_u), _fmt(row.total_descent))
    console.print(table)


@app.command()
def bound(config: Path = typer.Argument(..., help="Experiment file.")):
    """Evaluate both finite-time bound expressions for the configured initial state."""
    cfg = _load(config)
    if cfg.alpha is None:
        err_console.print("[red]config error[/red] alpha: bounds need the fractional exponents")
        raise typer.Exit(EXIT_CONFIG)
    V0 = lyapunov_value(cfg.initial(), cfg.target_state())
    if V0 <= 0.0:
        console.print("initial state already in the target class: both bounds are 0")
        return
    k_last, a_last = cfg.k[-1], cfg.alpha[-1]
    table = Table(title=f"{cfg.name}: V(0) = {V0:.6g}, β = {cfg.beta:g}")
    table.add_column("expression")
    table.add_column("bound (a.u.)", justify="right")
    table.add_row("theorem   V0^{1-α_f}/(K_f(1-α_f))",
                  f"{bound_theorem_form(V0, cfg.beta, k_last, a_last, cfg.n):.4f}")
    table.add_row("simulation 6/(k(1-α)) V0^{(1-α)/2}",
                  f"{bound_simulation_form(V0, k_last, a_last):.4f}")
    console.print(table)


@app.command()
def lemma1(samples: int = typer.Option(100_000, "--samples", "-N", min=1),
           seed: int = typer.Option(0, help="RNG seed."),
           n_min: int = typer.Option(2, min=1),
           n_max: int = typer.Option(8, min=1)):
    """Random sweep of (Σr²)^{(α+1)/2} ≤ Σ r^{α+1} over non-negative unit vectors."""
    result = lemma1_sweep(samples=samples, seed=seed, n_min=n_min, n_max=n_max)
    status = "[green]holds[/green]" if result.violations == 0 else "[red]VIOLATED[/red]"
    console.print(f"{result.samples} samples: {status} "
                  f"(violations {result.violations}, worst slack {result.worst_slack:.3e}, "
                  f"upper-bound violations {result.upper_violations}, "
                  f"equality at vertices {result.vertex_equality})")


@app.command()
def selftest(quick: bool = typer.Option(False, help="Skip tests marked slow.")):
    """Run the property and reproduction suites."""
    import pytest

    args = [str(Path(__file__).parent), "-q"]
    if quick:
        args += ["-m", "not slow"]
    raise typer.Exit(int(pytest.main(args)))


if __name__ == "__main__":
    app()
