"""Command-line entry points: run | mc | export-lp | serve.

Exit codes: 0 success, 2 scenario/usage error, 3 internal fault.
"""

from __future__ import annotations

import json
import sys

import click

from .milp import AdapterError, MilpError, export_lp, make_solver
from .scheduler import EngineError
from .simulate import ScenarioError, load_scenario, monte_carlo, run_episode

EXIT_SCENARIO = 2
EXIT_FAULT = 3


def _solver(spec: str):
    try:
        return make_solver(spec)
    except MilpError as exc:
        raise click.UsageError(str(exc)) from exc


def _load(path: str):
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_SCENARIO)


def _write(out: str, text: str):
    if out == "-":
        click.echo(text, nl=False)
    else:
        with open(out, "w") as fh:
            fh.write(text)


@click.group()
def main():
    """Risk-aware tube-MPC engine for runtime temporal-logic tasks."""


@main.command()
@click.option("--scenario", required=True, type=click.Path(), help="scenario JSON file")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default="-", show_default=True, help="trace output path or -")
@click.option("--solver", default="builtin", show_default=True,
              help="builtin | scipy | external:<cmd>")
def run(scenario, seed, out, solver):
    """Run one closed-loop episode and write a JSON-lines trace."""
    sc = _load(scenario)
    try:
        trace = run_episode(sc, seed=seed, solver=_solver(solver))
    except (EngineError, MilpError, AdapterError) as exc:
        click.echo(f"internal fault: {exc}", err=True)
        sys.exit(EXIT_FAULT)
    _write(out, trace.to_jsonl())


def _positive(ctx, param, value):
    if value < 1:
        raise click.UsageError(f"{param.name} must be at least 1")
    return value


@main.command()
@click.option("--scenario", required=True, type=click.Path())
@click.option("--episodes", required=True, type=int, callback=_positive)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default="-", show_default=True)
@click.option("--solver", default="builtin", show_default=True)
def mc(scenario, episodes, seed, out, solver):
    """Monte Carlo: empirical satisfaction frequency vs guaranteed bound."""
    sc = _load(scenario)
    try:
        report = monte_carlo(sc, episodes, seed_base=seed, solver=_solver(solver))
    except (EngineError, MilpError, AdapterError) as exc:
        click.echo(f"internal fault: {exc}", err=True)
        sys.exit(EXIT_FAULT)
    _write(out, json.dumps(report, indent=2) + "\n")


@main.command("export-lp")
@click.option("--scenario", required=True, type=click.Path())
@click.option("--out", default="-", show_default=True)
def export_lp_cmd(scenario, out):
    """Write the step-0 scheduling MILP of a scenario in LP format."""
    sc = _load(scenario)
    engine = sc.make_engine()
    from .encoding import encode
    from . import stl as stl_mod

    new_enc = None
    r_max = None
    for ev in sc.events:
        if ev.time == 0:
            f = stl_mod.parse(ev.stl, engine.predicates_norm)
            new_enc = encode(
                f, 0, engine.config.M, engine.config.eps, plan_horizon=engine.config.N
            )
            r_max = ev.r_max
    x_norm = engine.norm.to_normalized(sc.x0)
    engine.plan.z[0] = x_norm
    model, _ = engine.build_problem(0, x_norm, new_enc, r_max)
    _write(out, export_lp(model))


@main.command()
@click.option("--scenario", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--solver", default="builtin", show_default=True)
def serve(scenario, seed, host, port, solver):
    """Serve the HTTP JSON API for one live session."""
    import uvicorn

    from .service import create_app

    sc = _load(scenario)
    app = create_app(sc, seed=seed, solver=_solver(solver))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
