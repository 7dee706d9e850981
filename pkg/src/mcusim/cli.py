"""Command-line front end: run, check, metrics, serve.

Thin client over the core package; the HTTP service exposes the same
three operations.  Exit codes: 0 clean, 1 input error, 2 lint failure,
3 contained MPU violations observed.
"""

from __future__ import annotations

import json
import sys
from typing import Optional

import click

from .kernel import ConfigError
from .memmap import OverlapError, PartitionError, SchemaError
from .scenario import load_scenario_file
from .simulator import (
    check_scenario,
    exit_code_for_check,
    exit_code_for_run,
    metrics_scenario,
    run_scenario,
)

INPUT_ERRORS = (SchemaError, OverlapError, PartitionError, ConfigError, OSError)


def _emit(document: dict, out: Optional[str]) -> None:
    text = json.dumps(document, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _parse_toggles(pairs) -> dict:
    toggles = {}
    for pair in pairs:
        name, _, raw = pair.partition("=")
        if not name or raw not in ("true", "false", "1", "0"):
            raise SchemaError(f"--toggle expects NAME=true|false, got {pair!r}")
        toggles[name] = raw in ("true", "1")
    return toggles


mode_option = click.option(
    "--mode", "mode", type=click.Choice(["dbox", "fmpu_compat"]), default=None,
    help="Override the scenario's protection mode.",
)
out_option = click.option("--out", "out", type=click.Path(), default=None,
                          help="Write the report here instead of stdout.")


@click.group()
def main():
    """Deterministic MCU compartmentalization simulator."""


@main.command("run")
@click.argument("scenario_path")
@click.option("--ticks", type=int, default=None, help="Override the tick limit.")
@click.option("--trace", is_flag=True, help="Include the event trace in the report.")
@click.option("--toggle", "toggles", multiple=True, metavar="NAME=BOOL",
              help="Override an attack toggle (repeatable).")
@mode_option
@out_option
@click.pass_context
def run_command(ctx, scenario_path, ticks, trace, toggles, mode, out):
    """Simulate a scenario and emit its report."""
    try:
        scenario = load_scenario_file(scenario_path, mode, _parse_toggles(toggles))
        if ticks is not None:
            scenario.tick_limit = ticks
        report = run_scenario(scenario, with_trace=trace)
    except INPUT_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(1)
    _emit(report, out)
    ctx.exit(exit_code_for_run(report))


@main.command("check")
@click.argument("scenario_path")
@mode_option
@out_option
@click.pass_context
def check_command(ctx, scenario_path, mode, out):
    """Lint a scenario's task layouts without simulating."""
    try:
        scenario = load_scenario_file(scenario_path, mode)
        report = check_scenario(scenario)
    except INPUT_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(1)
    _emit(report, out)
    ctx.exit(exit_code_for_check(report))


@main.command("metrics")
@click.argument("scenario_path")
@mode_option
@out_option
@click.pass_context
def metrics_command(ctx, scenario_path, mode, out):
    """Emit standard and worst-case exposure for every unprivileged task."""
    try:
        scenario = load_scenario_file(scenario_path, mode)
        report = metrics_scenario(scenario)
    except INPUT_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(1)
    _emit(report, out)
    ctx.exit(0)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve_command(host, port):
    """Start the HTTP service exposing run, check, and metrics."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
