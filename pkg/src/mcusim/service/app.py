"""FastAPI application wrapping the simulator core.

Every endpoint is stateless: the scenario document travels in the request
body and the deterministic report comes back in the response, so any
number of clients can share one instance.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..kernel import ConfigError
from ..memmap import OverlapError, PartitionError, SchemaError
from ..scenario import (
    load_scenario,
    packaged_scenario_names,
    read_scenario_document,
)
from ..simulator import (
    check_scenario,
    exit_code_for_check,
    exit_code_for_run,
    metrics_scenario,
    run_scenario,
)
from .models import (
    CheckRequest,
    CheckResponse,
    MetricsRequest,
    MetricsResponse,
    RunRequest,
    RunResponse,
    ScenarioListResponse,
)

app = FastAPI(title="mcusim", version=__version__)

INPUT_ERRORS = (SchemaError, OverlapError, PartitionError, ConfigError)


def _scenario_from(document: dict, mode=None, toggles=None):
    try:
        return load_scenario(document, mode_override=mode, toggle_overrides=toggles)
    except INPUT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/scenarios", response_model=ScenarioListResponse)
def scenarios() -> ScenarioListResponse:
    return ScenarioListResponse(scenarios=packaged_scenario_names())


@app.get("/scenarios/{name}")
def scenario_document(name: str) -> dict:
    try:
        return read_scenario_document(name)
    except SchemaError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from None


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    scenario = _scenario_from(request.scenario, request.mode, request.toggles)
    if request.ticks is not None:
        scenario.tick_limit = request.ticks
    report = run_scenario(scenario, with_trace=request.trace)
    return RunResponse(
        report=report,
        exit_code=exit_code_for_run(report),
        mpu_violations=report["mpu_violations"],
        termination=report["termination"],
    )


@app.post("/check", response_model=CheckResponse)
def check(request: CheckRequest) -> CheckResponse:
    scenario = _scenario_from(request.scenario, request.mode)
    report = check_scenario(scenario)
    return CheckResponse(
        report=report,
        exit_code=exit_code_for_check(report),
        voided=report["voided"],
        warnings=report["warnings"],
    )


@app.post("/metrics", response_model=MetricsResponse)
def metrics(request: MetricsRequest) -> MetricsResponse:
    scenario = _scenario_from(request.scenario, request.mode)
    return MetricsResponse(report=metrics_scenario(scenario))
