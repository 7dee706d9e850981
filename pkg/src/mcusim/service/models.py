"""Request and response schemas for the simulation service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    scenario: dict = Field(description="Scenario document, same shape as the file format")
    ticks: Optional[int] = Field(default=None, ge=0, description="Tick limit override")
    mode: Optional[str] = Field(default=None, description="dbox or fmpu_compat")
    trace: bool = False
    toggles: dict[str, bool] = Field(default_factory=dict)


class RunResponse(BaseModel):
    report: dict
    exit_code: int
    mpu_violations: int
    termination: str


class CheckRequest(BaseModel):
    scenario: dict
    mode: Optional[str] = None


class CheckResponse(BaseModel):
    report: dict
    exit_code: int
    voided: int
    warnings: int


class MetricsRequest(BaseModel):
    scenario: dict
    mode: Optional[str] = None


class MetricsResponse(BaseModel):
    report: dict


class ScenarioListResponse(BaseModel):
    scenarios: list[str]
