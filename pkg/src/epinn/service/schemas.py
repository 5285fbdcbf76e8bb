"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    out_dir: str
    preset: str | None = None
    problem: str | None = None
    seed: int | None = Field(default=None, description="dataset seed")
    config: dict = Field(default_factory=dict, description="raw config overrides, merged last")


class GenerateResponse(BaseModel):
    dataset_csv: str
    manifest: str
    n_obs: int
    n_colloc: int
    n_boundary: int
    n_test: int


class TrainRequest(BaseModel):
    out_dir: str
    preset: str | None = None
    problem: str | None = None
    method: str | None = None
    seed: int | None = None
    epochs: int | None = None
    dataset: str | None = Field(default=None, description="path to an existing dataset CSV")
    config: dict = Field(default_factory=dict, description="raw config overrides, merged last")


class TrainResponse(BaseModel):
    run_id: str
    state: str


class RunStatusResponse(BaseModel):
    run_id: str
    state: str  # running | done | failed
    progress: dict | None = None
    summary: dict | None = None
    outputs: dict | None = None
    error: str | None = None
    error_code: str | None = None


class EvaluateRequest(BaseModel):
    checkpoint: str
    dataset: str
    out_dir: str


class EvaluateResponse(BaseModel):
    report: dict
    metrics_json: str
    report_txt: str
    plots: list[str]


class ReportRequest(BaseModel):
    run_dir: str


class ReportResponse(BaseModel):
    text: str
    report_txt: str
    plots: list[str]


class PredictRequest(BaseModel):
    checkpoint: str
    points: list[list[float]]


class PredictResponse(BaseModel):
    mean: list[float]
    sigma_p: list[float]
    aleatoric: list[float] | None = None
    epistemic: list[float] | None = None
