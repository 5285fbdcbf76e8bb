"""FastAPI service: dataset generation, training jobs, evaluation, prediction.

Training can run for many minutes, so POST /runs returns a job id
immediately and the work happens on a background thread; clients poll
GET /runs/{id}.  Everything else is synchronous.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import resolve_config
from ..errors import ConfigError, EpinnError, NumericalError, TrainingError
from ..problems import get_problem
from ..workflows import load_predictor, run_evaluate, run_generate, run_report, run_train
from .schemas import (
    EvaluateRequest,
    EvaluateResponse,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    PredictRequest,
    PredictResponse,
    ReportRequest,
    ReportResponse,
    RunStatusResponse,
    TrainRequest,
    TrainResponse,
)


def _http_error(exc: EpinnError) -> HTTPException:
    if isinstance(exc, ConfigError):
        return HTTPException(status_code=400, detail={"code": "config", "message": str(exc)})
    if isinstance(exc, (NumericalError, TrainingError)):
        return HTTPException(status_code=500, detail={"code": "numerical", "message": str(exc)})
    return HTTPException(status_code=500, detail={"code": "internal", "message": str(exc)})


class JobRegistry:
    def __init__(self):
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    def create(self, run_id: str, total_epochs: int) -> None:
        with self._lock:
            self._jobs[run_id] = {
                "state": "running",
                "progress": {"epoch": 0, "total_epochs": total_epochs},
            }

    def update(self, run_id: str, **fields) -> None:
        with self._lock:
            self._jobs[run_id].update(fields)

    def set_progress(self, run_id: str, progress: dict) -> None:
        with self._lock:
            self._jobs[run_id]["progress"] = progress

    def get(self, run_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(run_id)
            return dict(job) if job is not None else None


app = FastAPI(title="epinn service", version=__version__)
jobs = JobRegistry()


def _resolve(preset, config, **named):
    overrides = dict(config or {})
    train_over = dict(overrides.get("train", {}))
    if named.get("epochs") is not None:
        train_over["epochs"] = named["epochs"]
    if train_over:
        overrides["train"] = train_over
    for key in ("problem", "method", "out_dir", "dataset"):
        if named.get(key) is not None:
            overrides[key] = named[key]
    if named.get("seed") is not None:
        overrides["seed"] = named["seed"]
    try:
        return resolve_config(preset=preset, overrides=overrides)
    except EpinnError as exc:
        raise _http_error(exc) from exc


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/datasets", response_model=GenerateResponse)
def generate(req: GenerateRequest) -> GenerateResponse:
    cfg = _resolve(req.preset, req.config, problem=req.problem, out_dir=req.out_dir)
    if req.seed is not None:
        cfg.dataset_seed = req.seed
    try:
        out = run_generate(cfg)
    except EpinnError as exc:
        raise _http_error(exc) from exc
    return GenerateResponse(
        dataset_csv=str(out.dataset_csv),
        manifest=str(out.manifest),
        n_obs=out.n_obs,
        n_colloc=out.n_colloc,
        n_boundary=out.n_boundary,
        n_test=out.n_test,
    )


@app.post("/runs", response_model=TrainResponse, status_code=202)
def start_run(req: TrainRequest) -> TrainResponse:
    cfg = _resolve(
        req.preset, req.config,
        problem=req.problem, method=req.method, seed=req.seed,
        epochs=req.epochs, out_dir=req.out_dir, dataset=req.dataset,
    )
    run_id = uuid.uuid4().hex[:12]
    jobs.create(run_id, total_epochs=cfg.train.epochs)

    def progress(*args):
        if len(args) == 4:  # single-model loop: epoch, total, parts, kappa
            epoch, total, parts, kappa = args
            jobs.set_progress(run_id, {
                "epoch": epoch,
                "total_epochs": total,
                "total_loss": parts["total"],
                "kappa_mean": kappa.mean_value,
                "kappa_sigma": kappa.sigma_value,
            })
        else:  # ensemble: members done, members total
            done, total = args
            jobs.set_progress(run_id, {"members_done": done, "members_total": total})

    def work():
        try:
            outcome = run_train(cfg, progress=progress)
        except ConfigError as exc:
            jobs.update(run_id, state="failed", error=str(exc), error_code="config")
        except (NumericalError, TrainingError) as exc:
            jobs.update(run_id, state="failed", error=str(exc), error_code="numerical")
        except Exception as exc:  # pragma: no cover - surfaced to the client
            jobs.update(run_id, state="failed", error=str(exc), error_code="internal")
        else:
            jobs.update(
                run_id,
                state="done",
                summary=outcome.summary,
                outputs={
                    "checkpoint": str(outcome.checkpoint),
                    "curves": str(outcome.curves) if outcome.curves else None,
                    "manifest": str(outcome.manifest),
                },
            )

    threading.Thread(target=work, name=f"train-{run_id}", daemon=True).start()
    return TrainResponse(run_id=run_id, state="running")


@app.get("/runs/{run_id}", response_model=RunStatusResponse)
def run_status(run_id: str) -> RunStatusResponse:
    job = jobs.get(run_id)
    if job is None:
        raise HTTPException(status_code=404, detail={"code": "config", "message": f"unknown run {run_id}"})
    return RunStatusResponse(run_id=run_id, **job)


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate(req: EvaluateRequest) -> EvaluateResponse:
    try:
        out = run_evaluate(req.checkpoint, req.dataset, req.out_dir)
    except EpinnError as exc:
        raise _http_error(exc) from exc
    return EvaluateResponse(
        report=out.report.to_dict(),
        metrics_json=str(out.metrics_json),
        report_txt=str(out.report_txt),
        plots=[str(p) for p in out.plots],
    )


@app.post("/report", response_model=ReportResponse)
def report(req: ReportRequest) -> ReportResponse:
    try:
        out = run_report(req.run_dir)
    except EpinnError as exc:
        raise _http_error(exc) from exc
    return ReportResponse(text=out.text, report_txt=str(out.report_txt), plots=[str(p) for p in out.plots])


@app.post("/predict", response_model=PredictResponse)
def predict(req: PredictRequest) -> PredictResponse:
    try:
        predictor = load_predictor(req.checkpoint)
        points = np.asarray(req.points, dtype=np.float64)
        expected = get_problem(predictor.problem).dimension if predictor.problem else None
        if points.ndim != 2 or (expected is not None and points.shape[1] != expected):
            raise ConfigError(
                f"points must have shape (n, {expected}); got {list(points.shape)}"
            )
        if predictor.predict_full is not None:
            full = predictor.predict_full(points)
            return PredictResponse(
                mean=full["mean"].tolist(),
                sigma_p=full["sigma_p"].tolist(),
                aleatoric=full["aleatoric"].tolist(),
                epistemic=full["epistemic"].tolist(),
            )
        mean, sigma_p = predictor.predict(points)
        return PredictResponse(mean=mean.tolist(), sigma_p=sigma_p.tolist())
    except EpinnError as exc:
        raise _http_error(exc) from exc
