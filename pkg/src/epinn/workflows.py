"""End-to-end operations behind the service endpoints and CLI commands.

Every run directory gets a manifest (full resolved config, seeds, dataset
hash, package version) so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, NumericalError
from .metrics import MetricsReport, evaluate_predictions, format_report_table
from .model import PlainNetwork, load_checkpoint, model_state
from .plots import plot_1d_prediction, plot_2d_heatmaps, plot_learning_curve
from .problems import dataset_from_csv, dataset_to_csv, generate_dataset, get_problem
from .training import (
    ensemble_from_state,
    ensemble_state,
    train_deep_ensemble,
    train_epinn,
)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=1, default=str))
    return path


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _noise_manifest(noise) -> dict:
    d = dataclasses.asdict(noise)
    d["type"] = type(noise).__name__
    return d


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

@dataclass
class GenerateOutcome:
    dataset_csv: Path
    manifest: Path
    n_obs: int
    n_colloc: int
    n_boundary: int
    n_test: int


def run_generate(cfg: RunConfig) -> GenerateOutcome:
    problem = get_problem(cfg.problem)
    ds = generate_dataset(problem, cfg.noise, cfg.counts, seed=cfg.dataset_seed)
    _ensure_dir(cfg.out_dir)
    csv = cfg.out_dir / "dataset.csv"
    dataset_to_csv(ds, csv)
    manifest = _write_json(
        cfg.out_dir / "dataset_manifest.json",
        {
            "kind": "dataset",
            "version": __version__,
            "problem": cfg.problem,
            "seed": cfg.dataset_seed,
            "counts": dataclasses.asdict(cfg.counts),
            "noise": _noise_manifest(cfg.noise),
            "sha256": _sha256(csv),
            "created_unix": time.time(),
        },
    )
    return GenerateOutcome(
        dataset_csv=csv,
        manifest=manifest,
        n_obs=ds.obs.x.shape[0],
        n_colloc=ds.colloc.shape[0],
        n_boundary=ds.boundary.x.shape[0],
        n_test=ds.test_x.shape[0],
    )


def _load_dataset_for(cfg_problem: str, path: Path):
    if not path.exists():
        raise ConfigError(f"dataset not found: {path}")
    ds = dataset_from_csv(path, problem=cfg_problem)
    problem = get_problem(cfg_problem)
    if ds.obs.x.shape[1] != problem.dimension:
        raise ConfigError(
            f"dataset at {path} has {ds.obs.x.shape[1]} coordinate(s); "
            f"problem {cfg_problem!r} needs {problem.dimension}"
        )
    return problem, ds


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@dataclass
class TrainOutcome:
    checkpoint: Path
    curves: Path | None
    manifest: Path
    summary: dict


def run_train(cfg: RunConfig, progress=None) -> TrainOutcome:
    _ensure_dir(cfg.out_dir)
    if cfg.dataset is not None:
        problem, ds = _load_dataset_for(cfg.problem, cfg.dataset)
        dataset_csv = cfg.dataset
    else:
        generated = run_generate(cfg)
        problem, ds = _load_dataset_for(cfg.problem, generated.dataset_csv)
        dataset_csv = generated.dataset_csv

    meta = {
        "problem": cfg.problem,
        "method": cfg.method,
        "seed": cfg.seed,
        "weights": {
            "lambda_d": cfg.train.weights.lambda_d,
            "lambda_kl": cfg.train.weights.lambda_kl,
            "lambda_r": cfg.train.weights.lambda_r,
            "beta_r": cfg.train.weights.beta_r,
            "variant": cfg.train.weights.variant.value,
        },
    }

    curves_path: Path | None = None
    if cfg.method == "deep_ensemble":
        result = train_deep_ensemble(
            problem, ds, cfg.network, cfg.train,
            n_members=cfg.n_members, n_jobs=cfg.n_jobs, progress=progress,
        )
        meta.update(kappa_mean=result.kappa_mean, kappa_sigma=result.kappa_sigma)
        checkpoint = _write_json(cfg.out_dir / "checkpoint.json", ensemble_state(result, meta))
        summary = {
            "method": cfg.method,
            "kappa_mean": result.kappa_mean,
            "kappa_sigma": result.kappa_sigma,
            "n_members": result.n_requested,
            "n_dropped": result.n_dropped,
            "runtime_s": result.runtime_s,
            "diverged": False,
        }
        members = cfg.out_dir / "ensemble_members.csv"
        with open(members, "w") as f:
            f.write("seed,kappa\n")
            for s, k in zip(result.member_seeds, result.member_kappas):
                f.write(f"{s},{k!r}\n")
        curves_path = members
    else:
        result = train_epinn(problem, ds, cfg.network, cfg.train, progress=progress)
        checkpoint = cfg.out_dir / "checkpoint.json"
        _write_json(checkpoint, model_state(result.model, result.kappa, meta))
        curves_path = cfg.out_dir / "curves.csv"
        result.curve.to_frame().to_csv(curves_path, index=False)
        summary = {
            "method": cfg.method,
            "kappa_mean": result.kappa_mean,
            "kappa_sigma": result.kappa_sigma,
            "runtime_s": result.runtime_s,
            "diverged": result.diverged,
            "message": result.message,
            "final_loss": result.curve.total[-1] if result.curve.total else None,
        }

    manifest = _write_json(
        cfg.out_dir / "run_manifest.json",
        {
            "kind": "run",
            "version": __version__,
            "config": cfg.raw,
            "dataset_csv": str(dataset_csv),
            "dataset_sha256": _sha256(Path(dataset_csv)),
            "summary": summary,
            "created_unix": time.time(),
        },
    )
    outcome = TrainOutcome(checkpoint=checkpoint, curves=curves_path, manifest=manifest, summary=summary)
    if summary.get("diverged"):
        raise NumericalError(
            f"training diverged: {summary.get('message', '')} "
            f"(last-good checkpoint kept at {checkpoint})"
        )
    return outcome


# ---------------------------------------------------------------------------
# predictors from checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Predictor:
    predict: callable  # X -> (mean, sigma_p)
    predict_full: callable | None  # X -> dict with aleatoric/epistemic split
    problem: str
    method: str
    kappa_mean: float
    kappa_sigma: float
    has_uncertainty: bool


def load_predictor(path) -> Predictor:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    state = json.loads(path.read_text())
    fmt = state.get("format")
    if fmt == "epinn-ensemble-v1":
        result, meta = ensemble_from_state(state)
        return Predictor(
            predict=result.predict,
            predict_full=None,
            problem=meta.get("problem", ""),
            method=meta.get("method", "deep_ensemble"),
            kappa_mean=result.kappa_mean,
            kappa_sigma=result.kappa_sigma,
            has_uncertainty=True,
        )
    model, kappa, meta = load_checkpoint(path)
    if isinstance(model, PlainNetwork):
        def predict(x):
            mean = model.predict_mean(x)
            return mean, np.zeros_like(mean)

        return Predictor(
            predict=predict,
            predict_full=None,
            problem=meta.get("problem", ""),
            method=meta.get("method", "plain_pinn"),
            kappa_mean=kappa.mean_value,
            kappa_sigma=kappa.sigma_value,
            has_uncertainty=False,
        )

    def predict(x):
        p = model.predict(x)
        return p.mean, p.sigma_p

    def predict_full(x):
        p = model.predict(x)
        return {
            "mean": p.mean,
            "sigma_p": p.sigma_p,
            "aleatoric": p.aleatoric,
            "epistemic": p.epistemic,
        }

    return Predictor(
        predict=predict,
        predict_full=predict_full,
        problem=meta.get("problem", ""),
        method=meta.get("method", "epinn"),
        kappa_mean=kappa.mean_value,
        kappa_sigma=kappa.sigma_value,
        has_uncertainty=True,
    )


# ---------------------------------------------------------------------------
# evaluate and report
# ---------------------------------------------------------------------------

@dataclass
class EvaluateOutcome:
    report: MetricsReport
    metrics_json: Path
    report_txt: Path
    plots: list[Path]


def run_evaluate(checkpoint, dataset_csv, out_dir, method: str | None = None) -> EvaluateOutcome:
    out_dir = Path(out_dir)
    _ensure_dir(out_dir)
    predictor = load_predictor(checkpoint)
    if not predictor.problem:
        raise ConfigError(f"checkpoint {checkpoint} does not name its problem")
    problem, ds = _load_dataset_for(predictor.problem, Path(dataset_csv))

    report = evaluate_predictions(
        predictor.predict,
        ds,
        problem,
        kappa_mean=predictor.kappa_mean,
        kappa_sigma=predictor.kappa_sigma,
        method=method or predictor.method,
        has_uncertainty=predictor.has_uncertainty,
    )
    metrics_json = _write_json(
        out_dir / "metrics.json",
        {
            "kind": "metrics",
            "version": __version__,
            "checkpoint": str(checkpoint),
            "dataset": str(dataset_csv),
            "report": report.to_dict(),
        },
    )
    report_txt = out_dir / "report.txt"
    report_txt.write_text(format_report_table([report]))

    mean, sigma_p = predictor.predict(ds.test_x)
    if problem.dimension == 1:
        paths = [
            plot_1d_prediction(
                ds, mean, sigma_p, out_dir / "prediction.svg",
                train_hi=problem.train_bounds[0][1],
            )
        ]
    else:
        paths = plot_2d_heatmaps(ds, mean, sigma_p, out_dir, stem="field")
    return EvaluateOutcome(report=report, metrics_json=metrics_json, report_txt=report_txt, plots=paths)


@dataclass
class ReportOutcome:
    text: str
    report_txt: Path
    plots: list[Path]


def run_report(run_dir) -> ReportOutcome:
    """Re-render the metric table (and learning curves, if present) for a run
    directory containing metrics*.json / curves.csv artifacts."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"run directory not found: {run_dir}")
    reports = []
    for path in sorted(run_dir.glob("metrics*.json")):
        payload = json.loads(path.read_text())
        reports.append(MetricsReport.from_dict(payload["report"]))
    plots: list[Path] = []
    curves = run_dir / "curves.csv"
    if curves.exists():
        import pandas as pd

        plots.append(plot_learning_curve(pd.read_csv(curves), run_dir / "learning_curve.svg"))
    if not reports:
        if plots:
            text = f"no metrics found in {run_dir}; rendered learning curve only\n"
            out = run_dir / "report.txt"
            out.write_text(text)
            return ReportOutcome(text=text, report_txt=out, plots=plots)
        raise ConfigError(f"no metrics*.json or curves.csv in {run_dir}")
    text = format_report_table(reports)
    out = run_dir / "report.txt"
    out.write_text(text)
    return ReportOutcome(text=text, report_txt=out, plots=plots)
