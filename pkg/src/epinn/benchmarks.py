"""Full-scale benchmark experiments with JSON-serializable results.

These are the canned table1/table2 runs: shared dataset seed, default
network sizes, default weights, 1e5 epochs.  Each runner returns a plain
dict so results can be cached, shipped across process boundaries, and
diffed between sessions.
"""

from __future__ import annotations

import numpy as np

from .losses import LossWeights, Variant
from .metrics import evaluate_predictions
from .model import model_from_state, model_state
from .problems import Dataset, generate_dataset, get_problem
from .training import (
    EnsembleResult,
    TrainConfig,
    default_network_config,
    train_epinn,
)

BENCHMARK_DATASET_SEED = 42
BENCHMARK_EPOCHS = 100_000

_WEIGHTS = {
    "poisson1d": dict(lambda_d=1.0, lambda_kl=0.01, lambda_r=0.1),
    "diffreact2d": dict(lambda_d=1.0, lambda_kl=0.005, lambda_r=0.05),
}


def benchmark_weights(problem_name: str, variant: Variant = Variant.EPINN) -> LossWeights:
    return LossWeights(variant=variant, **_WEIGHTS[problem_name])


def benchmark_dataset(problem_name: str, seed: int = BENCHMARK_DATASET_SEED) -> Dataset:
    return generate_dataset(get_problem(problem_name), seed=seed)


def _limit_threads():
    try:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=1)
    except ImportError:  # pragma: no cover
        import contextlib

        return contextlib.nullcontext()


def run_evidential_benchmark(
    problem_name: str,
    seed: int,
    epochs: int = BENCHMARK_EPOCHS,
    variant: Variant = Variant.EPINN,
    dataset_seed: int = BENCHMARK_DATASET_SEED,
) -> dict:
    """Train one evidential model at benchmark scale and score it."""
    problem = get_problem(problem_name)
    ds = benchmark_dataset(problem_name, dataset_seed)
    cfg = TrainConfig(epochs=epochs, weights=benchmark_weights(problem_name, variant), seed=seed)
    with _limit_threads():
        result = train_epinn(problem, ds, default_network_config(problem, seed), cfg)

    def predict(x):
        p = result.model.predict(x)
        return p.mean, p.sigma_p

    report = evaluate_predictions(
        predict, ds, problem,
        kappa_mean=result.kappa_mean, kappa_sigma=result.kappa_sigma,
        method=variant.value,
    )
    return {
        "problem": problem_name,
        "seed": seed,
        "epochs": epochs,
        "variant": variant.value,
        "diverged": result.diverged,
        "runtime_s": result.runtime_s,
        "kappa_mean": result.kappa_mean,
        "kappa_sigma": result.kappa_sigma,
        "report": report.to_dict(),
        "kappa_tail_fluctuation": result.curve.tail_fluctuation("kappa_mean", frac=0.1),
        "sigma_kappa_min_logged": float(np.min(result.curve.kappa_sigma)),
        "curve_epochs": result.curve.epochs,
        "curve_kappa_mean": result.curve.kappa_mean,
        "curve_kappa_sigma": result.curve.kappa_sigma,
    }


def run_member_benchmark(
    problem_name: str,
    seed: int,
    epochs: int = BENCHMARK_EPOCHS,
    dataset_seed: int = BENCHMARK_DATASET_SEED,
) -> dict:
    """Train one plain-PINN ensemble member; returns its checkpoint state."""
    problem = get_problem(problem_name)
    ds = benchmark_dataset(problem_name, dataset_seed)
    cfg = TrainConfig(
        epochs=epochs,
        weights=benchmark_weights(problem_name, Variant.PLAIN_PINN),
        seed=seed,
    )
    with _limit_threads():
        result = train_epinn(problem, ds, default_network_config(problem, seed), cfg)
    return {
        "problem": problem_name,
        "seed": seed,
        "epochs": epochs,
        "diverged": result.diverged,
        "runtime_s": result.runtime_s,
        "kappa": result.kappa_mean,
        "state": model_state(result.model, result.kappa),
    }


def ensemble_report_from_members(problem_name: str, members: list[dict],
                                 dataset_seed: int = BENCHMARK_DATASET_SEED) -> dict:
    """Pool trained members into a deep-ensemble report on the shared dataset."""
    problem = get_problem(problem_name)
    ds = benchmark_dataset(problem_name, dataset_seed)
    survivors = [m for m in members if not m["diverged"]]
    models = [model_from_state(m["state"])[0] for m in survivors]
    kappas = np.array([m["kappa"] for m in survivors])
    result = EnsembleResult(
        models=models,
        member_kappas=kappas.tolist(),
        member_seeds=[m["seed"] for m in survivors],
        kappa_mean=float(kappas.mean()),
        kappa_sigma=float(kappas.std(ddof=1)),
        n_requested=len(members),
        n_dropped=len(members) - len(survivors),
    )
    report = evaluate_predictions(
        result.predict, ds, problem,
        kappa_mean=result.kappa_mean, kappa_sigma=result.kappa_sigma,
        method="deep_ensemble",
    )
    return {
        "problem": problem_name,
        "kappa_mean": result.kappa_mean,
        "kappa_sigma": result.kappa_sigma,
        "n_dropped": result.n_dropped,
        "report": report.to_dict(),
    }


def benchmark_task(task: dict) -> dict:
    """Process-pool entry point: dispatch one benchmark unit of work."""
    kind = task["kind"]
    if kind == "evidential":
        return run_evidential_benchmark(
            task["problem"], task["seed"], task.get("epochs", BENCHMARK_EPOCHS),
            Variant(task.get("variant", "epinn")),
        )
    if kind == "member":
        return run_member_benchmark(task["problem"], task["seed"], task.get("epochs", BENCHMARK_EPOCHS))
    raise ValueError(f"unknown benchmark task kind {kind!r}")
