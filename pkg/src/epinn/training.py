"""Adam optimizer, the evidential training loop, and the deep-ensemble baseline.

Training is full batch: 200 observations + 500 collocation points fit in one
graph, and the loss weights were chosen for mean-reduced batches.  Every run
is deterministic given its seeds.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
import pandas as pd

from . import autodiff as ad
from .errors import ConfigError, NumericalError, TrainingError
from .losses import LossWeights, Variant, total_loss
from .model import (
    EvidentialNetwork,
    KappaPosterior,
    NetworkConfig,
    PlainNetwork,
    model_from_state,
    model_state,
)
from .problems import Dataset, ProblemSpec, get_problem

logger = logging.getLogger("epinn")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 100_000
    learning_rate: float = 1e-3
    weights: LossWeights = field(default_factory=LossWeights)
    log_every: int = 500
    seed: int = 0
    divergence_limit: float = 1e6

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")


# ---------------------------------------------------------------------------
# Adam with bias correction
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS


def init_adam(params: list[np.ndarray]) -> AdamState:
    return AdamState(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float):
    """One bias-corrected Adam update, in place.  Returns (params, state)."""
    if len(params) != len(grads):
        raise ConfigError("params and grads length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient in Adam step")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# learning curves
# ---------------------------------------------------------------------------

@dataclass
class LearningCurve:
    epochs: list[int] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    data: list[float] = field(default_factory=list)
    regularizer: list[float | None] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    kappa_mean: list[float] = field(default_factory=list)
    kappa_sigma: list[float] = field(default_factory=list)

    def append(self, epoch: int, parts: dict, kappa: KappaPosterior) -> None:
        self.epochs.append(epoch)
        self.total.append(parts["total"])
        self.data.append(parts["data"])
        self.regularizer.append(parts["regularizer"])
        self.residual.append(parts["residual"])
        self.kappa_mean.append(kappa.mean_value)
        self.kappa_sigma.append(kappa.sigma_value)

    def to_frame(self) -> pd.DataFrame:
        cols = {
            "epoch": self.epochs,
            "total": self.total,
            "data": self.data,
            "regularizer": self.regularizer,
            "residual": self.residual,
            "kappa_mean": self.kappa_mean,
            "kappa_sigma": self.kappa_sigma,
        }
        if all(v is None for v in self.regularizer):
            del cols["regularizer"]
        return pd.DataFrame(cols)

    def tail_fluctuation(self, series: str = "kappa_mean", frac: float = 0.1) -> float:
        """(max - min) / |mean| over the last ``frac`` of logged epochs."""
        values = np.asarray(getattr(self, series), dtype=np.float64)
        n = max(2, int(np.ceil(frac * len(values))))
        tail = values[-n:]
        denom = max(abs(tail.mean()), 1e-12)
        return float((tail.max() - tail.min()) / denom)


@dataclass
class TrainResult:
    model: EvidentialNetwork
    kappa: KappaPosterior
    curve: LearningCurve
    diverged: bool = False
    message: str = ""
    runtime_s: float = 0.0

    @property
    def kappa_mean(self) -> float:
        return self.kappa.mean_value

    @property
    def kappa_sigma(self) -> float:
        return self.kappa.sigma_value


def default_network_config(problem: ProblemSpec, seed: int = 0) -> NetworkConfig:
    """Three hidden layers for the 1D benchmark, two for the 2D one."""
    return NetworkConfig(
        input_dim=problem.dimension,
        hidden_layers=3 if problem.dimension == 1 else 2,
        hidden_width=64,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

def train_epinn(
    problem: ProblemSpec,
    dataset: Dataset,
    net_config: NetworkConfig | None = None,
    train_config: TrainConfig | None = None,
    progress=None,
) -> TrainResult:
    """Full-batch gradient training of the weighted objective.

    The variant comes from ``train_config.weights``: the two evidential
    variants train an NIG-head network plus the (mean, sigma) coefficient
    posterior; the plain variant trains a single-output network with kappa as
    an ordinary scalar (spread pinned at zero).  On divergence the last
    logged parameters are restored and the result is flagged.
    """
    cfg = train_config or TrainConfig()
    net_cfg = net_config or default_network_config(problem, seed=cfg.seed)
    if net_cfg.input_dim != problem.dimension:
        raise ConfigError(
            f"network input_dim {net_cfg.input_dim} does not match problem dimension {problem.dimension}"
        )
    plain = cfg.weights.variant is Variant.PLAIN_PINN
    model = PlainNetwork(net_cfg) if plain else EvidentialNetwork(net_cfg)
    kappa = KappaPosterior(mean=0.0, learn_sigma=False) if plain else KappaPosterior(mean=0.0, sigma=0.5)

    obs = dataset.training_points()
    colloc = dataset.colloc
    params = model.parameters() + kappa.parameters()

    # all parameters live in one flat buffer (views keep shapes), so the
    # optimizer update is a handful of vector ops instead of one per array
    flat = np.concatenate([p.value.ravel() for p in params])
    offset = 0
    slices = []
    for p in params:
        n = p.value.size
        p.value = flat[offset : offset + n].reshape(p.value.shape)
        slices.append((offset, offset + n))
        offset += n
    flat_grad = np.zeros_like(flat)
    state = init_adam([flat])
    curve = LearningCurve()
    snapshot = flat.copy()

    def is_bad(x: float) -> bool:
        return not np.isfinite(x) or abs(x) > cfg.divergence_limit

    diverged = False
    message = ""
    start = time.perf_counter()
    epoch = 0
    for step in range(1, cfg.epochs + 1):
        epoch = step - 1  # parts below describe the pre-update state
        ad.reset_adjoints(params)
        try:
            root, parts = total_loss(obs, colloc, model, kappa, problem, cfg.weights)
        except NumericalError as exc:
            diverged, message = True, str(exc)
            break
        if is_bad(parts["total"]):
            diverged, message = True, f"total loss {parts['total']} at epoch {epoch}"
            break
        if epoch % cfg.log_every == 0:
            curve.append(epoch, parts, kappa)
            np.copyto(snapshot, flat)
            if progress is not None:
                progress(epoch, cfg.epochs, parts, kappa)
        ad.backward(root)
        for p, (a, b) in zip(params, slices):
            if p.adjoint is None:
                flat_grad[a:b] = 0.0
            else:
                flat_grad[a:b] = p.adjoint.ravel()
        try:
            adam_step([flat], [flat_grad], state, cfg.learning_rate)
        except NumericalError as exc:
            diverged, message = True, f"{exc} at epoch {epoch}"
            break

    if diverged:
        np.copyto(flat, snapshot)
        logger.warning("training diverged (%s); restored last logged parameters", message)
    else:
        ad.reset_adjoints(params)
        _, parts = total_loss(obs, colloc, model, kappa, problem, cfg.weights)
        curve.append(cfg.epochs, parts, kappa)
        if progress is not None:
            progress(cfg.epochs, cfg.epochs, parts, kappa)

    return TrainResult(
        model=model,
        kappa=kappa,
        curve=curve,
        diverged=diverged,
        message=message,
        runtime_s=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# deep ensemble baseline
# ---------------------------------------------------------------------------

@dataclass
class EnsembleResult:
    models: list[PlainNetwork]
    member_kappas: list[float]
    member_seeds: list[int]
    kappa_mean: float
    kappa_sigma: float
    n_requested: int
    n_dropped: int
    runtime_s: float = 0.0

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Ensemble mean and spread (sample std over members) at ``x``."""
        preds = np.stack([m.predict_mean(x) for m in self.models])
        return preds.mean(axis=0), preds.std(axis=0, ddof=1)


def _member_train_config(cfg: TrainConfig, seed: int) -> TrainConfig:
    w = cfg.weights
    weights = LossWeights(
        lambda_d=w.lambda_d, lambda_kl=w.lambda_kl, lambda_r=w.lambda_r,
        beta_r=w.beta_r, variant=Variant.PLAIN_PINN,
    )
    return TrainConfig(
        epochs=cfg.epochs, learning_rate=cfg.learning_rate, weights=weights,
        log_every=cfg.log_every, seed=seed, divergence_limit=cfg.divergence_limit,
    )


def _train_member(args) -> dict:
    problem_name, dataset, net_cfg_fields, train_cfg, seed = args
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        import contextlib

        threadpool_limits = lambda limits: contextlib.nullcontext()  # noqa: E731
    problem = get_problem(problem_name)
    net_cfg = NetworkConfig(**{**net_cfg_fields, "seed": seed})
    with threadpool_limits(limits=1):
        result = train_epinn(problem, dataset, net_cfg, _member_train_config(train_cfg, seed))
    return {
        "seed": seed,
        "diverged": result.diverged,
        "message": result.message,
        "kappa": result.kappa_mean,
        "state": model_state(result.model, result.kappa),
    }


def train_deep_ensemble(
    problem: ProblemSpec,
    dataset: Dataset,
    net_config: NetworkConfig | None = None,
    train_config: TrainConfig | None = None,
    n_members: int = 20,
    n_jobs: int | None = None,
    member_seeds: list[int] | None = None,
    progress=None,
) -> EnsembleResult:
    """Train ``n_members`` plain PINNs from distinct seeds and pool them.

    kappa is the only extra trainable in each member's residual loss; the
    ensemble's coefficient estimate and spread are the member statistics.
    Diverged members are dropped; fewer than 80% survivors is an error.
    """
    if n_members < 2:
        raise ConfigError("an ensemble needs at least 2 members")
    cfg = train_config or TrainConfig()
    net_cfg = net_config or default_network_config(problem, seed=cfg.seed)
    seeds = member_seeds if member_seeds is not None else [cfg.seed + i for i in range(n_members)]
    if len(seeds) != n_members:
        raise ConfigError("member_seeds length must equal n_members")
    fields = {
        "input_dim": net_cfg.input_dim,
        "hidden_layers": net_cfg.hidden_layers,
        "hidden_width": net_cfg.hidden_width,
    }
    tasks = [(problem.name, dataset, fields, cfg, s) for s in seeds]

    start = time.perf_counter()
    outcomes = []
    if n_jobs is None or n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs, mp_context=get_context("spawn")) as pool:
            for future in as_completed([pool.submit(_train_member, t) for t in tasks]):
                outcomes.append(future.result())
                if progress is not None:
                    progress(len(outcomes), n_members)
    else:
        for t in tasks:
            outcomes.append(_train_member(t))
            if progress is not None:
                progress(len(outcomes), n_members)
    outcomes.sort(key=lambda o: o["seed"])  # completion order must not leak into stats

    survivors = [o for o in outcomes if not o["diverged"]]
    for o in outcomes:
        if o["diverged"]:
            logger.warning("ensemble member seed=%d diverged (%s); dropped", o["seed"], o["message"])
    if len(survivors) < 0.8 * n_members:
        raise TrainingError(
            f"only {len(survivors)}/{n_members} ensemble members converged; need at least 80%"
        )

    models = []
    kappas = []
    for o in survivors:
        m, kp, _ = model_from_state(o["state"])
        models.append(m)
        kappas.append(kp.mean_value)
    kappas_arr = np.asarray(kappas)
    return EnsembleResult(
        models=models,
        member_kappas=kappas,
        member_seeds=[o["seed"] for o in survivors],
        kappa_mean=float(kappas_arr.mean()),
        kappa_sigma=float(kappas_arr.std(ddof=1)),
        n_requested=n_members,
        n_dropped=n_members - len(survivors),
        runtime_s=time.perf_counter() - start,
    )


def ensemble_state(result: EnsembleResult, meta: dict | None = None) -> dict:
    members = []
    for model, kappa_value in zip(result.models, result.member_kappas):
        kp = KappaPosterior(mean=kappa_value, learn_sigma=False)
        members.append(model_state(model, kp))
    return {
        "format": "epinn-ensemble-v1",
        "members": members,
        "kappa_mean": result.kappa_mean,
        "kappa_sigma": result.kappa_sigma,
        "member_seeds": result.member_seeds,
        "n_requested": result.n_requested,
        "n_dropped": result.n_dropped,
        "meta": meta or {},
    }


def ensemble_from_state(state: dict) -> tuple[EnsembleResult, dict]:
    if state.get("format") != "epinn-ensemble-v1":
        raise ConfigError(f"unsupported ensemble format: {state.get('format')!r}")
    models, kappas = [], []
    for entry in state["members"]:
        model, kp, _ = model_from_state(entry)
        models.append(model)
        kappas.append(kp.mean_value)
    result = EnsembleResult(
        models=models,
        member_kappas=kappas,
        member_seeds=list(state["member_seeds"]),
        kappa_mean=state["kappa_mean"],
        kappa_sigma=state["kappa_sigma"],
        n_requested=state["n_requested"],
        n_dropped=state["n_dropped"],
    )
    return result, state.get("meta", {})
