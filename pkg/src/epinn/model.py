"""Fully-connected tanh network with a normal-inverse-gamma head.

The head maps four raw outputs to (gamma, nu, alpha, beta) with
nu = softplus(o2), alpha = 1 + softplus(o3), beta = softplus(o4), so
nu, beta > 0 and alpha > 1 hold for every input and the predictive
variance beta/(alpha-1) * (1 + 1/nu) stays finite.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericalError

HEAD_NAMES = ("gamma", "nu", "alpha", "beta")


def softplus_inverse(y: float) -> float:
    """Inverse of log(1 + exp(x)) for y > 0."""
    if y <= 0:
        raise ValueError("softplus_inverse needs y > 0")
    return float(np.log(np.expm1(y)))


@dataclass
class NetworkConfig:
    input_dim: int
    hidden_layers: int = 3
    hidden_width: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.input_dim not in (1, 2):
            raise ConfigError(f"input_dim must be 1 or 2, got {self.input_dim}")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigError("hidden_layers and hidden_width must be >= 1")


@dataclass
class EvidentialOutput:
    """NIG hyperparameters at a batch of points, as graph nodes."""

    gamma: ad.Node
    nu: ad.Node
    alpha: ad.Node
    beta: ad.Node


@dataclass
class Prediction:
    """Numeric prediction with its uncertainty decomposition."""

    mean: np.ndarray
    sigma_p: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray


def nig_uncertainty(nu, alpha, beta):
    """Aleatoric beta/(alpha-1) and epistemic beta/(nu (alpha-1)) variances."""
    nu = np.asarray(nu, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(alpha <= 1.0):
        raise NumericalError("evidential head invariant breached: alpha <= 1")
    aleatoric = beta / (alpha - 1.0)
    epistemic = beta / (nu * (alpha - 1.0))
    return aleatoric, epistemic


class KappaPosterior:
    """Trainable mean and spread of the unknown PDE coefficient.

    sigma = softplus(raw) keeps Var(kappa) strictly positive.  With
    ``learn_sigma=False`` the spread is pinned to exactly zero, which is the
    plain-PINN / ensemble-member mode where kappa is an ordinary scalar.
    """

    def __init__(self, mean: float = 0.0, sigma: float = 0.5, learn_sigma: bool = True):
        self.mean = ad.parameter(mean)
        self.learn_sigma = learn_sigma
        if learn_sigma:
            self.sigma_raw = ad.parameter(softplus_inverse(sigma))
        else:
            self.sigma_raw = None

    def parameters(self) -> list[ad.Node]:
        if self.learn_sigma:
            return [self.mean, self.sigma_raw]
        return [self.mean]

    def sigma_node(self) -> ad.Node:
        if self.learn_sigma:
            return ad.softplus(self.sigma_raw)
        return ad.constant(0.0)

    @property
    def mean_value(self) -> float:
        return float(self.mean.value)

    @property
    def sigma_value(self) -> float:
        if self.learn_sigma:
            return float(np.logaddexp(0.0, self.sigma_raw.value))
        return 0.0

    def state(self) -> dict:
        return {
            "mean": self.mean_value,
            "sigma_raw": None if self.sigma_raw is None else float(self.sigma_raw.value),
            "learn_sigma": self.learn_sigma,
        }

    @classmethod
    def from_state(cls, state: dict) -> "KappaPosterior":
        kp = cls(mean=state["mean"], learn_sigma=state["learn_sigma"])
        if kp.learn_sigma:
            kp.sigma_raw.value[()] = state["sigma_raw"]
        return kp


class EvidentialNetwork:
    """tanh MLP with four single-output heads for the NIG hyperparameters."""

    # fan-in-scaled normal init; 5/3 is the tanh gain, heads feed
    # identity/softplus maps and stay at gain 1
    HIDDEN_GAIN = 5.0 / 3.0

    def __init__(self, config: NetworkConfig, head_dims: tuple[str, ...] = HEAD_NAMES):
        self.config = config
        self.head_names = head_dims
        rng = np.random.default_rng(config.seed)
        self.hidden: list[tuple[ad.Node, ad.Node]] = []
        fan_in = config.input_dim
        for _ in range(config.hidden_layers):
            std = self.HIDDEN_GAIN / np.sqrt(fan_in)
            w = ad.parameter(rng.normal(0.0, std, size=(fan_in, config.hidden_width)))
            b = ad.parameter(np.zeros(config.hidden_width))
            self.hidden.append((w, b))
            fan_in = config.hidden_width
        scale = 1.0 / np.sqrt(config.hidden_width)
        self.heads: dict[str, tuple[ad.Node, ad.Node]] = {
            name: (ad.parameter(rng.normal(0.0, scale, size=config.hidden_width)), ad.parameter(0.0))
            for name in head_dims
        }

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[ad.Node]:
        out = []
        for w, b in self.hidden:
            out += [w, b]
        for name in self.head_names:
            w, b = self.heads[name]
            out += [w, b]
        return out

    def named_parameters(self) -> dict[str, ad.Node]:
        out = {}
        for i, (w, b) in enumerate(self.hidden):
            out[f"hidden.{i}.w"] = w
            out[f"hidden.{i}.b"] = b
        for name in self.head_names:
            w, b = self.heads[name]
            out[f"head.{name}.w"] = w
            out[f"head.{name}.b"] = b
        return out

    # -- forward passes -----------------------------------------------------

    def _trunk(self, x: np.ndarray) -> ad.Node:
        h = ad.constant(np.asarray(x, dtype=np.float64))
        for w, b in self.hidden:
            h = ad.tanh(ad.affine(h, w, b))
        return h

    def forward_evidential(self, x: np.ndarray) -> EvidentialOutput:
        """NIG hyperparameters (as graph nodes) at coordinates x of shape (N, d)."""
        h = self._trunk(x)
        raw = {name: ad.dense(h, *self.heads[name]) for name in HEAD_NAMES}
        for name, node in raw.items():
            if not np.all(np.isfinite(node.value)):
                raise NumericalError(f"non-finite activations in head {name!r}")
        return EvidentialOutput(
            gamma=raw["gamma"],
            nu=ad.softplus(raw["nu"]),
            alpha=ad.add(1.0, ad.softplus(raw["alpha"])),
            beta=ad.softplus(raw["beta"]),
        )

    def forward_jet(self, x: np.ndarray) -> ad.Jet:
        """Jet of the predicted mean: gamma, its input gradient and diagonal
        second derivatives, all differentiable w.r.t. the weights."""
        j = ad.seed_jet(np.asarray(x, dtype=np.float64))
        for w, b in self.hidden:
            j = ad.jet_tanh(ad.jet_affine(j, w, b))
        j = ad.jet_dense(j, *self.heads["gamma"])
        if not np.all(np.isfinite(j.value.value)):
            raise NumericalError("non-finite activations in jet forward pass")
        return j

    def predict(self, x: np.ndarray) -> Prediction:
        """Mean and uncertainty split: aleatoric beta/(alpha-1), epistemic
        beta/(nu (alpha-1)), sigma_p = sqrt of their sum."""
        out = self.forward_evidential(x)
        gamma = out.gamma.value
        aleatoric, epistemic = nig_uncertainty(out.nu.value, out.alpha.value, out.beta.value)
        return Prediction(
            mean=gamma,
            sigma_p=np.sqrt(aleatoric + epistemic),
            aleatoric=aleatoric,
            epistemic=epistemic,
        )


class PlainNetwork(EvidentialNetwork):
    """Single-output tanh MLP used by plain-PINN training and ensembles."""

    def __init__(self, config: NetworkConfig):
        super().__init__(config, head_dims=("gamma",))

    def forward_mean(self, x: np.ndarray) -> ad.Node:
        return ad.dense(self._trunk(x), *self.heads["gamma"])

    def forward_evidential(self, x):  # pragma: no cover - guard
        raise NumericalError("plain network has no evidential head")

    def predict_mean(self, x: np.ndarray) -> np.ndarray:
        return self.forward_mean(x).value


def _network_class(kind: str):
    return {"evidential": EvidentialNetwork, "plain": PlainNetwork}[kind]


def network_kind(model: EvidentialNetwork) -> str:
    return "plain" if isinstance(model, PlainNetwork) else "evidential"


# ---------------------------------------------------------------------------
# checkpoints: named float64 arrays, base64-encoded, plus configs
# ---------------------------------------------------------------------------

def _encode(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64, order="C")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(entry: dict) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(entry["data"]), dtype=np.float64)
    return a.reshape(tuple(entry["shape"])).copy()


def model_state(model: EvidentialNetwork, kappa: KappaPosterior, meta: dict | None = None) -> dict:
    cfg = model.config
    return {
        "format": "epinn-checkpoint-v1",
        "kind": network_kind(model),
        "network": {
            "input_dim": cfg.input_dim,
            "hidden_layers": cfg.hidden_layers,
            "hidden_width": cfg.hidden_width,
            "seed": cfg.seed,
        },
        "kappa": kappa.state(),
        "params": {name: _encode(node.value) for name, node in model.named_parameters().items()},
        "meta": meta or {},
    }


def model_from_state(state: dict) -> tuple[EvidentialNetwork, KappaPosterior, dict]:
    if state.get("format") != "epinn-checkpoint-v1":
        raise ConfigError(f"unsupported checkpoint format: {state.get('format')!r}")
    model = _network_class(state.get("kind", "evidential"))(NetworkConfig(**state["network"]))
    named = model.named_parameters()
    for name, entry in state["params"].items():
        if name not in named:
            raise ConfigError(f"checkpoint has unknown parameter {name!r}")
        arr = _decode(entry)
        if arr.shape != named[name].value.shape:
            raise ConfigError(
                f"checkpoint parameter {name!r} has shape {arr.shape}, expected {named[name].value.shape}"
            )
        named[name].value[...] = arr
    kappa = KappaPosterior.from_state(state["kappa"])
    return model, kappa, state.get("meta", {})


def save_checkpoint(path, model, kappa, meta=None) -> None:
    Path(path).write_text(json.dumps(model_state(model, kappa, meta), indent=1))


def load_checkpoint(path) -> tuple[EvidentialNetwork, KappaPosterior, dict]:
    state = json.loads(Path(path).read_text())
    return model_from_state(state)
