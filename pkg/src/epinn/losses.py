"""Loss components for evidential PDE-constrained regression.

Three pieces combine into the training objective:

* ``edl_nll`` — negative log marginal likelihood of an observation under the
  normal-inverse-gamma head (a Student-t likelihood in closed form),
* ``regularizer`` — evidence penalty |u - gamma| (2 nu + alpha), optionally
  scaled by the KL divergence between the head's inverse-gamma variance
  distribution and a weakly-informative reference with alpha_r = 1,
  beta = beta_r,
* ``compute_pde_residual`` — the PDE residual squared, marginalized over the
  coefficient posterior: E[(L1 + kappa L2)^2] = L1^2 + L2^2 (Var + mean^2)
  + 2 mean L1 L2.

All functions are vectorized over batches and return graph nodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import GraphError
from .model import EvidentialOutput, KappaPosterior

EULER_GAMMA = float(np.euler_gamma)
_HALF_LOG_PI = 0.5 * float(np.log(np.pi))


class Variant(str, enum.Enum):
    EPINN = "epinn"
    EPINN_V = "epinn_v"
    PLAIN_PINN = "plain_pinn"


@dataclass
class LossWeights:
    lambda_d: float = 1.0
    lambda_kl: float = 0.01
    lambda_r: float = 0.1
    beta_r: float = 1.0
    variant: Variant = Variant.EPINN

    def __post_init__(self):
        self.variant = Variant(self.variant)
        for name in ("lambda_d", "lambda_kl", "lambda_r"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise GraphError(f"{name} must be finite and >= 0, got {v}")
        if not np.isfinite(self.beta_r) or self.beta_r <= 0:
            raise GraphError(f"beta_r must be finite and > 0, got {self.beta_r}")


def edl_nll(u_obs, out: EvidentialOutput) -> ad.Node:
    """Per-point negative log marginal likelihood of ``u_obs``.

    (alpha + 1/2) log(nu (u - gamma)^2 + Omega)
      + log( sqrt(pi/nu) Gamma(alpha) / (Omega^alpha Gamma(alpha + 1/2)) )
    with Omega = 2 beta (1 + nu).
    """
    delta = ad.sub(ad.constant(u_obs), out.gamma)
    omega = ad.mul(2.0, ad.mul(out.beta, ad.add(1.0, out.nu)))
    quad = ad.mul(ad.add(out.alpha, 0.5), ad.log(ad.add(ad.mul(ad.square(delta), out.nu), omega)))
    norm = ad.add(
        ad.sub(
            ad.add(_HALF_LOG_PI, ad.mul(-0.5, ad.log(out.nu))),
            ad.mul(out.alpha, ad.log(omega)),
        ),
        ad.sub(ad.lgamma(out.alpha), ad.lgamma(ad.add(out.alpha, 0.5))),
    )
    return ad.add(quad, norm)


def kl_divergence_term(out: EvidentialOutput, beta_r: float) -> ad.Node:
    """Divergence of the head's inverse-gamma from the (1, beta_r) reference.

    alpha log(beta_r / beta) + log Gamma(alpha)
      + euler_gamma (alpha - 1) + (beta - beta_r) / beta_r
    Vanishes exactly at alpha = 1, beta = beta_r; no dependence on nu.
    """
    log_ratio = ad.sub(float(np.log(beta_r)), ad.log(out.beta))
    return ad.add(
        ad.add(ad.mul(out.alpha, log_ratio), ad.lgamma(out.alpha)),
        ad.add(
            ad.mul(EULER_GAMMA, ad.sub(out.alpha, 1.0)),
            ad.div(ad.sub(out.beta, beta_r), beta_r),
        ),
    )


def regularizer(u_obs, out: EvidentialOutput, weights: LossWeights) -> ad.Node:
    """Evidence penalty |u - gamma| (2 nu + alpha), KL-scaled for the
    default variant; the plain evidence penalty for the "V" variant."""
    if weights.variant not in (Variant.EPINN, Variant.EPINN_V):
        raise GraphError(f"regularizer undefined for variant {weights.variant}")
    delta = ad.absolute(ad.sub(ad.constant(u_obs), out.gamma))
    evidence = ad.mul(delta, ad.add(ad.mul(2.0, out.nu), out.alpha))
    if weights.variant is Variant.EPINN_V:
        return evidence
    return ad.mul(evidence, kl_divergence_term(out, weights.beta_r))


def compute_pde_residual(l1: ad.Node, l2: ad.Node, kappa: KappaPosterior) -> ad.Node:
    """Marginalized squared residual L1^2 + L2^2 (Var + mean^2) + 2 mean L1 L2.

    Agnostic to the shape of the coefficient prior (only its first two
    moments enter); reduces to the ordinary squared residual when the
    spread is pinned to zero.
    """
    var = ad.square(kappa.sigma_node())
    second_moment = ad.add(var, ad.square(kappa.mean))
    return ad.add(
        ad.add(ad.square(l1), ad.mul(ad.square(l2), second_moment)),
        ad.mul(ad.mul(2.0, kappa.mean), ad.mul(l1, l2)),
    )


def total_loss(batch_obs, batch_colloc, model, kappa: KappaPosterior, problem, weights: LossWeights):
    """Weighted objective over an observation batch and a collocation batch.

    ``batch_obs`` is (X, u) with boundary points already folded in; the mean
    (not sum) is taken over each batch so the weights transfer across
    dataset sizes.  Returns ``(root, parts)`` where parts holds the scalar
    component values for logging.
    """
    x_obs, u_obs = batch_obs
    x_obs = np.asarray(x_obs, dtype=np.float64)
    u_obs = np.asarray(u_obs, dtype=np.float64)
    x_col = np.asarray(batch_colloc, dtype=np.float64)
    if x_obs.shape[0] == 0:
        raise GraphError("empty observation batch")
    if x_col.shape[0] == 0:
        raise GraphError("empty collocation batch")

    jet = model.forward_jet(x_col)
    l1, l2 = problem.residual_terms(jet, x_col)
    residual = ad.mean_(compute_pde_residual(l1, l2, kappa))

    if weights.variant is Variant.PLAIN_PINN:
        gamma = model.forward_mean(x_obs)
        data = ad.mean_(ad.square(ad.sub(gamma, ad.constant(u_obs))))
        root = ad.add(data, ad.mul(weights.lambda_r, residual))
        parts = {
            "total": float(root.value),
            "data": float(data.value),
            "regularizer": None,
            "residual": float(residual.value),
        }
        return root, parts

    out = model.forward_evidential(x_obs)
    data = ad.mean_(edl_nll(u_obs, out))
    reg = ad.mean_(regularizer(u_obs, out, weights))
    root = ad.add(
        ad.add(ad.mul(weights.lambda_d, data), ad.mul(weights.lambda_kl, reg)),
        ad.mul(weights.lambda_r, residual),
    )
    parts = {
        "total": float(root.value),
        "data": float(data.value),
        "regularizer": float(reg.value),
        "residual": float(residual.value),
    }
    return root, parts
