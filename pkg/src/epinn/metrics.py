"""Uncertainty-quality metrics and the evaluation report.

Conventions: ``ecp`` counts |prediction - exact| <= z * sigma_p (z = 1.96
for the nominal 0.95 band).  ``rho_e`` rank-correlates sigma_p with
|prediction - exact| on the test grid; ``rho_n`` rank-correlates sigma_p at
the observation points with the realized |noise| there.  For the 1D problem
the headline ECP is restricted to the training-domain part of the test grid
(x <= 0.7) and the extended-domain value is reported separately.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import GraphError, NumericalError
from .problems import Dataset, ProblemSpec


def ecp(mean, sigma_p, exact, z: float = 1.96) -> float:
    """Fraction of points whose deviation from ``exact`` is within z sigma_p."""
    mean = np.asarray(mean, dtype=np.float64)
    sigma_p = np.asarray(sigma_p, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    if mean.size == 0:
        raise GraphError("ecp of an empty prediction set")
    if mean.shape != sigma_p.shape or mean.shape != exact.shape:
        raise GraphError("ecp arguments must share one shape")
    if np.any(sigma_p <= 0):
        raise GraphError("ecp needs strictly positive sigma_p")
    return float(np.mean(np.abs(mean - exact) <= z * sigma_p))


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(v.size, dtype=np.float64)
    base = np.arange(1.0, v.size + 1.0)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (base[i] + base[j])
        i = j + 1
    return ranks


def spearman(a, b) -> float:
    """Rank correlation with average ranks for ties.

    Raises on constant input, where the coefficient is undefined.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise GraphError("spearman needs two equal-length vectors")
    if a.size < 3:
        raise GraphError("spearman needs at least 3 points")
    ra, rb = _average_ranks(a), _average_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    na, nb = np.sqrt(np.sum(da * da)), np.sqrt(np.sum(db * db))
    if na == 0.0 or nb == 0.0:
        raise NumericalError("spearman undefined for constant input")
    return float(np.dot(da, db) / (na * nb))


def boundary_error(predict_fn, x_boundary, u_exact) -> float:
    """Mean |predicted mean - exact| over boundary points."""
    x_boundary = np.asarray(x_boundary, dtype=np.float64)
    if x_boundary.shape[0] == 0:
        raise GraphError("boundary_error over an empty boundary set")
    mean, _ = predict_fn(x_boundary)
    return float(np.mean(np.abs(mean - np.asarray(u_exact, dtype=np.float64))))


@dataclass
class MetricsReport:
    problem: str
    method: str
    kappa_mean: float
    kappa_sigma: float
    ecp: float | None
    rho_e: float | None
    rho_n: float | None
    mean_error: float
    mean_sigma_p: float | None
    ecp_extended: float | None = None
    boundary_mean_error: float | None = None
    mean_sigma_p_train: float | None = None
    mean_sigma_p_ood: float | None = None
    n_test: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def evaluate_predictions(
    predict_fn,
    dataset: Dataset,
    problem: ProblemSpec,
    kappa_mean: float,
    kappa_sigma: float,
    method: str = "",
    has_uncertainty: bool = True,
) -> MetricsReport:
    """Full metric sweep for one trained predictor.

    ``predict_fn(X) -> (mean, sigma_p)`` is the only model access, so the
    evidential network and the ensemble are scored identically.  With
    ``has_uncertainty=False`` (a plain PINN) the coverage and correlation
    entries are left undefined instead of being computed from a zero band.
    """
    mean, sigma_p = predict_fn(dataset.test_x)
    err = np.abs(mean - dataset.test_u)

    def rank_corr(a, b):
        # undefined (constant input) stays undefined rather than crashing a
        # report over a degenerate predictor
        try:
            return spearman(a, b)
        except NumericalError:
            return None

    extras: dict = {}
    headline_ecp = None
    rho_e = rho_n = None
    mean_sigma = None
    if problem.dimension == 2 and dataset.boundary.x.shape[0]:
        extras["boundary_mean_error"] = boundary_error(predict_fn, dataset.boundary.x, dataset.boundary.u)
    if has_uncertainty:
        obs_mean, obs_sigma = predict_fn(dataset.obs.x)
        noise = np.abs(dataset.obs.u_noisy - dataset.obs.u_clean)
        rho_e = rank_corr(sigma_p, err)
        rho_n = rank_corr(obs_sigma, noise)
        mean_sigma = float(sigma_p.mean())
        if problem.dimension == 1:
            hi = problem.train_bounds[0][1]
            train_mask = dataset.test_x[:, 0] <= hi
            headline_ecp = ecp(mean[train_mask], sigma_p[train_mask], dataset.test_u[train_mask])
            extras["ecp_extended"] = ecp(mean, sigma_p, dataset.test_u)
            extras["mean_sigma_p_train"] = float(sigma_p[train_mask].mean())
            extras["mean_sigma_p_ood"] = float(sigma_p[~train_mask].mean())
        else:
            headline_ecp = ecp(mean, sigma_p, dataset.test_u)

    return MetricsReport(
        problem=problem.name,
        method=method,
        kappa_mean=float(kappa_mean),
        kappa_sigma=float(kappa_sigma),
        ecp=headline_ecp,
        rho_e=rho_e,
        rho_n=rho_n,
        mean_error=float(err.mean()),
        mean_sigma_p=mean_sigma,
        n_test=int(dataset.test_x.shape[0]),
        **extras,
    )


_TABLE_ROWS = (
    ("kappa", "kappa_mean", "{:.4f}"),
    ("sigma_kappa", "kappa_sigma", "{:.4f}"),
    ("rho_e", "rho_e", "{:.2f}"),
    ("rho_n", "rho_n", "{:.2f}"),
    ("ECP", "ecp", "{:.2f}"),
    ("ECP (extended)", "ecp_extended", "{:.2f}"),
    ("mean error", "mean_error", "{:.4f}"),
    ("boundary error", "boundary_mean_error", "{:.4f}"),
    ("mean sigma_p", "mean_sigma_p", "{:.4f}"),
)


def format_report_table(reports: list[MetricsReport]) -> str:
    """Plain-text metric table, one column per method."""
    if not reports:
        raise GraphError("no reports to format")
    label_w = max(len(label) for label, _, _ in _TABLE_ROWS)
    col_w = max(12, max(len(r.method) for r in reports) + 2)
    lines = [f"problem: {reports[0].problem}"]
    header = " " * label_w + "".join(f"{r.method:>{col_w}}" for r in reports)
    lines.append(header)
    for label, attr, fmt in _TABLE_ROWS:
        values = [getattr(r, attr) for r in reports]
        if all(v is None for v in values):
            continue
        cells = "".join(
            f"{'-':>{col_w}}" if v is None else f"{fmt.format(v):>{col_w}}" for v in values
        )
        lines.append(f"{label:<{label_w}}{cells}")
    return "\n".join(lines) + "\n"
