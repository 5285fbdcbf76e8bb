"""Benchmark inverse problems, noise models, and dataset generation.

Two diffusion-reaction-type benchmarks with known exact solutions:

* ``poisson1d``   — 0.01 u'' + kappa tanh(u) = f(x),  u_e = sin^3(6x),
                    kappa_true = 0.7, trained on x in (-0.8, 0.7) and tested
                    out to x = 1.2.
* ``diffreact2d`` — 0.01 (u_xx + u_yy) + kappa u^2 = f(x, y),
                    u_e = sin(pi x) sin(pi y) on the square [-1, 1]^2 with a
                    zero Dirichlet boundary, kappa_true = 1.

The source terms are hard-coded from the analytic derivatives of the exact
solutions; the test suite re-derives them symbolically.

All random draws come from numpy's PCG64 generator: point placement from
``SeedSequence(seed)``, gaussian noise (standard_normal scaled by the
amplitude field) from the first spawned child, so a dataset is reproducible
bit-for-bit from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from . import autodiff as ad
from .errors import ConfigError

Array = np.ndarray


@dataclass
class ProblemSpec:
    """A benchmark instance: residual split L1 + kappa L2, exact solution,
    source term, and domain bounds."""

    name: str
    dimension: int
    lambda_coeff: float
    kappa_true: float
    train_bounds: tuple[tuple[float, float], ...]
    test_bounds: tuple[tuple[float, float], ...]
    exact_solution: Callable[[Array], Array]
    source: Callable[[Array], Array]
    residual_terms: Callable[[ad.Jet, Array], tuple[ad.Node, ad.Node]]


def make_problem_1d() -> ProblemSpec:
    lam = 0.01

    def exact(x: Array) -> Array:
        return np.sin(6.0 * x[:, 0]) ** 3

    def source(x: Array) -> Array:
        s = np.sin(6.0 * x[:, 0])
        c = np.cos(6.0 * x[:, 0])
        # 0.01 * (sin^3(6x))'' = 1.08 (2 sin cos^2 - sin^3)
        return 1.08 * (2.0 * s * c * c - s**3) + 0.7 * np.tanh(s**3)

    def residual_terms(jet: ad.Jet, x: Array) -> tuple[ad.Node, ad.Node]:
        l1 = ad.sub(ad.mul(lam, jet.diag2[0]), ad.constant(source(x)))
        l2 = ad.tanh(jet.value)
        return l1, l2

    return ProblemSpec(
        name="poisson1d",
        dimension=1,
        lambda_coeff=lam,
        kappa_true=0.7,
        train_bounds=((-0.8, 0.7),),
        test_bounds=((-0.8, 1.2),),
        exact_solution=exact,
        source=source,
        residual_terms=residual_terms,
    )


def make_problem_2d() -> ProblemSpec:
    lam = 0.01

    def exact(x: Array) -> Array:
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def source(x: Array) -> Array:
        u = np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
        return -0.02 * np.pi**2 * u + u * u

    def residual_terms(jet: ad.Jet, x: Array) -> tuple[ad.Node, ad.Node]:
        lap = ad.add(jet.diag2[0], jet.diag2[1])
        l1 = ad.sub(ad.mul(lam, lap), ad.constant(source(x)))
        l2 = ad.square(jet.value)
        return l1, l2

    return ProblemSpec(
        name="diffreact2d",
        dimension=2,
        lambda_coeff=lam,
        kappa_true=1.0,
        train_bounds=((-1.0, 1.0), (-1.0, 1.0)),
        test_bounds=((-1.0, 1.0), (-1.0, 1.0)),
        exact_solution=exact,
        source=source,
        residual_terms=residual_terms,
    )


_PROBLEMS = {"poisson1d": make_problem_1d, "diffreact2d": make_problem_2d}


def get_problem(name: str) -> ProblemSpec:
    try:
        return _PROBLEMS[name]()
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; known: {sorted(_PROBLEMS)}") from None


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------

@dataclass
class BandNoise1D:
    """Piecewise amplitude: ``high`` inside the configured bands, ``low``
    elsewhere.  The band placement is a config choice, not a property of the
    PDE; defaults give two high-noise bands inside the training domain."""

    bands: tuple[tuple[float, float], ...] = ((-0.55, -0.35), (0.25, 0.45))
    high: float = 0.2
    low: float = 0.02
    seed: int | None = None

    def amplitude(self, x: Array) -> Array:
        xs = np.asarray(x, dtype=np.float64)[:, 0]
        amp = np.full_like(xs, self.low)
        for lo, hi in self.bands:
            amp[(xs >= lo) & (xs <= hi)] = self.high
        return amp


@dataclass
class CosineBumpNoise2D:
    """scale * cos(pi x / 2) cos(pi y / 2) exp(-(x^2 + y^2)): maximal at the
    origin, exactly zero on the square's boundary."""

    scale: float = 0.1
    seed: int | None = None

    def amplitude(self, x: Array) -> Array:
        xs = np.asarray(x, dtype=np.float64)
        bump = np.cos(0.5 * np.pi * xs[:, 0]) * np.cos(0.5 * np.pi * xs[:, 1])
        return self.scale * bump * np.exp(-(xs[:, 0] ** 2 + xs[:, 1] ** 2))


def default_noise(problem_name: str):
    return BandNoise1D() if problem_name == "poisson1d" else CosineBumpNoise2D()


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class DatasetCounts:
    observations: int = 200
    collocation: int = 500
    boundary_per_side: int = 50
    test_points: int = 400   # 1D: total test-grid points
    test_grid: int = 50      # 2D: test-grid points per axis

    def __post_init__(self):
        for name in ("observations", "collocation", "test_points", "test_grid"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.boundary_per_side < 0:
            raise ConfigError("boundary_per_side must be >= 0")


@dataclass
class Observations:
    x: Array
    u_noisy: Array
    u_clean: Array
    amplitude: Array


@dataclass
class Boundary:
    x: Array
    u: Array


@dataclass
class Dataset:
    problem: str
    seed: int | None
    obs: Observations
    colloc: Array
    boundary: Boundary
    test_x: Array
    test_u: Array

    def training_points(self) -> tuple[Array, Array]:
        """Observation coordinates/targets with boundary points folded in."""
        if self.boundary.x.shape[0] == 0:
            return self.obs.x, self.obs.u_noisy
        return (
            np.concatenate([self.obs.x, self.boundary.x]),
            np.concatenate([self.obs.u_noisy, self.boundary.u]),
        )


def generate_dataset(spec: ProblemSpec, noise=None, counts: DatasetCounts | None = None, seed: int = 0) -> Dataset:
    """Sample observation/collocation/boundary/test sets, reproducibly."""
    noise = noise if noise is not None else default_noise(spec.name)
    counts = counts if counts is not None else DatasetCounts()
    ss = np.random.SeedSequence(seed)
    child = ss.spawn(1)[0]
    rng_points = np.random.Generator(np.random.PCG64(ss))
    if noise.seed is not None:
        rng_noise = np.random.Generator(np.random.PCG64(np.random.SeedSequence(noise.seed)))
    else:
        rng_noise = np.random.Generator(np.random.PCG64(child))

    bounds = np.asarray(spec.train_bounds, dtype=np.float64)
    lo, hi = bounds[:, 0], bounds[:, 1]

    obs_x = rng_points.uniform(lo, hi, size=(counts.observations, spec.dimension))

    if spec.dimension == 1:
        colloc = np.linspace(lo[0], hi[0], counts.collocation + 2)[1:-1].reshape(-1, 1)
        boundary = Boundary(x=np.empty((0, 1)), u=np.empty(0))
        t_lo, t_hi = spec.test_bounds[0]
        test_x = np.linspace(t_lo, t_hi, counts.test_points).reshape(-1, 1)
    else:
        colloc = rng_points.uniform(lo, hi, size=(counts.collocation, 2))
        sides = []
        edge = np.linspace(lo[0], hi[0], max(counts.boundary_per_side, 1))
        for fixed, axis in ((lo[0], 0), (hi[0], 0), (lo[1], 1), (hi[1], 1)):
            pts = np.empty((counts.boundary_per_side, 2))
            pts[:, axis] = fixed
            pts[:, 1 - axis] = edge[: counts.boundary_per_side]
            sides.append(pts)
        bx = np.concatenate(sides) if counts.boundary_per_side else np.empty((0, 2))
        boundary = Boundary(x=bx, u=spec.exact_solution(bx) if len(bx) else np.empty(0))
        g = np.linspace(lo[0], hi[0], counts.test_grid)
        xx, yy = np.meshgrid(g, g, indexing="ij")
        test_x = np.column_stack([xx.ravel(), yy.ravel()])

    u_clean = spec.exact_solution(obs_x)
    amplitude = noise.amplitude(obs_x)
    u_noisy = u_clean + amplitude * rng_noise.standard_normal(counts.observations)

    return Dataset(
        problem=spec.name,
        seed=seed,
        obs=Observations(x=obs_x, u_noisy=u_noisy, u_clean=u_clean, amplitude=amplitude),
        colloc=colloc,
        boundary=boundary,
        test_x=test_x,
        test_u=spec.exact_solution(test_x),
    )


# ---------------------------------------------------------------------------
# CSV round-trip (columns: coordinates, u_noisy, u_clean, amplitude, role)
# ---------------------------------------------------------------------------

def dataset_to_csv(dataset: Dataset, path) -> None:
    dim = dataset.obs.x.shape[1]
    coord_cols = ["x", "y"][:dim]

    def block(x, role, u_noisy=None, u_clean=None, amplitude=None):
        d = {c: x[:, i] for i, c in enumerate(coord_cols)}
        n = x.shape[0]
        d["u_noisy"] = u_noisy if u_noisy is not None else np.full(n, np.nan)
        d["u_clean"] = u_clean if u_clean is not None else np.full(n, np.nan)
        d["amplitude"] = amplitude if amplitude is not None else np.full(n, np.nan)
        d["role"] = role
        return pd.DataFrame(d)

    frames = [
        block(dataset.obs.x, "obs", dataset.obs.u_noisy, dataset.obs.u_clean, dataset.obs.amplitude),
        block(dataset.colloc, "colloc"),
        block(dataset.boundary.x, "boundary", u_clean=dataset.boundary.u),
        block(dataset.test_x, "test", u_clean=dataset.test_u),
    ]
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g")


def dataset_from_csv(path, problem: str = "", seed: int | None = None) -> Dataset:
    df = pd.read_csv(path, float_precision="round_trip")
    coord_cols = [c for c in ("x", "y") if c in df.columns]
    if not coord_cols:
        raise ConfigError(f"{path}: no coordinate columns found")

    def rows(role):
        return df[df["role"] == role]

    def coords(sub):
        return sub[coord_cols].to_numpy(dtype=np.float64).reshape(-1, len(coord_cols))

    obs = rows("obs")
    bnd = rows("boundary")
    tst = rows("test")
    return Dataset(
        problem=problem,
        seed=seed,
        obs=Observations(
            x=coords(obs),
            u_noisy=obs["u_noisy"].to_numpy(dtype=np.float64),
            u_clean=obs["u_clean"].to_numpy(dtype=np.float64),
            amplitude=obs["amplitude"].to_numpy(dtype=np.float64),
        ),
        colloc=coords(rows("colloc")),
        boundary=Boundary(x=coords(bnd), u=bnd["u_clean"].to_numpy(dtype=np.float64)),
        test_x=coords(tst),
        test_u=tst["u_clean"].to_numpy(dtype=np.float64),
    )
