"""Optimizer behavior, training-loop guarantees, and ensemble pooling.

Full-length benchmark runs live in test_acceptance.py; everything here uses
small networks and short epoch budgets.
"""

import numpy as np
import pytest

from epinn.errors import ConfigError, NumericalError, TrainingError
from epinn.losses import LossWeights, Variant
from epinn.model import NetworkConfig
from epinn.problems import DatasetCounts, generate_dataset, make_problem_1d, make_problem_2d
from epinn.training import (
    AdamState,
    TrainConfig,
    adam_step,
    init_adam,
    train_deep_ensemble,
    train_epinn,
)

TINY_NET = dict(hidden_layers=2, hidden_width=8)
TINY_COUNTS = DatasetCounts(observations=40, collocation=50, test_points=60, boundary_per_side=10, test_grid=10)


def _setup_1d(seed=0, **cfg_kw):
    problem = make_problem_1d()
    ds = generate_dataset(problem, counts=TINY_COUNTS, seed=11)
    net = NetworkConfig(input_dim=1, seed=seed, **TINY_NET)
    cfg = TrainConfig(log_every=50, seed=seed, **cfg_kw)
    return problem, ds, net, cfg


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = [np.array([1.0, -2.0]), np.array(0.5)]
        state = init_adam(p)
        adam_step(p, [np.zeros(2), np.array(0.0)], state, lr=0.1)
        assert np.array_equal(p[0], [1.0, -2.0]) and float(p[1]) == 0.5

    def test_single_step_is_signed_learning_rate(self):
        # with zero-state moments, |update| = lr * g / (|g| + eps)
        p = [np.array([1.0, 1.0, 1.0])]
        g = np.array([0.5, -3.0, 1e-3])
        adam_step(p, [g.copy()], init_adam(p), lr=0.01)
        np.testing.assert_allclose(p[0], 1.0 - 0.01 * np.sign(g), rtol=1e-5)

    def test_constant_gradient_step_approaches_signed_lr(self):
        p = [np.array([0.0])]
        state = init_adam(p)
        g = [np.array([0.37])]
        prev = p[0].copy()
        for _ in range(300):
            prev = p[0].copy()
            adam_step(p, g, state, lr=1e-3)
        assert abs((prev - p[0])[0] - 1e-3) <= 1e-6

    def test_non_finite_gradient_rejected(self):
        p = [np.array([1.0])]
        with pytest.raises(NumericalError):
            adam_step(p, [np.array([np.nan])], init_adam(p), lr=0.1)

    def test_length_mismatch_rejected(self):
        p = [np.array([1.0])]
        with pytest.raises(ConfigError):
            adam_step(p, [], init_adam(p), lr=0.1)

    def test_state_tracks_bias_correction_time(self):
        p = [np.array([1.0])]
        state = init_adam(p)
        for t in range(1, 4):
            adam_step(p, [np.array([0.1])], state, lr=1e-3)
            assert state.t == t


class TestTrainEpinn:
    def test_deterministic_given_seed(self):
        problem, ds, net, cfg = _setup_1d(epochs=150)
        a = train_epinn(problem, ds, net, cfg)
        b = train_epinn(problem, ds, net, cfg)
        assert a.curve.total == b.curve.total
        assert a.curve.kappa_mean == b.curve.kappa_mean
        assert a.kappa_sigma == b.kappa_sigma

    def test_loss_decreases_and_logs_are_finite(self):
        problem, ds, net, cfg = _setup_1d(epochs=400)
        res = train_epinn(problem, ds, net, cfg)
        assert not res.diverged
        assert res.curve.total[-1] < res.curve.total[0]
        assert all(np.isfinite(v) for v in res.curve.total)
        assert all(s > 0 for s in res.curve.kappa_sigma)
        assert res.curve.epochs == sorted(res.curve.epochs)
        assert res.curve.epochs[-1] == 400

    def test_zero_residual_weight_freezes_kappa(self):
        problem, ds, net, cfg = _setup_1d(epochs=120)
        cfg.weights = LossWeights(lambda_r=0.0)
        res = train_epinn(problem, ds, net, cfg)
        assert res.kappa_mean == 0.0
        assert res.kappa_sigma == pytest.approx(0.5, rel=1e-12)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_guard_restores_last_logged_state(self):
        problem, ds, net, cfg = _setup_1d(epochs=3000)
        cfg.learning_rate = 1e5  # force blow-up
        res = train_epinn(problem, ds, net, cfg)
        assert res.diverged
        assert res.message != ""
        for p in res.model.parameters():
            assert np.all(np.isfinite(p.value))
        assert len(res.curve.epochs) >= 1

    def test_plain_variant_trains_single_head_and_omits_regularizer(self):
        problem, ds, net, cfg = _setup_1d(epochs=150)
        cfg.weights = LossWeights(variant=Variant.PLAIN_PINN)
        res = train_epinn(problem, ds, net, cfg)
        assert res.kappa_sigma == 0.0
        assert all(v is None for v in res.curve.regularizer)
        assert "regularizer" not in res.curve.to_frame().columns
        assert res.model.predict_mean(ds.test_x).shape == (60,)

    def test_dimension_mismatch_rejected(self):
        problem, ds, net, cfg = _setup_1d(epochs=10)
        with pytest.raises(ConfigError):
            train_epinn(make_problem_2d(), ds, net, cfg)

    def test_progress_callback_sees_first_and_last_epoch(self):
        problem, ds, net, cfg = _setup_1d(epochs=100)
        seen = []
        train_epinn(problem, ds, net, cfg, progress=lambda e, total, parts, kappa: seen.append(e))
        assert seen[0] == 0 and seen[-1] == 100

    def test_curve_tail_fluctuation(self):
        problem, ds, net, cfg = _setup_1d(epochs=300)
        res = train_epinn(problem, ds, net, cfg)
        assert res.curve.tail_fluctuation("kappa_mean", frac=0.2) >= 0.0


class TestDeepEnsemble:
    def test_identical_seeds_give_zero_spread(self):
        problem, ds, net, cfg = _setup_1d(epochs=120)
        res = train_deep_ensemble(
            problem, ds, net, cfg, n_members=2, n_jobs=1, member_seeds=[7, 7]
        )
        assert res.kappa_sigma == 0.0
        mean, spread = res.predict(ds.test_x)
        assert np.all(spread == 0.0)
        assert mean.shape == (60,)

    def test_distinct_seeds_give_positive_spread_and_stats(self):
        problem, ds, net, cfg = _setup_1d(epochs=200)
        res = train_deep_ensemble(problem, ds, net, cfg, n_members=3, n_jobs=1)
        assert res.n_dropped == 0
        assert len(res.models) == 3
        assert res.kappa_sigma > 0.0
        assert res.kappa_mean == pytest.approx(np.mean(res.member_kappas))
        _, spread = res.predict(ds.test_x)
        assert np.all(spread >= 0.0) and spread.max() > 0.0

    def test_parallel_matches_serial(self):
        problem, ds, net, cfg = _setup_1d(epochs=100)
        serial = train_deep_ensemble(problem, ds, net, cfg, n_members=2, n_jobs=1)
        parallel = train_deep_ensemble(problem, ds, net, cfg, n_members=2, n_jobs=2)
        assert serial.member_kappas == parallel.member_kappas
        a, sa = serial.predict(ds.test_x[:10])
        b, sb = parallel.predict(ds.test_x[:10])
        assert np.array_equal(a, b) and np.array_equal(sa, sb)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_all_members_diverging_is_an_error(self):
        problem, ds, net, cfg = _setup_1d(epochs=500)
        cfg.learning_rate = 1e5
        with pytest.raises(TrainingError):
            train_deep_ensemble(problem, ds, net, cfg, n_members=2, n_jobs=1)

    def test_too_few_members_rejected(self):
        problem, ds, net, cfg = _setup_1d(epochs=10)
        with pytest.raises(ConfigError):
            train_deep_ensemble(problem, ds, net, cfg, n_members=1, n_jobs=1)

    def test_seed_count_mismatch_rejected(self):
        problem, ds, net, cfg = _setup_1d(epochs=10)
        with pytest.raises(ConfigError):
            train_deep_ensemble(problem, ds, net, cfg, n_members=3, n_jobs=1, member_seeds=[1])


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(log_every=0)
