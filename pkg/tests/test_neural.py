import math

import numpy as np
import pytest

from conftest import fd_gradient, random_grid_factor
from neural_ichol.bench import generate_laplacian
from neural_ichol.factor import ichol0
from neural_ichol.neural import (
    SampleSet,
    TrainConfig,
    TrainingError,
    TrainState,
    adagrad_step,
    default_alpha,
    default_sample_count,
    forward,
    generate_samples,
    gradient,
    initial_factor,
    loss,
    sgd_step,
    train,
)
from neural_ichol.sparse import CsrMatrix, DimensionError, LowerFactor, extract_lower_pattern, spmv


def scalar_factor(value: float) -> LowerFactor:
    return LowerFactor.from_dense([[value]])


def state_for(l: LowerFactor, accum=None) -> TrainState:
    return TrainState(l, np.zeros(l.nnz) if accum is None else np.asarray(accum, float))


class TestSamples:
    def test_identity_matrix(self):
        s = generate_samples(CsrMatrix.identity(5), count=1, seed=3)
        assert np.array_equal(s.y_vectors[0], s.x_vectors[0])

    def test_default_count(self):
        s = generate_samples(generate_laplacian((32, 32)))
        assert len(s) == 32

    @pytest.mark.parametrize("n, expected", [(1, 1), (4, 2), (5, 3), (1000, 32), (1024, 32), (1025, 33)])
    def test_ceil_sqrt(self, n, expected):
        assert default_sample_count(n) == expected

    def test_normalized(self):
        a = generate_laplacian((6, 6))
        s = generate_samples(a, count=9, normalize=True, seed=11)
        assert np.max(np.abs(np.linalg.norm(s.x_vectors, axis=1) - 1.0)) < 1e-12
        for x, y in zip(s.x_vectors, s.y_vectors):
            assert np.array_equal(y, spmv(a, x))

    def test_seeded(self):
        a = generate_laplacian((3, 3))
        assert np.array_equal(generate_samples(a, 4, seed=5).x_vectors, generate_samples(a, 4, seed=5).x_vectors)
        assert not np.array_equal(generate_samples(a, 4, seed=5).x_vectors, generate_samples(a, 4, seed=6).x_vectors)

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            generate_samples(CsrMatrix.identity(2), count=0)


class TestForwardAndLoss:
    def test_identity(self, rng):
        x = rng.standard_normal(6)
        assert np.array_equal(forward(LowerFactor.from_dense(np.eye(6)), x), x)

    def test_scalar(self):
        assert forward(scalar_factor(3.0), [1.0]).tolist() == [9.0]

    def test_exact_two_by_two(self):
        l = ichol0(CsrMatrix.from_dense([[4.0, 2.0], [2.0, 3.0]]))
        assert np.allclose(forward(l, [1.0, 0.0]), [4.0, 2.0], rtol=0, atol=1e-15)
        assert loss(l, [1.0, 0.0], [4.0, 2.0]) < 1e-20

    def test_scalar_loss(self):
        assert loss(scalar_factor(1.0), [1.0], [2.0]) == 1.0

    def test_dense_oracle(self, rng):
        l = random_grid_factor(5, 10, rng)
        x, y = rng.standard_normal(50), rng.standard_normal(50)
        dense = l.to_dense()
        r = dense @ dense.T @ x - y
        assert loss(l, x, y) == pytest.approx(r @ r / 50, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            loss(scalar_factor(1.0), [1.0, 2.0], [1.0])


class TestGradient:
    def test_scalar_calculus(self):
        # loss = (l^2 - 2)^2, d/dl = 4 l (l^2 - 2) = -4 at l = 1
        assert gradient(scalar_factor(1.0), [1.0], [2.0]).tolist() == [-4.0]

    def test_zero_residual(self):
        a = CsrMatrix.from_dense([[4.0, 2.0], [2.0, 3.0]])
        l = ichol0(a)
        x = np.array([0.3, -1.2])
        g = gradient(l, x, spmv(a, x))
        assert np.max(np.abs(g)) < 1e-14

    @pytest.mark.parametrize("shape", [(5, 1), (5, 6), (5, 10)])
    def test_finite_differences(self, shape, rng):
        if shape[1] == 1:
            l = LowerFactor.from_dense(np.tril(rng.uniform(-0.5, 0.5, (5, 5)), -1) + np.diag(rng.uniform(1, 2, 5)))
        else:
            l = random_grid_factor(*shape, rng)
        x, y = rng.standard_normal(l.n), rng.standard_normal(l.n)
        g = gradient(l, x, y)
        fd = fd_gradient(l, x, y)
        assert np.all(np.abs(g - fd) <= 1e-8 + 1e-5 * np.abs(fd))

    def test_aligned_with_values(self, rng):
        l = random_grid_factor(3, 4, rng)
        assert gradient(l, np.ones(12), np.zeros(12)).shape == l.values.shape


class TestOptimizers:
    def test_adagrad_zero_gradient(self):
        s = state_for(scalar_factor(1.5), [0.7])
        out = adagrad_step(s, [0.0], 0.1, 1e-8)
        assert out.factor.values.tolist() == [1.5]
        assert out.grad_accum.tolist() == [0.7]

    def test_adagrad_single_step(self):
        out = adagrad_step(state_for(scalar_factor(1.0)), [2.0], 0.1, 1e-8)
        assert out.grad_accum.tolist() == [4.0]
        assert out.factor.values[0] - 1.0 == pytest.approx(-0.1 * 2 / (2 + 1e-8), rel=1e-14)

    def test_adagrad_two_steps(self):
        s = state_for(scalar_factor(0.0))
        s1 = adagrad_step(s, [1.0], 1.0, 1e-300)
        s2 = adagrad_step(s1, [1.0], 1.0, 1e-300)
        assert s1.factor.values[0] == pytest.approx(-1.0, rel=1e-15)
        assert s2.factor.values[0] - s1.factor.values[0] == pytest.approx(-1 / math.sqrt(2), rel=1e-15)

    def test_sgd(self):
        s = state_for(scalar_factor(1.0), [3.0])
        assert sgd_step(s, [0.0], 0.1).factor.values.tolist() == [1.0]
        out = sgd_step(s, [2.0], 0.1)
        assert out.factor.values[0] - 1.0 == pytest.approx(-0.2, rel=1e-14)
        assert out.grad_accum.tolist() == [3.0]

    def test_sgd_equals_adagrad_when_accum_is_one(self):
        g = 0.6
        s = state_for(scalar_factor(1.0), [1.0 - g * g])
        a = adagrad_step(s, [g], 0.3, 1e-300)
        b = sgd_step(s, [g], 0.3)
        assert a.factor.values[0] == pytest.approx(b.factor.values[0], rel=1e-15)

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_nonfinite_gradient_aborts(self, bad):
        with pytest.raises(TrainingError):
            adagrad_step(state_for(scalar_factor(1.0)), [bad], 0.1, 1e-8)
        with pytest.raises(TrainingError):
            sgd_step(state_for(scalar_factor(1.0)), [bad], 0.1)


class TestTrain:
    def test_initial_factor(self):
        a = CsrMatrix.from_dense([[4.0, 2.0], [2.0, 9.0]])
        assert initial_factor(a).to_dense().tolist() == [[2.0, 0.0], [1.0, 3.0]]

    def test_diagonal_matrix_is_a_fixed_point(self):
        d = np.array([1.0, 4.0, 2.5, 9.0])
        a = CsrMatrix.from_dense(np.diag(d))
        l, state = train(a, TrainConfig(epochs=5))
        assert np.allclose(l.values**2, d, rtol=1e-14)
        assert max(state.loss_history) < 1e-25

    def test_diagonal_matrix_converges_from_perturbed_start(self):
        # each diagonal value is an independent scalar problem l^2 -> d
        d = np.array([1.0, 4.0, 2.5, 9.0])
        a = CsrMatrix.from_dense(np.diag(d))
        samples = generate_samples(a, count=8, seed=1)
        start = np.sqrt(d) * 0.8
        values = start.copy()
        accum = np.full(4, 0.1)
        history = []
        for _ in range(200):
            for x, y in zip(samples.x_vectors, samples.y_vectors):
                l = LowerFactor.from_dense(np.diag(values))
                history.append(loss(l, x, y))
                g = gradient(l, x, y)
                accum += g * g
                values -= 0.1 * g / (np.sqrt(accum) + 1e-8)
        assert history[-1] < history[0]
        assert np.allclose(values**2, d, rtol=1e-3)

    def test_step_count_and_history(self):
        a = generate_laplacian((32, 32))
        for epochs in (1, 3):
            _, state = train(a, TrainConfig(epochs=epochs))
            assert state.steps == epochs * 32
            assert len(state.loss_history) == epochs * 32

    def test_pattern_preserved(self):
        a = generate_laplacian((6, 7))
        l, _ = train(a, TrainConfig(epochs=2))
        assert l.pattern.same_as(extract_lower_pattern(a))

    def test_deterministic(self):
        a = generate_laplacian((8, 8))
        l1, s1 = train(a, TrainConfig(epochs=2, seed=4))
        l2, s2 = train(a, TrainConfig(epochs=2, seed=4))
        assert np.array_equal(l1.values, l2.values)
        assert s1.loss_history == s2.loss_history

    def test_accumulator_non_decreasing(self):
        a = generate_laplacian((5, 5))
        l = initial_factor(a)
        samples = generate_samples(a, seed=2)
        state = state_for(l)
        for x, y in zip(samples.x_vectors, samples.y_vectors):
            nxt = adagrad_step(state, gradient(state.factor, x, y), 0.1, 1e-8)
            assert np.all(nxt.grad_accum >= state.grad_accum)
            state = nxt

    def test_train_matches_manual_adagrad(self):
        a = generate_laplacian((4, 4))
        cfg = TrainConfig(initial_accumulator=0.0)
        samples = generate_samples(a, seed=cfg.seed)
        state = state_for(initial_factor(a))
        for x, y in zip(samples.x_vectors, samples.y_vectors):
            state = adagrad_step(state, gradient(state.factor, x, y), 0.1, cfg.epsilon)
        l, _ = train(a, cfg, samples)
        assert np.allclose(l.values, state.factor.values, rtol=1e-13, atol=1e-15)

    def test_zero_residual_is_stationary(self):
        a = CsrMatrix.from_dense(np.diag([4.0, 9.0]))
        for optimizer in ("sgd", "adagrad"):
            l, _ = train(a, TrainConfig(optimizer=optimizer, alpha=5.0, epochs=3))
            assert l.values.tolist() == [2.0, 3.0]

    def test_progress_on_grid_laplacian(self):
        _, state = train(generate_laplacian((32, 32)))
        assert state.final_sample_loss < state.initial_sample_loss

    def test_sgd_runs(self):
        _, state = train(generate_laplacian((8, 8)), TrainConfig(optimizer="sgd", alpha=0.01, epochs=2))
        assert state.final_sample_loss < state.initial_sample_loss

    def test_default_alpha(self):
        assert default_alpha(10_000, True) == 50.0
        assert default_alpha(10_000, False) == 0.1
        assert TrainConfig(normalize_samples=True).resolved_alpha(10_000) == 50.0
        assert TrainConfig(alpha=0.3, normalize_samples=True).resolved_alpha(10_000) == 0.3

    @pytest.mark.parametrize(
        "kwargs", [{"alpha": 0.0}, {"epsilon": 0.0}, {"epochs": 0}, {"optimizer": "adam"}, {"samples": 0}]
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_divergence_raises(self):
        a = generate_laplacian((4, 4))
        with pytest.raises(TrainingError):
            train(a, TrainConfig(optimizer="sgd", alpha=1e6, epochs=20))

    def test_custom_samples(self):
        a = generate_laplacian((3, 3))
        samples = SampleSet(np.eye(9)[:2], np.stack([spmv(a, e) for e in np.eye(9)[:2]]), False, 0)
        _, state = train(a, samples=samples)
        assert state.steps == 2
