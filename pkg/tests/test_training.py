import numpy as np
import pytest

from cdfnet.distributions import MixtureSpec, Normal, cdf_true, mixed_dist, sample
from cdfnet.minn import MinnModel, forward, init, to_blend
from cdfnet.targets import TargetSet, targets_uniform
from cdfnet.training import (
    GradientVec,
    NumericalError,
    TrainConfig,
    TrainState,
    adadelta_step,
    backprop,
    finetune,
    loss,
    pack,
    train,
    unpack,
    write_loss_trace,
)

from conftest import numeric_gradient, random_batch, random_model


def gradient_close(analytic, numeric, rtol, floor=1e-8):
    return np.all(np.abs(analytic - numeric) <= rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + floor)


class TestLoss:
    def test_exact_fit_is_zero(self):
        m = init(1, 3, seed=0)
        x = np.linspace(-1, 1, 5)[:, None]
        assert loss(m, TargetSet(x, np.clip(forward(m, x), 0, 1))) == 0.0

    def test_single_offset(self):
        m = MinnModel([[0.0]], [0.0], [0.0], 0.6)
        # forward(0) = 0.6 = target + 0.1
        assert loss(m, TargetSet([[0.0]], [0.5])) == pytest.approx(0.01, abs=1e-15)

    def test_mean_of_two(self):
        m = MinnModel([[0.0]], [0.0], [0.0], 0.5)
        assert loss(m, TargetSet([[0.0], [0.0]], [0.4, 0.2])) == pytest.approx(0.05, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            loss(init(2, 3), TargetSet([[0.0]], [0.5]))
        with pytest.raises(ValueError):
            backprop(init(2, 3), TargetSet([[0.0]], [0.5]))


class TestBackprop:
    @pytest.mark.parametrize("blend", [False, True])
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_finite_differences(self, rng, d, blend):
        for _ in range(5):
            m = random_model(rng, d, int(rng.integers(1, 8)), blend=blend, spread=0.5)
            batch = random_batch(rng, d, 12)
            analytic = backprop(m, batch).flat()
            numeric = numeric_gradient(lambda th: loss(unpack(th, m), batch), pack(m))
            assert gradient_close(analytic, numeric, 1e-5)

    def test_zero_at_exact_fit(self):
        m = MinnModel([[0.3]], [0.1], [-0.2], 0.0)
        x = np.array([[0.7]])
        m = MinnModel(m.raw_w1, m.b1, m.raw_w2, 0.4 - forward(m, x)[0])
        g = backprop(m, TargetSet(x, [0.4]))
        assert np.linalg.norm(g.flat()) < 1e-10

    def test_saturated_alpha_has_no_gradient(self, rng):
        m = random_model(rng, 1, 4, spread=0.5)
        m = MinnModel(m.raw_w1, m.b1, m.raw_w2, m.b2, np.array([38.0, -38.0, 38.0, -38.0]))
        g = backprop(m, random_batch(rng, 1, 20))
        assert np.all(np.abs(g.d_alpha) < 1e-12)

    def test_shapes(self, rng):
        m = random_model(rng, 3, 5, blend=True)
        g = backprop(m, random_batch(rng, 3, 4))
        assert g.d_raw_w1.shape == (5, 3) and g.d_b1.shape == (5,) and g.d_alpha.shape == (5,)


class TestAdadelta:
    def test_zero_gradient_keeps_model(self, rng):
        m = random_model(rng, 1, 2)
        n = pack(m).size
        state = TrainState(np.full(n, 0.5), np.full(n, 0.2))
        zero = GradientVec(np.zeros((2, 1)), np.zeros(2), np.zeros(2), 0.0)
        m2, s2 = adadelta_step(state, m, zero)
        assert m2 == m
        np.testing.assert_allclose(s2.sq_grad, 0.95 * 0.5)
        np.testing.assert_allclose(s2.sq_delta, 0.95 * 0.2)
        assert state.sq_grad[0] == 0.5  # input state untouched

    def test_first_step_value(self):
        m = MinnModel([[0.0]], [0.0], [0.0], 0.0)
        g = GradientVec(np.ones((1, 1)), np.ones(1), np.ones(1), 1.0)
        m2, _ = adadelta_step(TrainState.zeros(4), m, g, decay=0.95, eps=1e-6)
        # -sqrt(1e-6) / sqrt(0.05 + 1e-6), from 30-digit evaluation
        np.testing.assert_allclose(pack(m2), -0.004472091234310838, rtol=1e-14)

    def test_independent_parameters(self):
        m = MinnModel([[0.0]], [0.0], [0.0], 0.0)
        g = GradientVec(np.full((1, 1), 0.3), np.array([0.3]), np.array([-2.0]), 0.3)
        m2, _ = adadelta_step(TrainState.zeros(4), m, g)
        step = pack(m2)
        assert step[0] == step[1] == step[3]

    def test_non_finite_gradient(self):
        m = MinnModel([[0.0]], [0.0], [0.0], 0.0)
        g = GradientVec(np.array([[np.nan]]), np.zeros(1), np.zeros(1), 0.0)
        with pytest.raises(NumericalError):
            adadelta_step(TrainState.zeros(4), m, g)


@pytest.fixture(scope="module")
def normal_fit():
    spec = MixtureSpec(((1.0, Normal(0.0, 1.0)),))
    data = sample(spec, 500, seed=4)
    targets = targets_uniform(data, 5000, seed=4)
    model = init(1, 8, seed=4, data=data)
    cfg = TrainConfig(epochs=300, batch_size=100, seed=4)
    trained, state = train(model, targets, cfg)
    return model, targets, cfg, trained, state


class TestTrain:
    def test_one_epoch_one_step(self, rng):
        m = random_model(rng, 1, 3)
        batch = random_batch(rng, 1, 30)
        cfg = TrainConfig(epochs=1, batch_size=30, shuffle=False)
        trained, state = train(m, batch, cfg)
        assert state.steps == 1 and len(state.loss_trace) == 1
        g = backprop(m, batch)
        if cfg.loss_reduction == "sum":
            n = len(batch)
            g = GradientVec(g.d_raw_w1 * n, g.d_b1 * n, g.d_raw_w2 * n, g.d_b2 * n)
        expected, _ = adadelta_step(TrainState.zeros(pack(m).size), m, g,
                                    cfg.adadelta_decay, cfg.adadelta_eps)
        np.testing.assert_allclose(pack(trained), pack(expected), rtol=1e-12, atol=1e-15)
        assert state.loss_trace[0] == pytest.approx(loss(trained, batch), rel=1e-12)

    def test_normal_cdf_fit(self, normal_fit):
        model, targets, _, trained, state = normal_fit
        assert state.loss_trace[-1] < 1e-3
        assert state.loss_trace[-1] < 0.1 * loss(model, targets)
        assert len(state.loss_trace) == 300
        x = np.linspace(-3, 3, 61)
        assert np.max(np.abs(forward(trained, x) - cdf_true(MixtureSpec(((1.0, Normal(0.0, 1.0)),)), x))) < 0.05

    def test_deterministic(self, normal_fit):
        model, targets, cfg, trained, _ = normal_fit
        again, _ = train(model, targets, TrainConfig(**{**cfg.__dict__, "epochs": 300}))
        assert again == trained

    def test_monotone_after_training(self, normal_fit, rng):
        trained = normal_fit[3]
        x = rng.uniform(-4, 4, size=(1000, 1))
        assert np.all(forward(trained, x + rng.uniform(1e-3, 1, size=x.shape)) > forward(trained, x))

    @pytest.mark.parametrize("reduction", ["mean", "sum"])
    def test_both_reductions_single_step(self, rng, reduction):
        m = random_model(rng, 2, 3)
        batch = random_batch(rng, 2, 10)
        cfg = TrainConfig(epochs=1, batch_size=10, shuffle=False, loss_reduction=reduction)
        trained, _ = train(m, batch, cfg)
        scale = 10.0 if reduction == "sum" else 1.0
        g = backprop(m, batch)
        g = GradientVec(g.d_raw_w1 * scale, g.d_b1 * scale, g.d_raw_w2 * scale, g.d_b2 * scale)
        expected, _ = adadelta_step(TrainState.zeros(pack(m).size), m, g, 0.95, 1e-8)
        np.testing.assert_allclose(pack(trained), pack(expected), rtol=1e-12, atol=1e-15)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(loss_reduction="max")

    def test_non_finite_aborts(self):
        m = MinnModel([[710.0]], [0.0], [0.0], 0.0)  # exp overflows
        with pytest.raises(NumericalError):
            train(m, TargetSet([[1.0]], [0.5]), TrainConfig(epochs=2))

    def test_loss_trace_csv(self, normal_fit, tmp_path):
        write_loss_trace(normal_fit[4], tmp_path / "loss.csv")
        lines = (tmp_path / "loss.csv").read_text().splitlines()
        assert lines[0] == "epoch,loss" and len(lines) == 301


@pytest.fixture(scope="module")
def mixed_run():
    data = sample(mixed_dist(), 600, seed=2)
    targets = targets_uniform(data, 3000, seed=2)
    smooth, _ = train(init(1, 8, seed=2, data=data), targets, TrainConfig(epochs=150, seed=2))
    tuned, state = finetune(smooth, targets, TrainConfig(epochs=100, seed=3), alpha0=3.0)
    return smooth, targets, tuned, state


class TestFinetune:

    def test_blend_output(self, mixed_run):
        smooth, _, tuned, _ = mixed_run
        assert tuned.activation == "blend" and tuned.h == smooth.h

    def test_loss_decreases(self, mixed_run):
        smooth, targets, _, state = mixed_run
        assert state.loss_trace[-1] <= loss(to_blend(smooth, 3.0), targets)

    def test_alpha_moves(self, mixed_run):
        assert np.max(np.abs(mixed_run[2].alpha - 3.0)) > 0

    def test_rejects_blended_input(self, mixed_run):
        with pytest.raises(ValueError):
            finetune(mixed_run[2], mixed_run[1], TrainConfig(epochs=1))
