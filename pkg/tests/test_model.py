import math

import numpy as np
import pytest

from fedpake.data import Dataset
from fedpake.model import (
    LocalTrainConfig,
    MLPSpec,
    MLPState,
    backward,
    cross_entropy,
    evaluate,
    forward,
    init_mlp,
    train_local,
)
from fedpake.params import LayerTensor, ModelParams


def zeroed(spec: MLPSpec) -> MLPState:
    state = init_mlp(spec)
    zeros = ModelParams(
        [LayerTensor(t.name, t.shape, np.zeros(t.size)) for t in state.params.layers]
    )
    return state.replaced(zeros)


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    return all(np.array_equal(x.values, y.values) for x, y in zip(a.layers, b.layers))


def gradient_error(state, x, y, step=1e-5):
    """Max relative error between analytic and central-difference gradients."""
    analytic = backward(state, x, y)
    worst = 0.0
    for li, tensor in enumerate(state.params.layers):
        for idx in range(tensor.size):
            original = tensor.values[idx]
            tensor.values[idx] = original + step
            up = cross_entropy(forward(state, x), y)
            tensor.values[idx] = original - step
            down = cross_entropy(forward(state, x), y)
            tensor.values[idx] = original
            numeric = (up - down) / (2 * step)
            a = analytic[li][idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst


class TestInit:
    def test_deterministic(self):
        spec = MLPSpec((3, 5, 2), seed=42)
        assert params_equal(init_mlp(spec).params, init_mlp(spec).params)

    def test_biases_zero(self):
        state = init_mlp(MLPSpec((3, 5, 2), seed=1))
        for t in state.params.layers:
            if t.name.endswith("bias"):
                assert np.array_equal(t.values, np.zeros(t.size))

    def test_weight_bound(self):
        state = init_mlp(MLPSpec((9, 4, 2), seed=2))
        for t in state.params.layers:
            if t.name.endswith("weight"):
                fan_in = t.shape[0]
                assert np.all(np.abs(t.values) <= math.sqrt(6.0 / fan_in))

    @pytest.mark.parametrize("sizes", [(3,), (3, 1), (0, 2), (3, -1, 2)])
    def test_rejects_bad_sizes(self, sizes):
        with pytest.raises(ValueError):
            MLPSpec(sizes)


class TestForwardAndLoss:
    def test_uniform_logits_loss_is_log_k(self):
        state = zeroed(MLPSpec((3, 4), seed=0))
        x = np.random.default_rng(0).normal(size=(6, 3))
        loss = cross_entropy(forward(state, x), np.zeros(6, dtype=int))
        assert loss == pytest.approx(math.log(4), abs=1e-12)

    def test_duplicated_batch_same_mean_loss(self):
        state = init_mlp(MLPSpec((3, 5, 2), seed=3))
        x = np.random.default_rng(1).normal(size=(4, 3))
        y = np.array([0, 1, 1, 0])
        single = cross_entropy(forward(state, x), y)
        doubled = cross_entropy(forward(state, np.tile(x, (3, 1))), np.tile(y, 3))
        assert doubled == pytest.approx(single, abs=1e-12)

    def test_two_class_closed_form(self):
        # logits (2, 0), true class 0: loss = ln(1 + e^-2)
        logits = np.array([[2.0, 0.0]])
        loss = cross_entropy(logits, np.array([0]))
        assert loss == pytest.approx(math.log(1 + math.exp(-2)), abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label out of range"):
            cross_entropy(np.zeros((1, 3)), np.array([3]))

    def test_feature_width_checked(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=0))
        with pytest.raises(ValueError, match="feature width"):
            forward(state, np.zeros((2, 5)))


class TestBackward:
    def test_zero_net_balanced_batch_zero_gradient(self):
        state = zeroed(MLPSpec((2, 3, 2), seed=0))
        x = np.random.default_rng(2).normal(size=(4, 2))
        y = np.array([0, 0, 1, 1])
        grads = backward(state, x, y)
        for g in grads:
            assert np.allclose(g, 0.0, atol=1e-15)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_finite_difference_agreement(self, activation):
        rng = np.random.default_rng(7)
        state = init_mlp(MLPSpec((2, 4, 2), activation=activation, seed=7))
        x = rng.normal(size=(8, 2))
        y = rng.integers(0, 2, size=8)
        assert gradient_error(state, x, y) < 1e-4

    def test_duplicating_batch_keeps_mean_gradient(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=9))
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 3))
        y = rng.integers(0, 2, size=5)
        single = backward(state, x, y)
        doubled = backward(state, np.tile(x, (2, 1)), np.tile(y, 2))
        for a, b in zip(single, doubled):
            assert np.allclose(a, b, atol=1e-12)


def toy_dataset(seed=0, n=40, num_classes=2, dim=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, dim))
    y = rng.integers(0, num_classes, size=n)
    return Dataset(x, y, num_classes)


class TestTrainLocal:
    def test_zero_learning_rate_is_identity(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=0))
        cfg = LocalTrainConfig(learning_rate=0.0, batch_size=8)
        out = train_local(state, toy_dataset(), cfg, seed=5)
        assert params_equal(out.params, state.params)

    def test_zero_mu_matches_plain_sgd(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=1))
        ds = toy_dataset(1)
        plain = train_local(state, ds, LocalTrainConfig(prox_mu=0.0), None, seed=3)
        with_ref = train_local(
            state, ds, LocalTrainConfig(prox_mu=0.0), state.params, seed=3
        )
        assert params_equal(plain.params, with_ref.params)

    def test_hand_computed_single_step(self):
        # No hidden layer, zero start, one sample x=[1], label 0, lr=0.1:
        # probs (.5, .5); gradient on logits (-.5, .5); W and b step to
        # (+.05, -.05).
        state = zeroed(MLPSpec((1, 2), seed=0))
        ds = Dataset(np.array([[1.0]]), np.array([0]), 2)
        cfg = LocalTrainConfig(learning_rate=0.1, batch_size=1, local_epochs=1)
        out = train_local(state, ds, cfg, seed=0)
        assert np.allclose(out.params.layers[0].values, [0.05, -0.05], atol=1e-12)
        assert np.allclose(out.params.layers[1].values, [0.05, -0.05], atol=1e-12)

    def test_deterministic(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=2))
        ds = toy_dataset(2)
        cfg = LocalTrainConfig()
        a = train_local(state, ds, cfg, seed=11)
        b = train_local(state, ds, cfg, seed=11)
        assert params_equal(a.params, b.params)

    def test_empty_dataset_rejected(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=0))
        empty = Dataset(np.zeros((0, 3)), np.zeros(0, dtype=int), 2)
        with pytest.raises(ValueError, match="empty dataset"):
            train_local(state, empty, LocalTrainConfig(), seed=0)

    def test_large_mu_pulls_toward_reference(self):
        spec = MLPSpec((3, 4, 2), seed=4)
        start = init_mlp(spec)
        ref = start.params
        ds = toy_dataset(4)
        # lr must keep lr * mu well below 1 or the proximal step overshoots
        cfg = dict(batch_size=10, local_epochs=5, learning_rate=1e-4)
        free = train_local(start, ds, LocalTrainConfig(prox_mu=0.0, **cfg), ref, seed=1)
        pulled = train_local(start, ds, LocalTrainConfig(prox_mu=1e3, **cfg), ref, seed=1)

        def dist(state):
            return math.sqrt(
                sum(
                    float(((t.values - r.values) ** 2).sum())
                    for t, r in zip(state.params.layers, ref.layers)
                )
            )

        assert dist(pulled) < dist(free)

    def test_loss_decreases_on_separable_data(self):
        rng = np.random.default_rng(8)
        n = 60
        x = np.concatenate([rng.normal(-2, 0.5, size=(n, 2)), rng.normal(2, 0.5, size=(n, 2))])
        y = np.concatenate([np.zeros(n, dtype=int), np.ones(n, dtype=int)])
        ds = Dataset(x, y, 2)
        state = init_mlp(MLPSpec((2, 4, 2), seed=5))
        before = evaluate(state, ds).mean_loss
        # 200 SGD steps: batch 12 over 120 samples = 10 steps/epoch, 20 epochs
        cfg = LocalTrainConfig(learning_rate=0.1, batch_size=12, local_epochs=20)
        after = evaluate(train_local(state, ds, cfg, seed=0), ds).mean_loss
        assert after < before


class TestEvaluate:
    def test_chance_level_on_balanced_data(self):
        # Uniform logits predict class 0 everywhere; balanced labels -> 1/4.
        state = zeroed(MLPSpec((3, 4), seed=0))
        x = np.random.default_rng(4).normal(size=(400, 3))
        y = np.tile(np.arange(4), 100)
        assert evaluate(state, Dataset(x, y, 4)).accuracy == pytest.approx(0.25)

    def test_single_correct_sample(self):
        state = zeroed(MLPSpec((2, 2), seed=0))
        # zero logits -> argmax is class 0
        ds = Dataset(np.array([[1.0, 1.0]]), np.array([0]), 2)
        assert evaluate(state, ds).accuracy == 1.0

    def test_repeatable(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=6))
        ds = toy_dataset(6)
        a = evaluate(state, ds)
        b = evaluate(state, ds)
        assert a.accuracy == b.accuracy and a.mean_loss == b.mean_loss

    def test_empty_rejected(self):
        state = init_mlp(MLPSpec((3, 4, 2), seed=0))
        with pytest.raises(ValueError, match="empty dataset"):
            evaluate(state, Dataset(np.zeros((0, 3)), np.zeros(0, dtype=int), 2))
