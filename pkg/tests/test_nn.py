"""Network forward/backward against independent oracles, Adam, pretraining."""

import numpy as np
import pytest

from activesvdd.nn import (
    LEAKY_SLOPE,
    Adam,
    DenseNet,
    load_net,
    minibatches,
    mirrored_decoder,
    pretrain_autoencoder,
    reconstruction_loss,
    save_net,
)

from conftest import finite_difference_grads, max_relative_error


def leaky(z):
    return np.where(z > 0.0, z, LEAKY_SLOPE * z)


def forward_oracle(net, x):
    """Recompute the forward pass with plain matrix products."""
    h = x
    for i, w in enumerate(net.weights):
        z = h @ w
        if net.biases is not None:
            z = z + net.biases[i]
        h = z if i == len(net.weights) - 1 else leaky(z)
    return h


class TestForward:
    def test_zero_weights_give_zero_output(self):
        net = DenseNet([3, 5, 2])
        x = np.arange(12, dtype=float).reshape(4, 3)
        out, _ = net.forward(x)
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_single_linear_layer_identity(self):
        net = DenseNet([2, 2])
        net.weights[0][:] = np.eye(2)
        x = np.array([[1.5, -2.0], [0.0, 3.0]])
        out, _ = net.forward(x)
        np.testing.assert_array_equal(out, x)

    def test_hand_computed_two_layer(self):
        net = DenseNet([1, 1, 1])
        net.weights[0][:] = [[2.0]]
        net.weights[1][:] = [[3.0]]
        out, _ = net.forward(np.array([[1.0], [-1.0]]))
        # hidden: leaky(2) = 2, leaky(-2) = -0.2; final linear x3
        np.testing.assert_allclose(out, [[6.0], [-0.6]])

    def test_matches_matrix_oracle(self, rng):
        net = DenseNet([4, 7, 3, 2], rng=rng)
        x = rng.standard_normal((20, 4))
        out, _ = net.forward(x)
        np.testing.assert_allclose(out, forward_oracle(net, x), rtol=0, atol=1e-12)

    def test_bias_variant_matches_oracle(self, rng):
        net = DenseNet([3, 4, 2], rng=rng, bias_enabled=True)
        for b in net.biases:
            b[:] = rng.standard_normal(b.shape)
        x = rng.standard_normal((9, 3))
        out, _ = net.forward(x)
        np.testing.assert_allclose(out, forward_oracle(net, x), rtol=0, atol=1e-12)

    def test_init_is_seed_deterministic(self):
        a = DenseNet([5, 4, 3], rng=np.random.default_rng(3))
        b = DenseNet([5, 4, 3], rng=np.random.default_rng(3))
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_init_bounds(self):
        net = DenseNet([100, 50], rng=np.random.default_rng(0))
        bound = np.sqrt(3.0 / 100)
        assert np.max(np.abs(net.weights[0])) <= bound

    def test_rejects_bad_widths(self):
        with pytest.raises(ValueError):
            DenseNet([3])
        with pytest.raises(ValueError):
            DenseNet([3, 0, 2])

    def test_rejects_wrong_input_width(self):
        net = DenseNet([3, 2])
        with pytest.raises(ValueError):
            net.forward(np.ones((4, 5)))


class TestBackward:
    def test_gradients_match_finite_differences(self, rng):
        net = DenseNet([4, 6, 3], rng=rng)
        x = rng.standard_normal((8, 4))
        target = rng.standard_normal((8, 3))

        def loss_fn():
            out, _ = net.forward(x)
            return float(np.mean((out - target) ** 2))

        out, tape = net.forward(x)
        g_out = 2.0 * (out - target) / out.size
        grads, _ = net.backward(tape, g_out)
        numeric = finite_difference_grads(loss_fn, net.params())
        for a, n in zip(grads, numeric):
            assert max_relative_error(a, n) < 1e-6

    def test_gradients_with_bias_match_finite_differences(self, rng):
        net = DenseNet([3, 5, 2], rng=rng, bias_enabled=True)
        x = rng.standard_normal((6, 3))

        def loss_fn():
            out, _ = net.forward(x)
            return float(np.sum(out**2))

        out, tape = net.forward(x)
        grads, _ = net.backward(tape, 2.0 * out)
        numeric = finite_difference_grads(loss_fn, net.params())
        for a, n in zip(grads, numeric):
            assert max_relative_error(a, n) < 1e-6

    def test_input_gradient_matches_finite_differences(self, rng):
        net = DenseNet([4, 5, 2], rng=rng)
        x = rng.standard_normal((3, 4))

        def loss_fn():
            out, _ = net.forward(x)
            return float(np.sum(out**2))

        out, tape = net.forward(x)
        _, g_in = net.backward(tape, 2.0 * out)
        numeric = finite_difference_grads(loss_fn, [x])
        assert max_relative_error(g_in, numeric[0]) < 1e-6

    def test_zero_output_gradient_gives_zero_grads(self, rng):
        net = DenseNet([3, 4, 2], rng=rng)
        x = rng.standard_normal((5, 3))
        _, tape = net.forward(x)
        grads, g_in = net.backward(tape, np.zeros((5, 2)))
        for g in grads:
            np.testing.assert_array_equal(g, 0.0)
        np.testing.assert_array_equal(g_in, 0.0)

    def test_backward_is_linear_in_output_gradient(self, rng):
        net = DenseNet([3, 4, 2], rng=rng)
        x = rng.standard_normal((5, 3))
        _, tape = net.forward(x)
        g = rng.standard_normal((5, 2))
        doubled, _ = net.backward(tape, 2.0 * g)
        single, _ = net.backward(tape, g)
        for a, b in zip(doubled, single):
            np.testing.assert_allclose(a, 2.0 * b, rtol=1e-12, atol=0)

    def test_rejects_foreign_tape(self, rng):
        a = DenseNet([3, 2], rng=rng)
        b = DenseNet([3, 2], rng=rng)
        _, tape = a.forward(np.ones((1, 3)))
        with pytest.raises(ValueError):
            b.backward(tape, np.ones((1, 2)))


class TestAdam:
    def test_first_step_magnitude(self):
        # bias correction makes the first update lr * g/|g| regardless of scale
        p = np.array([1.0])
        opt = Adam([p], lr=1e-3)
        # g = 2.0 squares and square-roots exactly in binary
        opt.step([p], [np.array([2.0])])
        expected = 1.0 - 1e-3 * (2.0 / (2.0 + 1e-8))
        np.testing.assert_allclose(p, [expected], rtol=0, atol=1e-15)

    def test_hand_recurrence_three_steps(self):
        p = np.array([0.5])
        opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
        grads = [np.array([1.0]), np.array([-2.0]), np.array([0.5])]
        # independent scalar recurrence
        m = v = 0.0
        x = 0.5
        for t, g in enumerate(grads, start=1):
            m = 0.9 * m + 0.1 * float(g[0])
            v = 0.999 * v + 0.001 * float(g[0]) ** 2
            mh = m / (1 - 0.9**t)
            vh = v / (1 - 0.999**t)
            x -= 0.1 * mh / (np.sqrt(vh) + 1e-8)
            opt.step([p], [g])
        np.testing.assert_allclose(p, [x], rtol=0, atol=1e-15)

    def test_identical_params_stay_identical(self, rng):
        a = rng.standard_normal((3, 3))
        b = a.copy()
        oa, ob = Adam([a]), Adam([b])
        for _ in range(20):
            g = rng.standard_normal((3, 3))
            oa.step([a], [g.copy()])
            ob.step([b], [g.copy()])
        np.testing.assert_array_equal(a, b)

    def test_updates_in_place(self):
        p = np.zeros((2, 2))
        ref = p
        Adam([p]).step([p], [np.ones((2, 2))])
        assert ref is p and not np.array_equal(p, np.zeros((2, 2)))

    def test_shape_mismatch_rejected(self):
        p = np.zeros((2, 2))
        opt = Adam([p])
        with pytest.raises(ValueError):
            opt.step([p], [np.zeros(3)])


class TestMinibatches:
    def test_partition_covers_all_indices(self, rng):
        batches = list(minibatches(10, 4, rng))
        assert [len(b) for b in batches] == [4, 4, 2]
        flat = np.concatenate(batches)
        np.testing.assert_array_equal(np.sort(flat), np.arange(10))

    def test_single_batch_when_larger(self, rng):
        batches = list(minibatches(3, 128, rng))
        assert len(batches) == 1 and len(batches[0]) == 3

    def test_seeded_shuffle_deterministic(self):
        a = list(minibatches(20, 6, np.random.default_rng(5)))
        b = list(minibatches(20, 6, np.random.default_rng(5)))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


class TestPretrain:
    def test_mirrored_decoder_shape(self, rng):
        enc = DenseNet([6, 4, 2], rng=rng)
        dec = mirrored_decoder(enc, rng)
        assert dec.widths == (2, 4, 6)

    def test_reconstruction_loss_hand_value(self):
        # zero-weight nets reconstruct everything as 0
        enc = DenseNet([2, 2])
        dec = DenseNet([2, 2])
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        # row sums of squares: 5 and 25, mean 15
        assert reconstruction_loss(enc, dec, x) == 15.0

    def test_loss_decreases(self, rng):
        x = rng.standard_normal((64, 5))
        enc = DenseNet([5, 4, 2], rng=rng)
        enc, trace = pretrain_autoencoder(enc, x, epochs=20, batch_size=16, rng=rng)
        assert len(trace) == 21
        assert trace[-1] < trace[0]

    def test_trace_starts_at_pre_training_loss(self, rng):
        # the decoder is drawn from the generator before any training, so a
        # twin generator predicts trace[0] exactly
        x = rng.standard_normal((32, 4))
        enc = DenseNet([4, 3, 2], rng=np.random.default_rng(1))
        frozen = enc.clone()
        dec = mirrored_decoder(frozen, np.random.default_rng(2))
        expected0 = reconstruction_loss(frozen, dec, x)
        _, trace = pretrain_autoencoder(
            enc, x, epochs=3, batch_size=8, rng=np.random.default_rng(2)
        )
        assert trace[0] == expected0

    def test_bitwise_deterministic(self):
        x = np.random.default_rng(0).standard_normal((40, 4))
        runs = []
        for _ in range(2):
            enc = DenseNet([4, 3, 2], rng=np.random.default_rng(1))
            enc, trace = pretrain_autoencoder(
                enc, x, epochs=5, batch_size=8, rng=np.random.default_rng(2)
            )
            runs.append((enc.weights, trace))
        for wa, wb in zip(runs[0][0], runs[1][0]):
            np.testing.assert_array_equal(wa, wb)
        assert runs[0][1] == runs[1][1]

    def test_encoder_weights_change(self, rng):
        x = rng.standard_normal((32, 4))
        enc = DenseNet([4, 3, 2], rng=rng)
        before = [w.copy() for w in enc.weights]
        pretrain_autoencoder(enc, x, epochs=2, batch_size=8, rng=rng)
        assert any(not np.array_equal(a, b) for a, b in zip(before, enc.weights))


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        net = DenseNet([5, 4, 2], rng=rng)
        path = tmp_path / "net.npz"
        save_net(net, path)
        back = load_net(path)
        assert back.widths == net.widths
        for wa, wb in zip(net.weights, back.weights):
            np.testing.assert_array_equal(wa, wb)
        x = rng.standard_normal((3, 5))
        np.testing.assert_array_equal(net.forward(x)[0], back.forward(x)[0])

    def test_round_trip_with_bias(self, tmp_path, rng):
        net = DenseNet([3, 2], rng=rng, bias_enabled=True)
        net.biases[0][:] = [0.5, -0.5]
        path = tmp_path / "net.npz"
        save_net(net, path)
        back = load_net(path)
        np.testing.assert_array_equal(back.biases[0], net.biases[0])
