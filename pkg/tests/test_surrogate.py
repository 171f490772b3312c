import numpy as np
import pytest

from tunnelnav import surrogate
from tunnelnav.surrogate import (GenConfig, MlpNetwork, SampleSet, denormalize,
                                 generate_dataset, holdout_rmse, init_network,
                                 load_weights, loss_and_grads, normalize,
                                 norms_from_data, save_weights, simulate_p_max,
                                 train)


class TestNormalize:
    def test_examples(self):
        assert normalize(75.0, 50.0, 100.0) == pytest.approx(0.0)
        assert normalize(50.0, 50.0, 100.0) == pytest.approx(-1.0)
        assert denormalize(0.0, 50.0, 100.0) == pytest.approx(75.0)

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-100, 100, 1000)
        lo, hi = -42.0, 91.0
        back = denormalize(normalize(x, lo, hi), lo, hi)
        assert np.abs(back - x).max() <= 1e-12

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            normalize(1.0, 5.0, 5.0)
        with pytest.raises(ValueError):
            denormalize(0.0, 7.0, 2.0)


def toy_network(w1, b1, w2=None, b2=None):
    """1-1[-1] network with identity normalization on [-1, 1] ranges."""
    weights = [np.array([[w1]]), np.array([[1.0 if w2 is None else w2]])]
    biases = [np.array([b1]), np.array([0.0])]
    in_norms = np.array([[-1.0, 1.0]])
    out_norm = np.array([-1.0, 1.0])
    return MlpNetwork(weights=weights, biases=biases, in_norms=in_norms,
                      out_norm=out_norm)


class TestForward:
    def test_zero_weights_returns_output_midpoint(self):
        net = init_network(np.tile([[0.0, 1.0]], (6, 1)), np.array([2.0, 6.0]),
                           seed=0)
        for w in net.weights:
            w[:] = 0.0
        x = np.array([0.5, 0.5, 0.5, 0.5, 0.5, 0.5])
        assert net.forward(x) == pytest.approx(4.0)  # denormalize(0)

    def test_single_neuron_toy(self):
        net = toy_network(w1=1.0, b1=-0.5)
        assert net.forward(np.array([1.0])) == pytest.approx(0.5)
        assert net.forward(np.array([0.0])) == pytest.approx(0.0)

    def test_output_bias_must_be_zero(self):
        with pytest.raises(ValueError):
            MlpNetwork(weights=[np.ones((1, 1)), np.ones((1, 1))],
                       biases=[np.zeros(1), np.array([0.5])],
                       in_norms=np.array([[-1.0, 1.0]]),
                       out_norm=np.array([-1.0, 1.0]))

    def test_piecewise_linear_directional_derivatives(self):
        rng = np.random.default_rng(3)
        net = init_network(np.tile([[-1.0, 1.0]], (6, 1)),
                           np.array([-1.0, 1.0]), seed=5)
        for _ in range(30):
            x = rng.uniform(-0.9, 0.9, 6)
            d = rng.normal(size=6)
            d /= np.linalg.norm(d)
            h = 1e-6
            f0, f1, f2 = (net.forward(x), net.forward(x + h * d),
                          net.forward(x + 2 * h * d))
            # one-sided derivative consistent over two steps away from kinks
            g1 = (f1 - f0) / h
            g2 = (f2 - f1) / h
            if abs(g1 - g2) < 1e-5:  # not straddling an activation boundary
                assert g1 == pytest.approx(g2, abs=1e-5)


class TestGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        net = init_network(np.tile([[-1.0, 1.0]], (6, 1)),
                           np.array([-1.0, 1.0]), seed=2)
        xn = rng.uniform(-0.8, 0.8, size=(12, 6))
        yn = rng.uniform(0.1, 0.8, size=12)
        checked = 0
        base_loss, gw, gb = loss_and_grads(net, xn, yn)
        eps = 1e-6
        rng2 = np.random.default_rng(9)
        for _ in range(50):
            k = rng2.integers(0, len(net.weights))
            i = rng2.integers(0, net.weights[k].shape[0])
            j = rng2.integers(0, net.weights[k].shape[1])
            orig = net.weights[k][i, j]
            net.weights[k][i, j] = orig + eps
            hi, _, _ = loss_and_grads(net, xn, yn)
            net.weights[k][i, j] = orig - eps
            lo, _, _ = loss_and_grads(net, xn, yn)
            net.weights[k][i, j] = orig
            fd = (hi - lo) / (2 * eps)
            if abs(fd) > 1e-8:
                assert gw[k][i, j] == pytest.approx(fd, rel=1e-4, abs=1e-8)
                checked += 1
        assert checked >= 30

    def test_output_bias_gradient_is_zero(self):
        net = init_network(np.tile([[-1.0, 1.0]], (6, 1)),
                           np.array([-1.0, 1.0]), seed=1)
        xn = np.random.default_rng(0).uniform(-1, 1, size=(8, 6))
        yn = np.full(8, 0.4)
        _, _, gb = loss_and_grads(net, xn, yn)
        assert np.all(gb[-1] == 0.0)


class TestTrain:
    def test_recovers_relu_function(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-2, 2, size=(1000, 1))
        y = np.maximum(x[:, 0], 0.0)
        split = np.array(["train"] * 700 + ["val"] * 200 + ["test"] * 100)
        data = SampleSet(inputs=x, outputs=y, split=split)
        net, _ = train(data, epochs=300, batch_size=32, lr=0.02, seed=4,
                       sizes=(1, 8, 8, 1), patience=0)
        x_test, y_test = data.subset("test")
        pred_n = net.forward_normalized(net.normalize_inputs(x_test))
        y_n = normalize(y_test, net.out_norm[0], net.out_norm[1])
        assert float(np.mean((pred_n - y_n) ** 2)) <= 1e-3

    def test_zero_learning_rate_keeps_parameters(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, size=(50, 6))
        y = rng.uniform(0.5, 2.0, 50)
        data = SampleSet(inputs=x, outputs=y,
                         split=np.array(["train"] * 40 + ["val"] * 10))
        net0 = init_network(*norms_from_data(data), seed=7)
        net, _ = train(data, epochs=3, batch_size=16, lr=0.0, seed=7)
        for w0, w1 in zip(net0.weights, net.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_divergence_aborts(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, size=(60, 6))
        y = rng.uniform(0.5, 2.0, 60)
        data = SampleSet(inputs=x, outputs=y,
                         split=np.array(["train"] * 50 + ["val"] * 10))
        with pytest.raises(FloatingPointError), np.errstate(all="ignore"):
            train(data, epochs=60, batch_size=8, lr=1e155, seed=0)

    def test_normalized_targets_stay_positive(self):
        rng = np.random.default_rng(3)
        y = rng.uniform(0.2, 4.0, 100)
        data = SampleSet(inputs=rng.uniform(0, 1, size=(100, 6)), outputs=y,
                         split=np.array(["train"] * 100))
        _, out_norm = norms_from_data(data)
        yn = normalize(y, out_norm[0], out_norm[1])
        assert yn.min() > 0.0
        assert yn.max() < 1.0


class TestGenerateDataset:
    def test_deterministic(self):
        a = generate_dataset(6, seed=5)
        b = generate_dataset(6, seed=5)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.outputs, b.outputs)
        np.testing.assert_array_equal(a.split, b.split)

    def test_workers_do_not_change_outputs(self):
        a = generate_dataset(6, seed=5, workers=1)
        b = generate_dataset(6, seed=5, workers=2)
        np.testing.assert_array_equal(a.outputs, b.outputs)

    def test_domains_respected(self):
        data = generate_dataset(60, seed=1)
        v, sv, rho, sl, length, lam = data.inputs.T
        assert set(np.round(v, 6)) <= set(np.round(surrogate.V_DOMAIN, 6))
        assert np.allclose(np.minimum(np.abs(sv / v - 0.1), np.abs(sv / v - 0.2)),
                           0.0, atol=1e-9)
        assert set(np.round(rho, 6)) <= set(np.round(surrogate.RHO_MAX_DOMAIN, 6))
        assert set(np.round(sl, 6)) <= set(np.round(surrogate.SIGMA_RANGE_DOMAIN, 6))
        assert set(np.round(lam, 6)) <= set(np.round(surrogate.LAMBDA_DOMAIN, 6))
        assert length.min() >= surrogate.L_RANGE[0]
        assert length.max() <= surrogate.L_RANGE[1]
        counts = {tag: int((data.split == tag).sum())
                  for tag in ("train", "val", "test")}
        assert counts == {"train": 42, "val": 12, "test": 6}

    def test_rejects_nonpositive_count(self):
        with pytest.raises(ValueError):
            generate_dataset(0, seed=1)

    def test_more_overlap_means_lower_p_max(self):
        fixed = dict(v=3.0, sigma_v=0.3, rho_max=90.0, sigma_range=0.6,
                     length=300.0)
        tight = np.median([simulate_p_max(**fixed, lam=0.7, seed=s)
                           for s in range(10)])
        loose = np.median([simulate_p_max(**fixed, lam=0.0, seed=s)
                           for s in range(10)])
        assert tight <= loose

    def test_longer_tunnel_not_less_uncertain(self):
        fixed = dict(v=3.0, sigma_v=0.3, rho_max=90.0, sigma_range=0.6, lam=0.2)
        short = np.median([simulate_p_max(**fixed, length=150.0, seed=s)
                           for s in range(10)])
        long_ = np.median([simulate_p_max(**fixed, length=300.0, seed=s)
                           for s in range(10)])
        assert long_ >= short


class TestIo:
    def test_weights_roundtrip(self, tmp_path):
        net = init_network(np.tile([[0.0, 1.0]], (6, 1)), np.array([0.0, 2.0]),
                           seed=3)
        path = tmp_path / "weights.json"
        save_weights(net, path)
        loaded = load_weights(path)
        assert loaded.sizes == net.sizes
        for w0, w1 in zip(net.weights, loaded.weights):
            np.testing.assert_array_equal(w0, w1)
        np.testing.assert_array_equal(net.in_norms, loaded.in_norms)

    def test_dataset_csv_roundtrip(self, tmp_path):
        data = generate_dataset(8, seed=9)
        path = tmp_path / "dataset.csv"
        data.to_csv(path)
        loaded = SampleSet.from_csv(path)
        np.testing.assert_array_equal(data.inputs, loaded.inputs)
        np.testing.assert_array_equal(data.outputs, loaded.outputs)
        np.testing.assert_array_equal(data.split, loaded.split)
        header = path.read_text().splitlines()[0]
        assert header == "v,sigma_v,rho_max,sigma_range,L,lambda,p_max,split"
