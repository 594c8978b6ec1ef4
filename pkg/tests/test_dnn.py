from __future__ import annotations

import shutil
import unittest
from pathlib import Path

import numpy as np

from qst_workbench.dnn import (
    MODEL_MAGIC,
    TrainConfig,
    forward,
    init_model,
    leaky_relu,
    load_model,
    loss_and_gradients,
    model_to_bytes,
    mse_loss,
    predict_state,
    predict_states,
    save_model,
    train,
)
from qst_workbench.errors import FormatVersionMismatch, InvalidParameter, ShapeMismatch
from qst_workbench.measure import cube_suite
from qst_workbench.qstate import check_density, density_to_alpha, infidelity, perturb_pure, random_pure_state
from qst_workbench.sampling import ShotBudget, exact_frequencies, sample_frequencies


def _pure_training_pairs(count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    suite = cube_suite(2)
    features, targets = [], []
    for _ in range(count):
        psi = random_pure_state(2, rng)
        rho = perturb_pure(psi)
        features.append(sample_frequencies(rho, suite, ShotBudget(100), rng).values)
        targets.append(density_to_alpha(rho))
    return np.array(features), np.array(targets)


class ModelShapeTests(unittest.TestCase):
    def test_layer_sizes(self) -> None:
        model = init_model(36, 128, 16, seed=3)
        self.assertEqual(model.layer_sizes, (36, 128, 128, 128, 16))
        self.assertEqual(init_model(216, 256, 64, seed=3).output_dim, 64)

    def test_same_seed_same_weights(self) -> None:
        a = init_model(36, 32, 16, seed=9)
        b = init_model(36, 32, 16, seed=9)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        self.assertFalse(np.array_equal(a.weights[0], init_model(36, 32, 16, seed=10).weights[0]))

    def test_weights_respect_init_bound(self) -> None:
        model = init_model(36, 64, 16, seed=1)
        self.assertLessEqual(np.max(np.abs(model.weights[0])), np.sqrt(6.0 / 36))
        self.assertLessEqual(np.max(np.abs(model.weights[1])), np.sqrt(6.0 / 64))
        for b in model.biases:
            self.assertFalse(np.any(b))

    def test_rejects_nonpositive_sizes(self) -> None:
        with self.assertRaises(InvalidParameter):
            init_model(36, 0, 16, seed=0)


class ForwardTests(unittest.TestCase):
    def setUp(self) -> None:
        self.model = init_model(36, 32, 16, seed=4)

    def test_leaky_slope(self) -> None:
        np.testing.assert_allclose(leaky_relu(np.array([-1.0, 0.0, 2.0])), [-0.01, 0.0, 2.0])

    def test_zero_input_follows_bias_path(self) -> None:
        rng = np.random.default_rng(2)
        for b in self.model.biases:
            b[:] = rng.standard_normal(b.shape)
        expected = self.model.biases[0]
        for w, b in zip(self.model.weights[1:-1], self.model.biases[1:-1]):
            expected = leaky_relu(expected) @ w + b
        expected = leaky_relu(expected) @ self.model.weights[-1] + self.model.biases[-1]
        np.testing.assert_allclose(forward(self.model, np.zeros(36)), expected, atol=1e-12)

    def test_single_and_batch_agree(self) -> None:
        x = np.random.default_rng(0).uniform(0.0, 1.0, size=(5, 36))
        batch = forward(self.model, x)
        self.assertEqual(batch.shape, (5, 16))
        np.testing.assert_allclose(forward(self.model, x[2]), batch[2], atol=1e-14)
        np.testing.assert_array_equal(forward(self.model.copy(), x), batch)

    def test_wrong_feature_length(self) -> None:
        with self.assertRaises(ShapeMismatch):
            forward(self.model, np.zeros(20))


class LossTests(unittest.TestCase):
    def test_mse_values(self) -> None:
        target = np.linspace(-1.0, 1.0, 16)
        self.assertEqual(mse_loss(target, target), 0.0)
        self.assertAlmostEqual(mse_loss(target + 1.0, target), 1.0, delta=1e-12)
        with self.assertRaises(ShapeMismatch):
            mse_loss(np.zeros(16), np.zeros(15))

    def test_gradients_match_finite_differences(self) -> None:
        rng = np.random.default_rng(12)
        model = init_model(8, 8, 4, seed=5)
        for b in model.biases:
            b[:] = 0.1 * rng.standard_normal(b.shape)
        x = rng.standard_normal((6, 8))
        y = rng.standard_normal((6, 4))
        _, grad_w, grad_b = loss_and_gradients(model, x, y)
        step = 1e-6
        for layer in range(len(model.weights)):
            for params, grads in ((model.weights, grad_w), (model.biases, grad_b)):
                flat = params[layer].reshape(-1)
                for index in range(0, flat.size, 3):
                    saved = flat[index]
                    flat[index] = saved + step
                    up = loss_and_gradients(model, x, y)[0]
                    flat[index] = saved - step
                    down = loss_and_gradients(model, x, y)[0]
                    flat[index] = saved
                    numeric = (up - down) / (2 * step)
                    self.assertAlmostEqual(grads[layer].reshape(-1)[index], numeric, delta=1e-6 + 1e-4 * abs(numeric))

    def test_output_gradient_formula(self) -> None:
        model = init_model(8, 8, 4, seed=6)
        x = np.ones((1, 8))
        y = np.zeros((1, 4))
        out = forward(model, x)
        _, grad_w, grad_b = loss_and_gradients(model, x, y)
        np.testing.assert_allclose(grad_b[-1], 2.0 * (out[0] - y[0]) / 4, atol=1e-14)


class TrainingTests(unittest.TestCase):
    def test_zero_learning_rate_changes_nothing(self) -> None:
        features, targets = _pure_training_pairs(64, seed=1)
        model = init_model(36, 16, 16, seed=0)
        before = model.copy()
        _, history = train(model, (features, targets), TrainConfig(learning_rate=0.0, epochs=3, batch_size=16))
        for wa, wb in zip(model.weights, before.weights):
            np.testing.assert_array_equal(wa, wb)
        np.testing.assert_allclose(history, history[0], rtol=1e-12)

    def test_memorizes_a_single_sample(self) -> None:
        features, targets = _pure_training_pairs(1, seed=2)
        model = init_model(36, 32, 16, seed=0)
        _, history = train(model, (features, targets), TrainConfig(epochs=500, batch_size=1))
        self.assertLess(history[-1], 1e-4)

    def test_learns_the_maximally_mixed_state(self) -> None:
        rho = np.eye(4, dtype=complex) / 4
        features = exact_frequencies(rho, cube_suite(2)).values[np.newaxis, :]
        targets = density_to_alpha(rho)[np.newaxis, :]
        model = init_model(36, 32, 16, seed=1)
        train(model, (features, targets), TrainConfig(epochs=500, batch_size=1))
        self.assertLess(infidelity(rho, predict_state(model, features[0])), 1e-3)

    def test_loss_halves_on_pure_states(self) -> None:
        features, targets = _pure_training_pairs(1000, seed=3)
        model = init_model(36, 128, 16, seed=0)
        epochs = []
        _, history = train(
            model,
            (features, targets),
            TrainConfig(epochs=30, batch_size=32, seed=4),
            on_epoch=lambda epoch, loss: epochs.append(epoch),
        )
        self.assertEqual(epochs, list(range(1, 31)))
        self.assertLess(history[-1], 0.5 * history[0])
        self.assertIn("train_config", model.manifest)
        for rho in predict_states(model, features[:10]):
            check_density(rho, tol=1e-9)

    def test_training_is_deterministic(self) -> None:
        features, targets = _pure_training_pairs(50, seed=5)
        a = train(init_model(36, 16, 16, seed=0), (features, targets), TrainConfig(epochs=3, batch_size=8))[0]
        b = train(init_model(36, 16, 16, seed=0), (features, targets), TrainConfig(epochs=3, batch_size=8))[0]
        np.testing.assert_array_equal(a.weights[-1], b.weights[-1])

    def test_mismatched_data_is_rejected(self) -> None:
        model = init_model(36, 16, 16, seed=0)
        with self.assertRaises(ShapeMismatch):
            train(model, (np.zeros((4, 20)), np.zeros((4, 16))))
        with self.assertRaises(ShapeMismatch):
            train(model, (np.zeros((0, 36)), np.zeros((0, 16))))

    def test_config_validation(self) -> None:
        with self.assertRaises(InvalidParameter):
            TrainConfig(learning_rate=-1.0)
        with self.assertRaises(InvalidParameter):
            TrainConfig(batch_size=0)


class ModelFileTests(unittest.TestCase):
    def setUp(self) -> None:
        self.base = Path.cwd() / "build_tmp" / "tests_dnn"
        shutil.rmtree(self.base, ignore_errors=True)
        self.base.mkdir(parents=True, exist_ok=True)
        self.model = init_model(36, 16, 16, seed=7)
        self.model.manifest["suite"] = "cube9"

    def test_save_and_load(self) -> None:
        path = save_model(self.model, self.base / "model.bin")
        loaded = load_model(path)
        self.assertEqual(loaded.layer_sizes, self.model.layer_sizes)
        self.assertEqual(loaded.manifest, {"suite": "cube9"})
        for wa, wb in zip(loaded.weights, self.model.weights):
            np.testing.assert_array_equal(wa, wb)
        x = np.full(36, 0.25)
        np.testing.assert_array_equal(forward(loaded, x), forward(self.model, x))

    def test_wrong_magic(self) -> None:
        path = self.base / "bad.bin"
        path.write_bytes(b"NOTAMODL" + model_to_bytes(self.model)[len(MODEL_MAGIC):])
        with self.assertRaises(FormatVersionMismatch):
            load_model(path)

    def test_truncated_file(self) -> None:
        path = self.base / "short.bin"
        path.write_bytes(model_to_bytes(self.model)[:-7])
        with self.assertRaises(FormatVersionMismatch):
            load_model(path)

    def test_trailing_bytes(self) -> None:
        path = self.base / "long.bin"
        path.write_bytes(model_to_bytes(self.model) + b"\x00")
        with self.assertRaises(FormatVersionMismatch):
            load_model(path)


if __name__ == "__main__":
    unittest.main()
