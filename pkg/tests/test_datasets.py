from __future__ import annotations

import shutil
import struct
import unittest
from pathlib import Path

import numpy as np

from qst_workbench.datasets import (
    MIXED,
    OPTICAL,
    PURITY_GRID,
    Dataset,
    StateFamily,
    dataset_to_bytes,
    generate_dataset,
    ideal_suite,
    load_dataset,
    save_dataset,
)
from qst_workbench.errors import FormatVersionMismatch, InvalidParameter, ShapeMismatch
from qst_workbench.measure import UNIFORM, NoiseSpec, build_suite, cube_suite, mub_suite_2q
from qst_workbench.qstate import alpha_to_density, expected_purity, fidelity, purity
from qst_workbench.sampling import ShotBudget


class GenerationTests(unittest.TestCase):
    def setUp(self) -> None:
        self.suite = cube_suite(2)

    def test_targets_decode_to_true_states(self) -> None:
        data = generate_dataset(StateFamily(), self.suite, ShotBudget(10), count=40, seed=3)
        self.assertEqual((len(data), data.feature_dim, data.target_dim), (40, 36, 16))
        for alpha, rho in zip(data.targets, data.states):
            self.assertGreaterEqual(fidelity(alpha_to_density(alpha), rho), 1.0 - 1e-6)

    def test_mixed_family_purity(self) -> None:
        data = generate_dataset(StateFamily(MIXED, p=0.5), self.suite, None, count=5, seed=1)
        for rho in data.states:
            self.assertAlmostEqual(purity(rho), expected_purity(0.5, 4), delta=1e-12)
        self.assertEqual(data.manifest["family"], MIXED)
        self.assertEqual(data.manifest["copies"], "exact")

    def test_same_seed_same_rows_for_any_worker_count(self) -> None:
        a = generate_dataset(StateFamily(), self.suite, ShotBudget(20), count=12, seed=8)
        b = generate_dataset(StateFamily(), self.suite, ShotBudget(20), count=12, seed=8, workers=4)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.targets, b.targets)
        c = generate_dataset(StateFamily(), self.suite, ShotBudget(20), count=12, seed=9)
        self.assertFalse(np.array_equal(a.features, c.features))

    def test_zero_noise_matches_noiseless(self) -> None:
        clean = generate_dataset(StateFamily(), self.suite, ShotBudget(20), count=6, seed=5)
        quiet = generate_dataset(
            StateFamily(), self.suite, ShotBudget(20), count=6, seed=5, noise=NoiseSpec.from_ratio(UNIFORM, 0.0)
        )
        np.testing.assert_array_equal(clean.features, quiet.features)
        noisy = generate_dataset(
            StateFamily(), self.suite, ShotBudget(20), count=6, seed=5, noise=NoiseSpec.from_ratio(UNIFORM, 0.2)
        )
        np.testing.assert_array_equal(clean.states, noisy.states)
        self.assertFalse(np.array_equal(clean.features, noisy.features))

    def test_optical_family_overrides_count(self) -> None:
        family = StateFamily(OPTICAL, optical_basis=2, optical_gates=3)
        data = generate_dataset(family, mub_suite_2q(), None, count=1, seed=2)
        self.assertEqual(len(data), 8)
        self.assertEqual(data.feature_dim, 20)
        self.assertEqual(data.manifest["count"], "8")

    def test_purity_grid_needs_a_ratio(self) -> None:
        with self.assertRaises(InvalidParameter):
            generate_dataset(StateFamily(PURITY_GRID, p=0.5), self.suite, None, count=2, seed=0)
        self.assertEqual(StateFamily(PURITY_GRID).at_ratio(0.3).kind, MIXED)

    def test_family_validation(self) -> None:
        with self.assertRaises(InvalidParameter):
            StateFamily("thermal")
        with self.assertRaises(InvalidParameter):
            StateFamily(MIXED, p=1.0)
        with self.assertRaises(InvalidParameter):
            generate_dataset(StateFamily(), self.suite, None, count=0, seed=0)

    def test_ideal_suite_from_manifest(self) -> None:
        suite = build_suite("mub", 2, 3)
        data = generate_dataset(StateFamily(), suite, None, count=2, seed=0)
        self.assertEqual(ideal_suite(data).fingerprint(), suite.fingerprint())
        with self.assertRaises(InvalidParameter):
            ideal_suite(Dataset({}, data.features, data.targets))

    def test_rows_must_pair_up(self) -> None:
        with self.assertRaises(ShapeMismatch):
            Dataset({}, np.zeros((3, 36)), np.zeros((2, 16)))


class DatasetFileTests(unittest.TestCase):
    def setUp(self) -> None:
        self.base = Path.cwd() / "build_tmp" / "tests_datasets"
        shutil.rmtree(self.base, ignore_errors=True)
        self.base.mkdir(parents=True, exist_ok=True)
        self.data = generate_dataset(StateFamily(), cube_suite(2), ShotBudget(10), count=7, seed=4)

    def _write(self, name: str, payload: bytes) -> Path:
        path = self.base / name
        path.write_bytes(payload)
        return path

    def test_round_trip(self) -> None:
        loaded = load_dataset(save_dataset(self.data, self.base / "train.qds"))
        self.assertEqual(loaded.manifest, self.data.manifest)
        np.testing.assert_array_equal(loaded.features, self.data.features)
        np.testing.assert_array_equal(loaded.targets, self.data.targets)
        np.testing.assert_array_equal(loaded.states, self.data.states)

    def test_without_states(self) -> None:
        bare = Dataset(self.data.manifest, self.data.features, self.data.targets)
        loaded = load_dataset(save_dataset(bare, self.base / "bare.qds"))
        self.assertIsNone(loaded.states)
        self.assertEqual(len(loaded), 7)

    def test_truncated_file(self) -> None:
        path = self.base / "short.qds"
        path.write_bytes(dataset_to_bytes(self.data)[:-16])
        with self.assertRaises(FormatVersionMismatch):
            load_dataset(path)

    def test_trailing_bytes(self) -> None:
        with self.assertRaises(FormatVersionMismatch):
            load_dataset(self._write("long.qds", dataset_to_bytes(self.data) + b"\x00"))

    def test_unreadable_manifest(self) -> None:
        for manifest in (b"{bad", b"\xff\xfe", b"[1, 2]"):
            payload = b"QSTDATA1" + struct.pack("<Q", len(manifest)) + manifest
            with self.assertRaises(FormatVersionMismatch):
                load_dataset(self._write("manifest.qds", payload))

    def test_model_file_is_not_a_dataset(self) -> None:
        path = self.base / "wrong.qds"
        path.write_bytes(b"DNNQST01" + dataset_to_bytes(self.data)[8:])
        with self.assertRaises(FormatVersionMismatch):
            load_dataset(path)


if __name__ == "__main__":
    unittest.main()
