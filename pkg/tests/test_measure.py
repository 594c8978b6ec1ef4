from __future__ import annotations

import itertools
import unittest

import numpy as np

from qst_workbench.errors import DimensionMismatch, InvalidParameter, OutOfRange, UnsupportedQubitCount
from qst_workbench.measure import (
    CUBE,
    GAUSSIAN,
    MUB,
    UNIFORM,
    NoiseAngles,
    NoiseSpec,
    apply_noise,
    apply_unitary,
    build_suite,
    cube_suite,
    mub_suite_2q,
    noise_unitary,
    pauli_basis_states,
    product_ket,
    rotation_unitary,
    sample_noise_angles,
    truncate_suite,
)


def _resolves_identity(vectors: np.ndarray) -> bool:
    total = np.einsum("ij,ik->jk", vectors, vectors.conj())
    return bool(np.max(np.abs(total - np.eye(vectors.shape[1]))) < 1e-10)


class PauliBasisTests(unittest.TestCase):
    def test_pairs_are_orthonormal(self) -> None:
        basis = pauli_basis_states()
        for a, b in (("H", "V"), ("D", "A"), ("R", "L")):
            self.assertAlmostEqual(abs(np.vdot(basis[a], basis[b])), 0.0, delta=1e-15)
            self.assertAlmostEqual(np.linalg.norm(basis[a]), 1.0, delta=1e-15)

    def test_overlaps_between_axes(self) -> None:
        basis = pauli_basis_states()
        self.assertAlmostEqual(abs(np.vdot(basis["H"], basis["D"])) ** 2, 0.5, delta=1e-15)
        self.assertAlmostEqual(abs(np.vdot(basis["R"], basis["D"])) ** 2, 0.5, delta=1e-15)

    def test_product_ket_puts_first_qubit_first(self) -> None:
        np.testing.assert_array_equal(product_ket("HV"), np.array([0, 1, 0, 0], dtype=complex))
        np.testing.assert_array_equal(product_ket("VH"), np.array([0, 0, 1, 0], dtype=complex))


class SuiteConstructionTests(unittest.TestCase):
    def test_cube_counts(self) -> None:
        two = cube_suite(2)
        self.assertEqual((two.set_count, two.operator_count), (9, 36))
        three = cube_suite(3)
        self.assertEqual((three.set_count, three.operator_count), (27, 216))

    def test_cube_set_order(self) -> None:
        suite = cube_suite(2)
        self.assertEqual(suite.sets[0].labels, ("HH", "HV", "VH", "VV"))
        self.assertEqual(suite.sets[1].labels, ("HD", "HA", "VD", "VA"))
        self.assertEqual(suite.sets[8].labels, ("RR", "RL", "LR", "LL"))
        self.assertEqual(cube_suite(3).sets[1].labels[0], "HHD")

    def test_cube_projectors_span_the_operator_space(self) -> None:
        for n, d in ((2, 4), (3, 8)):
            vectors = cube_suite(n).vectors
            projectors = np.einsum("ij,ik->ijk", vectors, vectors.conj()).reshape(len(vectors), d * d)
            self.assertEqual(np.linalg.matrix_rank(projectors), d * d)
        truncated = truncate_suite(cube_suite(2), 3).vectors
        projectors = np.einsum("ij,ik->ijk", truncated, truncated.conj()).reshape(len(truncated), 16)
        self.assertLess(np.linalg.matrix_rank(projectors), 16)

    def test_every_set_resolves_identity(self) -> None:
        for suite in (cube_suite(2), cube_suite(3), mub_suite_2q()):
            for projector_set in suite.sets:
                self.assertTrue(_resolves_identity(projector_set.vectors))

    def test_mub_counts_and_labels(self) -> None:
        suite = mub_suite_2q()
        self.assertEqual((suite.set_count, suite.operator_count), (5, 20))
        self.assertEqual(suite.sets[1].labels, ("RD", "RA", "LD", "LA"))
        self.assertEqual(suite.sets[3].labels[0], "RL+iLR")

    def test_mub_sets_are_mutually_unbiased(self) -> None:
        suite = mub_suite_2q()
        for a, b in itertools.combinations(range(suite.set_count), 2):
            overlaps = np.abs(suite.sets[a].vectors.conj() @ suite.sets[b].vectors.T) ** 2
            np.testing.assert_allclose(overlaps, 0.25, atol=1e-10)

    def test_mub_entangled_pair_is_orthogonal(self) -> None:
        first, second = mub_suite_2q().sets[3].vectors[:2]
        self.assertAlmostEqual(abs(np.vdot(first, second)), 0.0, delta=1e-15)

    def test_build_suite_dispatch(self) -> None:
        self.assertEqual(build_suite(CUBE, 2).name, "cube9")
        self.assertEqual(build_suite(MUB, 2, 3).operator_count, 12)
        with self.assertRaises(UnsupportedQubitCount):
            build_suite(MUB, 3)
        with self.assertRaises(UnsupportedQubitCount):
            cube_suite(4)
        with self.assertRaises(InvalidParameter):
            build_suite("sic", 2)

    def test_truncation(self) -> None:
        suite = cube_suite(2)
        self.assertEqual(truncate_suite(suite, 9).labels, suite.labels)
        first = truncate_suite(suite, 1)
        self.assertEqual(first.labels, ("HH", "HV", "VH", "VV"))
        self.assertEqual(truncate_suite(suite, 5).operator_count, 20)
        for bad in (0, 10):
            with self.assertRaises(OutOfRange):
                truncate_suite(suite, bad)

    def test_fingerprint_tracks_content(self) -> None:
        self.assertEqual(cube_suite(2).fingerprint(), cube_suite(2).fingerprint())
        self.assertNotEqual(cube_suite(2).fingerprint(), truncate_suite(cube_suite(2), 4).fingerprint())
        self.assertEqual(cube_suite(2).descriptor()["noise"], "none")


class NoiseTests(unittest.TestCase):
    def test_rotation_special_cases(self) -> None:
        np.testing.assert_allclose(rotation_unitary(0.0, 0.0, 0.0), np.eye(2), atol=1e-15)
        np.testing.assert_allclose(rotation_unitary(0.0, np.pi / 2, 0.0), [[0, -1j], [-1j, 0]], atol=1e-15)

    def test_random_rotations_are_unitary(self) -> None:
        rng = np.random.default_rng(8)
        for _ in range(100):
            u = rotation_unitary(*rng.uniform(-7.0, 7.0, size=3))
            np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)

    def test_zero_ratio_draws_zero_angles(self) -> None:
        rng = np.random.default_rng(0)
        for distribution in (GAUSSIAN, UNIFORM):
            angles = sample_noise_angles(NoiseSpec.from_ratio(distribution, 0.0), 2, rng)
            self.assertTrue(angles.is_zero)
            self.assertEqual(angles.thetas.shape, (2, 3))

    def test_uniform_angles_stay_in_range(self) -> None:
        angles = sample_noise_angles(NoiseSpec.from_ratio(UNIFORM, 0.1), 3, np.random.default_rng(4))
        thetas = angles.thetas
        self.assertTrue(np.all(thetas >= 0.0))
        self.assertTrue(np.all(thetas[:, 0] <= 0.2 * np.pi))
        self.assertTrue(np.all(thetas[:, 1] <= 0.05 * np.pi))

    def test_gaussian_angle_spread(self) -> None:
        rng = np.random.default_rng(8)
        spec = NoiseSpec.from_ratio(GAUSSIAN, 0.1)
        thetas = np.vstack([sample_noise_angles(spec, 2, rng).thetas for _ in range(5000)])
        np.testing.assert_allclose(thetas.std(axis=0), np.pi * 0.1 * np.array([1.0, 2.0, 2.0]), rtol=0.05)
        np.testing.assert_allclose(thetas.mean(axis=0), 0.0, atol=0.03)

    def test_noise_spec_validation(self) -> None:
        with self.assertRaises(InvalidParameter):
            NoiseSpec("cauchy", (0.1, 0.1, 0.1))
        with self.assertRaises(InvalidParameter):
            NoiseSpec(UNIFORM, (0.1, -0.1, 0.1))
        self.assertTrue(NoiseSpec().is_noiseless)

    def test_zero_angles_leave_suite_unchanged(self) -> None:
        suite = cube_suite(2)
        noisy = apply_noise(suite, NoiseAngles(np.zeros((2, 3))))
        np.testing.assert_array_equal(noisy.vectors, suite.vectors)

    def test_noisy_sets_still_resolve_identity(self) -> None:
        spec = NoiseSpec.from_ratio(GAUSSIAN, 0.3)
        suite = mub_suite_2q()
        noisy = apply_noise(suite, sample_noise_angles(spec, 2, np.random.default_rng(6)), spec)
        self.assertIs(noisy.noise, spec)
        for projector_set in noisy.sets:
            self.assertTrue(_resolves_identity(projector_set.vectors))

    def test_rotation_on_first_qubit_only(self) -> None:
        thetas = np.zeros((2, 3))
        thetas[0] = (0.4, 0.7, -1.2)
        u = rotation_unitary(*thetas[0])
        noisy = apply_noise(cube_suite(2), NoiseAngles(thetas))
        expected = np.kron(u, np.eye(2)) @ product_ket("DA")
        index = noisy.labels.index("DA")
        np.testing.assert_allclose(noisy.vectors[index], expected, atol=1e-12)
        np.testing.assert_allclose(noise_unitary(NoiseAngles(thetas)), np.kron(u, np.eye(2)), atol=1e-15)

    def test_undoing_the_rotation_restores_the_suite(self) -> None:
        spec = NoiseSpec.from_ratio(GAUSSIAN, 0.4)
        for suite in (cube_suite(2), cube_suite(3), mub_suite_2q()):
            angles = sample_noise_angles(spec, suite.n, np.random.default_rng(suite.n))
            noisy = apply_noise(suite, angles, spec)
            self.assertGreater(np.max(np.abs(noisy.vectors - suite.vectors)), 1e-3)
            restored = apply_unitary(noisy, noise_unitary(angles).conj().T)
            np.testing.assert_allclose(restored.vectors, suite.vectors, atol=1e-12)

    def test_angle_count_must_match_qubits(self) -> None:
        with self.assertRaises(DimensionMismatch):
            apply_noise(cube_suite(2), NoiseAngles(np.zeros((3, 3))))


if __name__ == "__main__":
    unittest.main()
