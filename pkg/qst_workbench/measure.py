"""Projective measurement suites (cube and 2-qubit MUB) and unitary rotation noise.

Projectors are kept as their defining unit vectors: a ProjectorSet of dimension d
holds a (d, d) array whose rows are the orthonormal outcome vectors.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, replace
from functools import reduce
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, OutOfRange, UnsupportedQubitCount

CUBE = "cube"
MUB = "mub"
SUITE_KINDS = (CUBE, MUB)

GAUSSIAN = "gaussian"
UNIFORM = "uniform"
NOISE_DISTRIBUTIONS = (GAUSSIAN, UNIFORM)

# Per-qubit axis order; set order of the cube suite is lexicographic over it.
AXIS_ORDER = ("Z", "X", "Y")
AXIS_OUTCOMES: Dict[str, Tuple[str, str]] = {"Z": ("H", "V"), "X": ("D", "A"), "Y": ("R", "L")}

_SQRT_HALF = 1.0 / np.sqrt(2.0)


def pauli_basis_states() -> Dict[str, np.ndarray]:
    """The six single-qubit Pauli eigenvectors; R = (H + iV)/sqrt2, L = (H - iV)/sqrt2."""
    h = np.array([1.0, 0.0], dtype=complex)
    v = np.array([0.0, 1.0], dtype=complex)
    return {
        "H": h,
        "V": v,
        "D": (h + v) * _SQRT_HALF,
        "A": (h - v) * _SQRT_HALF,
        "R": (h + 1j * v) * _SQRT_HALF,
        "L": (h - 1j * v) * _SQRT_HALF,
    }


def product_ket(labels: str) -> np.ndarray:
    """Tensor product of single-qubit kets, qubit 1 (leftmost label) most significant."""
    basis = pauli_basis_states()
    return reduce(np.kron, (basis[ch] for ch in labels))


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    labels: Tuple[str, ...]
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def projectors(self) -> np.ndarray:
        """(d, d, d) stack of |m><m| matrices."""
        return np.einsum("ij,ik->ijk", self.vectors, self.vectors.conj())


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str = UNIFORM
    ratios: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.distribution not in NOISE_DISTRIBUTIONS:
            raise InvalidParameter(f"noise distribution must be one of {NOISE_DISTRIBUTIONS}, got {self.distribution!r}")
        ratios = tuple(float(r) for r in self.ratios)
        if len(ratios) != 3 or any(r < 0.0 for r in ratios):
            raise InvalidParameter(f"noise ratios must be three values >= 0, got {self.ratios}")
        object.__setattr__(self, "ratios", ratios)

    @classmethod
    def from_ratio(cls, distribution: str, ratio: float) -> "NoiseSpec":
        return cls(distribution, (ratio, ratio, ratio))

    @property
    def is_noiseless(self) -> bool:
        return all(r == 0.0 for r in self.ratios)

    def describe(self) -> str:
        return f"{self.distribution}:{','.join(repr(r) for r in self.ratios)}"


@dataclass(frozen=True, eq=False)
class NoiseAngles:
    """Per-qubit rotation angles, shape (n, 3)."""

    thetas: np.ndarray

    @property
    def n(self) -> int:
        return int(self.thetas.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.thetas)


@dataclass(frozen=True, eq=False)
class MeasurementSuite:
    kind: str
    n: int
    sets: Tuple[ProjectorSet, ...]
    noise: Optional[NoiseSpec] = None
    angles: Optional[NoiseAngles] = None

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def set_count(self) -> int:
        return len(self.sets)

    @property
    def operator_count(self) -> int:
        return self.set_count * self.dim

    @property
    def vectors(self) -> np.ndarray:
        """All outcome vectors stacked in suite order, shape (K*d, d)."""
        return np.concatenate([s.vectors for s in self.sets], axis=0)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(label for s in self.sets for label in s.labels)

    @property
    def name(self) -> str:
        return f"{self.kind}{self.set_count}"

    def fingerprint(self) -> str:
        digest = hashlib.sha1(np.ascontiguousarray(self.vectors).tobytes()).hexdigest()
        return f"{self.kind}-{self.n}q-{self.set_count}-{digest[:16]}"

    def descriptor(self) -> Dict[str, str]:
        return {
            "suite_kind": self.kind,
            "qubits": str(self.n),
            "set_count": str(self.set_count),
            "noise": self.noise.describe() if self.noise else "none",
        }


def _check_qubits(n: int) -> None:
    if n not in (2, 3):
        raise UnsupportedQubitCount(f"cube suites support 2 or 3 qubits, got {n}")


def cube_suite(n: int) -> MeasurementSuite:
    """3**n sets of 2**n product projectors; sets ordered lexicographically over Z < X < Y."""
    _check_qubits(n)
    sets = []
    for axes in itertools.product(AXIS_ORDER, repeat=n):
        labels = tuple("".join(outcome) for outcome in itertools.product(*(AXIS_OUTCOMES[a] for a in axes)))
        vectors = np.array([product_ket(label) for label in labels])
        sets.append(ProjectorSet(labels, vectors))
    return MeasurementSuite(CUBE, n, tuple(sets))


def _entangled(first: str, second: str, sign: complex) -> np.ndarray:
    return (product_ket(first) + sign * product_ket(second)) * _SQRT_HALF


def mub_suite_2q() -> MeasurementSuite:
    """The five mutually unbiased 2-qubit bases, in table order."""
    product_rows = [
        ("HH", "HV", "VH", "VV"),
        ("RD", "RA", "LD", "LA"),
        ("DR", "DL", "AR", "AL"),
    ]
    sets = [ProjectorSet(row, np.array([product_ket(label) for label in row])) for row in product_rows]
    entangled_rows = [
        (("RL", "LR"), ("RR", "LL")),
        (("RV", "LH"), ("RH", "LV")),
    ]
    for pairs in entangled_rows:
        labels = []
        vectors = []
        for first, second in pairs:
            for sign, mark in ((1j, "+"), (-1j, "-")):
                labels.append(f"{first}{mark}i{second}")
                vectors.append(_entangled(first, second, sign))
        sets.append(ProjectorSet(tuple(labels), np.array(vectors)))
    return MeasurementSuite(MUB, 2, tuple(sets))


def build_suite(kind: str, n: int, sets: int = 0) -> MeasurementSuite:
    """Complete suite of the given kind, truncated to its first `sets` sets when sets > 0."""
    if kind == CUBE:
        suite = cube_suite(n)
    elif kind == MUB:
        if n != 2:
            raise UnsupportedQubitCount(f"MUB suites are only built for 2 qubits, got {n}")
        suite = mub_suite_2q()
    else:
        raise InvalidParameter(f"suite kind must be one of {SUITE_KINDS}, got {kind!r}")
    return truncate_suite(suite, sets) if sets else suite


def truncate_suite(suite: MeasurementSuite, k: int) -> MeasurementSuite:
    if not 1 <= k <= suite.set_count:
        raise OutOfRange(f"set count {k} outside 1..{suite.set_count} for {suite.kind}")
    return replace(suite, sets=suite.sets[:k])


def rotation_unitary(theta1: float, theta2: float, theta3: float) -> np.ndarray:
    c, s = np.cos(theta2), np.sin(theta2)
    return np.array(
        [
            [np.exp(1j * theta1) * c, -1j * np.exp(1j * theta3) * s],
            [-1j * np.exp(-1j * theta3) * s, np.exp(-1j * theta1) * c],
        ],
        dtype=complex,
    )


def sample_noise_angles(spec: NoiseSpec, n: int, rng: np.random.Generator) -> NoiseAngles:
    """Draw one rotation triple per qubit.

    gaussian: theta1 ~ N(0, pi*xi1), theta2 ~ N(0, 2pi*xi2), theta3 ~ N(0, 2pi*xi3) (std devs);
    uniform:  theta1 ~ U(0, 2pi*xi1), theta2 ~ U(0, pi*xi2/2), theta3 ~ U(0, 2pi*xi3).
    """
    xi = np.asarray(spec.ratios, dtype=float)
    if spec.distribution == GAUSSIAN:
        scale = np.pi * xi * np.array([1.0, 2.0, 2.0])
        thetas = rng.normal(0.0, 1.0, size=(n, 3)) * scale
    else:
        high = np.pi * xi * np.array([2.0, 0.5, 2.0])
        thetas = rng.uniform(0.0, 1.0, size=(n, 3)) * high
    return NoiseAngles(thetas)


def noise_unitary(angles: NoiseAngles) -> np.ndarray:
    return reduce(np.kron, (rotation_unitary(*row) for row in angles.thetas))


def apply_unitary(suite: MeasurementSuite, u: np.ndarray) -> MeasurementSuite:
    """Replace every outcome vector |m> by U|m>."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (suite.dim, suite.dim):
        raise DimensionMismatch(f"unitary of shape {u.shape} does not act on dimension {suite.dim}")
    sets = tuple(replace(s, vectors=s.vectors @ u.T) for s in suite.sets)
    return replace(suite, sets=sets)


def apply_noise(
    suite: MeasurementSuite,
    angles: NoiseAngles,
    spec: Optional[NoiseSpec] = None,
) -> MeasurementSuite:
    """Rotate every projector of the suite by the same local unitary U_e."""
    if angles.n != suite.n:
        raise DimensionMismatch(f"{angles.n} noise triples for a {suite.n}-qubit suite")
    noisy = suite if angles.is_zero else apply_unitary(suite, noise_unitary(angles))
    return replace(noisy, noise=spec if spec is not None else suite.noise, angles=angles)
