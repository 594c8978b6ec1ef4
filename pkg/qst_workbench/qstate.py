"""Dense state algebra for 2- and 3-qubit tomography.

Density matrices, pure states and Cholesky factors are plain complex ``numpy``
arrays; the functions here generate states, move between a density matrix and
its alpha-vector encoding, and score reconstructions by fidelity.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from math import isqrt
from typing import List, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DegenerateAlpha,
    DimensionMismatch,
    InvalidParameter,
    NonUnitaryBlock,
    NotHermitian,
    NotPositiveDefinite,
    ShapeMismatch,
    UnsupportedQubitCount,
)
from .measure import rotation_unitary

logger = logging.getLogger(__name__)

SUPPORTED_QUBITS = (2, 3)
DEFAULT_EPSILON = 1e-7
EIGEN_CLAMP = 1e-12
PIVOT_TOLERANCE = 1e-10
UNITARY_TOLERANCE = 1e-10
OPTICAL_MIN_P = 0.995
OPTICAL_MAX_P = 0.9999


def dimension(n: int) -> int:
    """Hilbert-space dimension d = 2**n for a supported qubit count."""
    if isinstance(n, bool) or int(n) != n or int(n) not in SUPPORTED_QUBITS:
        raise UnsupportedQubitCount(f"qubit count must be one of {SUPPORTED_QUBITS}, got {n}")
    return 2 ** int(n)


def qubits_for_dimension(d: int) -> int:
    for n in SUPPORTED_QUBITS:
        if 2**n == d:
            return n
    raise UnsupportedQubitCount(f"dimension {d} does not match a supported qubit count")


def hermitize(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2


def _require_square(a: np.ndarray, name: str) -> int:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"{name} must be a square matrix, got shape {a.shape}")
    return a.shape[0]


def haar_random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed d x d unitary (Ginibre matrix, QR, phase-fixed R diagonal)."""
    if d < 2:
        raise InvalidParameter(f"unitary dimension must be >= 2, got {d}")
    ginibre = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = linalg.qr(ginibre)
    diag = np.diagonal(r)
    phases = diag / np.abs(diag)
    return q * phases[np.newaxis, :]


def random_pure_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state U|0...0>; returned as a length-d amplitude vector."""
    d = dimension(n)
    return haar_random_unitary(d, rng)[:, 0].copy()


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def mixed_state(psi: np.ndarray, p: float) -> np.ndarray:
    """p|psi><psi| + (1-p) I/d for 0 < p < 1."""
    if not 0.0 < p < 1.0:
        raise InvalidParameter(f"mixing ratio p must lie in (0, 1), got {p}")
    d = len(psi)
    return p * pure_density(psi) + (1.0 - p) * np.eye(d, dtype=complex) / d


def perturb_pure(psi: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """(1-eps)|psi><psi| + (eps/d) I, a full-rank stand-in for a pure state."""
    if not 0.0 < epsilon < 1e-3:
        raise InvalidParameter(f"perturbation epsilon must lie in (0, 1e-3), got {epsilon}")
    d = len(psi)
    return (1.0 - epsilon) * pure_density(psi) + (epsilon / d) * np.eye(d, dtype=complex)


def expected_purity(p: float, d: int) -> float:
    """Tr(rho^2) of mixed_state(psi, p) expanded directly: p^2 + 2p(1-p)/d + (1-p)^2/d."""
    return p * p + 2.0 * p * (1.0 - p) / d + (1.0 - p) ** 2 / d


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.vdot(rho, rho).real)


def check_density(rho: np.ndarray, tol: float = 1e-9) -> None:
    """Raise when rho is not Hermitian, unit-trace and positive semidefinite within tol."""
    rho = np.asarray(rho)
    _require_square(rho, "density matrix")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise NotHermitian("density matrix is not Hermitian")
    trace = np.trace(rho)
    if abs(trace - 1.0) > tol:
        raise InvalidParameter(f"density matrix trace is {trace.real:.3e}, expected 1")
    min_eig = float(np.min(linalg.eigvalsh(hermitize(rho))))
    if min_eig < -tol:
        raise NotPositiveDefinite(f"density matrix has eigenvalue {min_eig:.3e}")


def cholesky_decompose(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^dagger = rho and a real, nonnegative diagonal.

    Pivots in [-1e-10, 0] are clamped to zero, which leaves the matching column
    empty; anything more negative means rho is not PSD.
    """
    rho = hermitize(np.asarray(rho, dtype=complex))
    d = _require_square(rho, "density matrix")
    lower = np.zeros((d, d), dtype=complex)
    for j in range(d):
        row_j = lower[j, :j]
        pivot = rho[j, j].real - float(np.sum(np.abs(row_j) ** 2))
        if pivot < -PIVOT_TOLERANCE:
            raise NotPositiveDefinite(f"Cholesky pivot {j} is {pivot:.3e}")
        diag = np.sqrt(max(pivot, 0.0))
        lower[j, j] = diag
        if j + 1 < d and diag > 0.0:
            column = rho[j + 1 :, j] - lower[j + 1 :, :j] @ row_j.conj()
            lower[j + 1 :, j] = column / diag
    return lower


def alpha_encode(lower: np.ndarray) -> np.ndarray:
    """Flatten L: diagonal first, then (re, im) of each strictly-lower entry in row-major order."""
    lower = np.asarray(lower)
    d = _require_square(lower, "Cholesky factor")
    rows, cols = np.tril_indices(d, -1)
    off = lower[rows, cols]
    pairs = np.column_stack([off.real, off.imag]).ravel()
    return np.concatenate([np.diagonal(lower).real, pairs]).astype(float)


def alpha_decode(alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float).ravel()
    d = isqrt(alpha.size)
    if d * d != alpha.size or d < 1:
        raise ShapeMismatch(f"alpha-vector length {alpha.size} is not a perfect square")
    lower = np.zeros((d, d), dtype=complex)
    lower[np.diag_indices(d)] = alpha[:d]
    rows, cols = np.tril_indices(d, -1)
    pairs = alpha[d:].reshape(-1, 2)
    lower[rows, cols] = pairs[:, 0] + 1j * pairs[:, 1]
    return lower


def alpha_to_density(alpha: np.ndarray) -> np.ndarray:
    """rho = L L^dagger / Tr(L L^dagger); physical for any real alpha that is not ~0."""
    lower = alpha_decode(alpha)
    gram = lower @ lower.conj().T
    trace = float(np.trace(gram).real)
    if trace <= 1e-30:
        raise DegenerateAlpha(f"Tr(L L^dagger) = {trace:.3e} is too small to normalize")
    return hermitize(gram / trace)


def density_to_alpha(rho: np.ndarray) -> np.ndarray:
    return alpha_encode(cholesky_decompose(rho))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = linalg.eigh(hermitize(rho))
    roots = np.sqrt(np.clip(eigvals, 0.0, None) * (eigvals > EIGEN_CLAMP))
    return (eigvecs * roots) @ eigvecs.conj().T


def raw_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity |Tr sqrt(sqrt(rho) sigma sqrt(rho))| without the clip to [0, 1].

    Round-off can push the value slightly above 1 for nearly equal states.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(f"cannot compare states of shapes {rho.shape} and {sigma.shape}")
    root = _psd_sqrt(rho)
    inner = hermitize(root @ sigma @ root)
    eigvals = linalg.eigvalsh(inner)
    return float(np.sum(np.sqrt(np.clip(eigvals, 0.0, None))))


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity clipped to [0, 1]."""
    return min(max(raw_fidelity(rho, sigma), 0.0), 1.0)


def infidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    return 1.0 - fidelity(rho, sigma)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOLERANCE) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) <= tol)


@dataclass(frozen=True)
class OpticalGateParams:
    """Four 2x2 polarization unitaries feeding the path/polarization gate."""

    v1: np.ndarray
    v2: np.ndarray
    vr: np.ndarray
    vl: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator) -> "OpticalGateParams":
        blocks = [rotation_unitary(*rng.uniform(0.0, 2.0 * np.pi, size=3)) for _ in range(4)]
        return cls(*blocks)


def build_optical_unitary(params: OpticalGateParams) -> np.ndarray:
    """4x4 unitary [[U_RR, U_RL], [U_LR, U_LL]] assembled from the four blocks."""
    for name in ("v1", "v2", "vr", "vl"):
        block = np.asarray(getattr(params, name))
        if block.shape != (2, 2) or not is_unitary(block):
            raise NonUnitaryBlock(f"optical gate block {name} is not a 2x2 unitary")
    v1, v2, vr, vl = params.v1, params.v2, params.vr, params.vl
    u_rr = 0.5 * v2 @ (vr + vl) @ v1
    u_ll = 0.5 * (vr + vl)
    u_rl = -0.5j * v2 @ (vr - vl)
    u_lr = 0.5j * (vr - vl) @ v1
    return np.block([[u_rr, u_rl], [u_lr, u_ll]])


def optical_basis_states(count: int, rng: np.random.Generator, n: int = 2) -> List[np.ndarray]:
    """High-purity (> 0.99) mixed basis states drawn as p-mixtures with p in [0.995, 0.9999]."""
    states = []
    for _ in range(count):
        psi = random_pure_state(n, rng)
        p = float(rng.uniform(OPTICAL_MIN_P, OPTICAL_MAX_P))
        states.append(mixed_state(psi, p))
    return states


def optical_state_family(
    basis_states: Sequence[np.ndarray],
    gates_per_state: int,
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """Each basis state followed by gates_per_state random optical-gate conjugations of it."""
    if gates_per_state < 0:
        raise InvalidParameter(f"gates_per_state must be >= 0, got {gates_per_state}")
    family: List[np.ndarray] = []
    for rho in basis_states:
        family.append(np.asarray(rho, dtype=complex))
        for _ in range(gates_per_state):
            u = build_optical_unitary(OpticalGateParams.random(rng))
            family.append(hermitize(u @ rho @ u.conj().T))
    logger.debug("optical family: %d basis states x (1 + %d gates)", len(basis_states), gates_per_state)
    return family
