"""Linear regression estimation followed by projection onto density matrices."""
from __future__ import annotations

import threading
from typing import Dict

import numpy as np
from scipy import linalg

from .errors import DegenerateDesign, NotHermitian, ShapeMismatch
from .measure import MeasurementSuite
from .qstate import hermitize
from .sampling import FrequencyLike, frequency_values

TRACE_ROW_WEIGHT = 1e3
SINGULAR_CUTOFF = 1e-10
HERMITIAN_TOLERANCE = 1e-8


def hermitian_basis_coefficients(vectors: np.ndarray) -> np.ndarray:
    """Rows <m|B_c|m> for the real Hermitian basis: E_kk, then per j<k the pair
    (E_jk + E_kj, i(E_jk - E_kj)).  Shape (len(vectors), d*d)."""
    d = vectors.shape[1]
    rows, cols = np.triu_indices(d, 1)
    diag = np.abs(vectors) ** 2
    cross = vectors[:, rows].conj() * vectors[:, cols]
    pairs = np.empty((vectors.shape[0], rows.size, 2))
    pairs[:, :, 0] = 2.0 * cross.real
    pairs[:, :, 1] = -2.0 * cross.imag
    return np.concatenate([diag, pairs.reshape(vectors.shape[0], -1)], axis=1)


def coefficients_to_matrix(x: np.ndarray, d: int) -> np.ndarray:
    rows, cols = np.triu_indices(d, 1)
    pairs = x[d:].reshape(-1, 2)
    h = np.zeros((d, d), dtype=complex)
    h[np.diag_indices(d)] = x[:d]
    h[rows, cols] = pairs[:, 0] + 1j * pairs[:, 1]
    h[cols, rows] = pairs[:, 0] - 1j * pairs[:, 1]
    return h


class DesignMatrix:
    """Least-squares map from a suite's frequencies to Hermitian coefficients.

    The data rows are followed by one trace row weighted by TRACE_ROW_WEIGHT; the
    pseudoinverse uses a relative singular-value cutoff of SINGULAR_CUTOFF.
    """

    def __init__(self, suite: MeasurementSuite) -> None:
        self.dim = suite.dim
        self.rows = hermitian_basis_coefficients(suite.vectors)
        trace_row = np.zeros(self.dim * self.dim)
        trace_row[: self.dim] = TRACE_ROW_WEIGHT
        self.weighted = np.vstack([self.rows, trace_row])
        self.rank = int(np.linalg.matrix_rank(self.weighted, tol=None))
        if self.rank < 2:
            raise DegenerateDesign(f"design matrix for {suite.name} has rank {self.rank}")
        self.pseudo_inverse = linalg.pinv(self.weighted, rtol=SINGULAR_CUTOFF)

    def solve(self, values: np.ndarray) -> np.ndarray:
        rhs = np.append(values, TRACE_ROW_WEIGHT)
        return coefficients_to_matrix(self.pseudo_inverse @ rhs, self.dim)


_DESIGNS: Dict[str, DesignMatrix] = {}
_DESIGNS_LOCK = threading.Lock()


def design_matrix(suite: MeasurementSuite) -> DesignMatrix:
    key = suite.fingerprint()
    with _DESIGNS_LOCK:
        design = _DESIGNS.get(key)
        if design is None:
            design = DesignMatrix(suite)
            _DESIGNS[key] = design
    return design


def project_to_physical(h: np.ndarray) -> np.ndarray:
    """Frobenius-nearest density matrix to a Hermitian matrix.

    The eigenvalues are water-filled onto the probability simplex: the most
    negative ones are zeroed and their mass is spread evenly over the rest until
    all remaining eigenvalues are nonnegative.  Eigenvectors are kept.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {h.shape}")
    if np.max(np.abs(h - h.conj().T)) > HERMITIAN_TOLERANCE:
        raise NotHermitian("cannot project a non-Hermitian matrix onto density matrices")
    h = hermitize(h)
    eigvals, eigvecs = linalg.eigh(h)
    if eigvals[0] >= 0.0 and abs(eigvals.sum() - 1.0) < 1e-12:
        return h
    projected = simplex_projection(eigvals)
    return hermitize((eigvecs * projected) @ eigvecs.conj().T)


def simplex_projection(values: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto {x >= 0, sum(x) = 1}."""
    values = np.asarray(values, dtype=float)
    ordered = np.sort(values)[::-1]
    shifted = np.cumsum(ordered) - 1.0
    counts = np.arange(1, values.size + 1)
    active = np.nonzero(ordered - shifted / counts > 0)[0][-1]
    level = shifted[active] / (active + 1)
    return np.clip(values - level, 0.0, None)


def lre_estimate(freq: FrequencyLike, suite: MeasurementSuite) -> np.ndarray:
    values = frequency_values(freq, suite)
    h = design_matrix(suite).solve(values)
    return project_to_physical(h)
