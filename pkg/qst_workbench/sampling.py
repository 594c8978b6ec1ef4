from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DimensionMismatch, InvalidParameter
from .measure import MeasurementSuite, ProjectorSet


@dataclass(frozen=True, eq=False)
class FrequencyVector:
    """Per-set outcome frequencies concatenated in suite order."""

    values: np.ndarray
    kind: str
    n: int
    set_count: int

    @property
    def dim(self) -> int:
        return 2**self.n

    def blocks(self) -> np.ndarray:
        return self.values.reshape(self.set_count, self.dim)

    def __len__(self) -> int:
        return int(self.values.size)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:  # type: ignore[no-untyped-def]
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class ShotBudget:
    """S copies per measurement operator; a suite with k operators consumes N = S*k copies."""

    copies: int

    def __post_init__(self) -> None:
        if int(self.copies) != self.copies or self.copies < 1:
            raise InvalidParameter(f"copies per measurement must be a positive integer, got {self.copies}")

    def total(self, suite: MeasurementSuite) -> int:
        return self.copies * suite.operator_count


FrequencyLike = Union[FrequencyVector, np.ndarray]


def frequency_values(freq: FrequencyLike, suite: MeasurementSuite) -> np.ndarray:
    """Plain float array of freq, checked against the suite's operator count."""
    values = np.asarray(freq, dtype=float).ravel()
    if values.size != suite.operator_count:
        raise DimensionMismatch(
            f"{values.size} frequencies do not match {suite.operator_count} operators of {suite.name}"
        )
    return values


def _check_state(rho: np.ndarray, d: int) -> None:
    if rho.shape != (d, d):
        raise DimensionMismatch(f"state of shape {rho.shape} measured with {d}-dimensional projectors")


def born_probabilities(rho: np.ndarray, projector_set: ProjectorSet) -> np.ndarray:
    """p_i = <m_i|rho|m_i>, real and clipped to [0, 1]."""
    rho = np.asarray(rho, dtype=complex)
    _check_state(rho, projector_set.dim)
    vecs = projector_set.vectors
    probs = np.einsum("ij,jk,ik->i", vecs.conj(), rho, vecs).real
    return np.clip(probs, 0.0, 1.0)


def _wrap(values: np.ndarray, suite: MeasurementSuite) -> FrequencyVector:
    return FrequencyVector(values, suite.kind, suite.n, suite.set_count)


def exact_frequencies(rho: np.ndarray, suite: MeasurementSuite) -> FrequencyVector:
    values = np.concatenate([born_probabilities(rho, s) for s in suite.sets])
    return _wrap(values, suite)


def sample_frequencies(
    rho: np.ndarray,
    suite: MeasurementSuite,
    budget: ShotBudget,
    rng: np.random.Generator,
) -> FrequencyVector:
    """One multinomial draw of S*d trials per set; each block reports counts / (S*d)."""
    trials = budget.copies * suite.dim
    blocks = []
    for projector_set in suite.sets:
        probs = born_probabilities(rho, projector_set)
        probs = probs / probs.sum()
        counts = rng.multinomial(trials, probs)
        blocks.append(counts / trials)
    return _wrap(np.concatenate(blocks), suite)


def measure_state(
    rho: np.ndarray,
    suite: MeasurementSuite,
    budget: Optional[ShotBudget],
    rng: np.random.Generator,
) -> FrequencyVector:
    """Finite-shot frequencies when a budget is given, Born probabilities otherwise."""
    if budget is None:
        return exact_frequencies(rho, suite)
    return sample_frequencies(rho, suite, budget, rng)
