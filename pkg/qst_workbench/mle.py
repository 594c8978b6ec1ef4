"""Iterative maximum-likelihood reconstruction (R rho R with a diluted fallback)."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import linalg

from .errors import InvalidParameter, LikelihoodDecrease, NonFiniteLoss, ZeroProbability
from .measure import MeasurementSuite
from .qstate import hermitize, raw_fidelity
from .sampling import FrequencyLike, frequency_values

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-14
RESCUE_MIX = 1e-12
# Largest relative log-likelihood drop still treated as round-off.
LIKELIHOOD_SLACK = 1e-12
MAX_DILUTION_HALVINGS = 30


@dataclass
class MleConfig:
    stop_gap: float = 1e-8
    max_iters: int = 20_000
    diluted_step: float = 1.0
    fallback_step: float = 0.1

    def __post_init__(self) -> None:
        if self.stop_gap <= 0.0:
            raise InvalidParameter(f"stop_gap must be > 0, got {self.stop_gap}")
        if self.max_iters < 1:
            raise InvalidParameter(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.diluted_step <= 1.0:
            raise InvalidParameter(f"diluted_step must lie in (0, 1], got {self.diluted_step}")
        if not 0.0 < self.fallback_step <= 1.0:
            raise InvalidParameter(f"fallback_step must lie in (0, 1], got {self.fallback_step}")


class MleResult(NamedTuple):
    rho: np.ndarray
    iterations: int
    converged: bool
    log_likelihood: float


class _Likelihood:
    def __init__(self, vectors: np.ndarray, freqs: np.ndarray, set_count: int) -> None:
        mask = freqs > 0.0
        self.set_count = set_count
        self.vectors = vectors[mask]
        self.freqs = freqs[mask]

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("ij,jk,ik->i", self.vectors.conj(), rho, self.vectors).real

    def value(self, probs: np.ndarray) -> float:
        return float(np.dot(self.freqs, np.log(np.clip(probs, PROBABILITY_FLOOR, None))))

    def r_operator(self, probs: np.ndarray) -> np.ndarray:
        # Scaled so that R = I when the frequencies match a complete suite exactly.
        weights = self.freqs / (probs * self.set_count)
        return (self.vectors.T * weights) @ self.vectors.conj()


def step_distance_floor(before: np.ndarray, after: np.ndarray) -> float:
    """Lower bound ||after - before||_F^2 / 8 on the infidelity between two density matrices.

    Follows from 1 - F >= T^2 / 2 and T >= ||.||_F / 2 for the trace distance T.
    It stays positive whenever the iterate moves, unlike a fidelity clipped at 1.
    """
    step = float(np.linalg.norm(after - before))
    return step * step / 8.0


def optimality_gap(r: np.ndarray) -> float:
    """lambda_max(R) - 1; zero at a likelihood maximizer, where R <= I with Tr(R rho) = 1."""
    return float(linalg.eigvalsh(hermitize(r))[-1]) - 1.0


def _step(rho: np.ndarray, r: np.ndarray, epsilon: float) -> np.ndarray:
    if epsilon >= 1.0:
        op = r
    else:
        op = np.eye(rho.shape[0]) + epsilon * r
    new = op @ rho @ op.conj().T
    return hermitize(new / np.trace(new).real)


def _accepts(value: float, current: float) -> bool:
    return value >= current - LIKELIHOOD_SLACK * abs(current)


def _advance(
    model: _Likelihood, rho: np.ndarray, r: np.ndarray, current: float, cfg: MleConfig
) -> Optional[Tuple[np.ndarray, np.ndarray, float]]:
    epsilon = cfg.diluted_step
    candidate = _step(rho, r, epsilon)
    probs = model.probabilities(candidate)
    value = model.value(probs)
    if _accepts(value, current):
        return candidate, probs, value
    epsilon = min(cfg.fallback_step, epsilon)
    for _ in range(MAX_DILUTION_HALVINGS):
        candidate = _step(rho, r, epsilon)
        probs = model.probabilities(candidate)
        value = model.value(probs)
        if _accepts(value, current):
            return candidate, probs, value
        epsilon /= 2.0
    return None


def _check_likelihood(previous: float, value: float, iteration: int) -> None:
    if not np.isfinite(value):
        raise NonFiniteLoss(f"log-likelihood became {value} at iteration {iteration}")
    if not _accepts(value, previous):
        raise LikelihoodDecrease(f"log-likelihood fell from {previous!r} to {value!r} at iteration {iteration}")


def mle_estimate(
    freq: FrequencyLike,
    suite: MeasurementSuite,
    cfg: MleConfig | None = None,
) -> MleResult:
    """Maximize sum_i f_i log p_i(rho) starting from I/d.

    Converged means the infidelity between consecutive iterates is below
    cfg.stop_gap and lambda_max(R) - 1 is below it too, so the likelihood is
    certified to be within set_count * stop_gap of its maximum. An R rho R step
    that lowers the likelihood is retried with the diluted map
    (I + eps R) rho (I + eps R), halving eps until it does not.
    """
    cfg = cfg or MleConfig()
    values = frequency_values(freq, suite)
    model = _Likelihood(suite.vectors, values, suite.set_count)
    d = suite.dim
    identity = np.eye(d, dtype=complex) / d

    rho = identity.copy()
    probs = model.probabilities(rho)
    current = model.value(probs)

    for iteration in range(1, cfg.max_iters + 1):
        if np.any(probs < PROBABILITY_FLOOR):
            rho = hermitize((1.0 - RESCUE_MIX) * rho + RESCUE_MIX * identity)
            probs = model.probabilities(rho)
            if np.any(probs < PROBABILITY_FLOOR):
                raise ZeroProbability(f"observed outcome has probability {probs.min():.3e} at iteration {iteration}")
            current = model.value(probs)

        accepted = _advance(model, rho, model.r_operator(probs), current, cfg)
        if accepted is None:
            logger.debug("MLE: no diluted step keeps the likelihood at iteration %d", iteration)
            return MleResult(rho, iteration, False, current)
        candidate, candidate_probs, candidate_value = accepted
        _check_likelihood(current, candidate_value, iteration)

        previous = rho
        rho, probs, current = candidate, candidate_probs, max(candidate_value, current)
        if step_distance_floor(previous, rho) >= cfg.stop_gap or np.any(probs < PROBABILITY_FLOOR):
            continue
        if optimality_gap(model.r_operator(probs)) < cfg.stop_gap and 1.0 - raw_fidelity(previous, rho) < cfg.stop_gap:
            return MleResult(rho, iteration, True, current)

    logger.debug("MLE stopped at max_iters=%d without meeting stop_gap=%g", cfg.max_iters, cfg.stop_gap)
    return MleResult(rho, cfg.max_iters, False, current)
