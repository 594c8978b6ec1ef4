"""Training/test sets: random states, their measurement frequencies and alpha targets."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FormatVersionMismatch, InvalidParameter, ShapeMismatch, UnsupportedQubitCount
from .measure import MeasurementSuite, NoiseSpec, apply_noise, build_suite, sample_noise_angles
from .qstate import (
    DEFAULT_EPSILON,
    density_to_alpha,
    mixed_state,
    optical_basis_states,
    optical_state_family,
    perturb_pure,
    pure_density,
    qubits_for_dimension,
    random_pure_state,
)
from .sampling import ShotBudget, measure_state
from .store import BinaryReader, BinaryWriter, atomic_write_bytes

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"QSTDATA1"

PURE = "pure"
MIXED = "mixed"
PURITY_GRID = "purity_grid"
OPTICAL = "optical"
FAMILY_KINDS = (PURE, MIXED, PURITY_GRID, OPTICAL)


@dataclass
class StateFamily:
    """Where test and training states come from.

    pure: Haar-random |psi>, targets built from the epsilon-perturbed state.
    mixed: p|psi><psi| + (1-p) I/d at a fixed p.
    purity_grid: like mixed, with p taken from the sweep grid one point at a time.
    optical: optical_basis high-purity states, each followed by optical_gates
    random optical-gate conjugations.
    """

    kind: str = PURE
    p: float = 0.99
    epsilon: float = DEFAULT_EPSILON
    optical_basis: int = 5
    optical_gates: int = 20

    def __post_init__(self) -> None:
        if self.kind not in FAMILY_KINDS:
            raise InvalidParameter(f"state family must be one of {FAMILY_KINDS}, got {self.kind!r}")
        if self.kind in (MIXED, PURITY_GRID) and not 0.0 < self.p < 1.0:
            raise InvalidParameter(f"mixing ratio p must lie in (0, 1), got {self.p}")
        if self.optical_basis < 1 or self.optical_gates < 0:
            raise InvalidParameter("optical family needs optical_basis >= 1 and optical_gates >= 0")

    def at_ratio(self, p: float) -> "StateFamily":
        """The mixed family at one purity-grid point."""
        return StateFamily(MIXED, p, self.epsilon)

    @property
    def optical_count(self) -> int:
        return self.optical_basis * (1 + self.optical_gates)

    def describe(self) -> Dict[str, str]:
        if self.kind == PURE:
            return {"family": PURE, "epsilon": repr(self.epsilon)}
        if self.kind == OPTICAL:
            return {"family": OPTICAL, "optical_basis": str(self.optical_basis), "optical_gates": str(self.optical_gates)}
        return {"family": MIXED, "p": repr(self.p)}


@dataclass
class Dataset:
    """Rows of (features, alpha target, true state) sharing one manifest."""

    manifest: Dict[str, str]
    features: np.ndarray
    targets: np.ndarray
    states: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.targets.ndim != 2 or len(self.features) != len(self.targets):
            raise ShapeMismatch(f"features {self.features.shape} and targets {self.targets.shape} do not pair up")
        if self.states is not None and len(self.states) != len(self.features):
            raise ShapeMismatch(f"{len(self.states)} states for {len(self.features)} rows")

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def target_dim(self) -> int:
        return int(self.targets.shape[1])


def _draw_state(family: StateFamily, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(true state, state used for the alpha target)."""
    psi = random_pure_state(n, rng)
    if family.kind == PURE:
        return pure_density(psi), perturb_pure(psi, family.epsilon)
    rho = mixed_state(psi, family.p)
    return rho, rho


def _family_states(
    family: StateFamily,
    n: int,
    streams: Sequence[np.random.SeedSequence],
    root: np.random.SeedSequence,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    if family.kind == OPTICAL:
        rng = np.random.default_rng(root.spawn(1)[0])
        basis = optical_basis_states(family.optical_basis, rng, n)
        states = optical_state_family(basis, family.optical_gates, rng)
        return [(rho, rho) for rho in states]
    if family.kind == PURITY_GRID:
        raise InvalidParameter("purity_grid families are generated per grid point via StateFamily.at_ratio")
    return [_draw_state(family, n, np.random.default_rng(stream)) for stream in streams]


def collect_features(
    rho: np.ndarray,
    suite: MeasurementSuite,
    budget: Optional[ShotBudget],
    stream: np.random.SeedSequence,
    noise: Optional[NoiseSpec] = None,
) -> np.ndarray:
    """Frequencies of one state; with noise the suite is rotated by a fresh U_e first.

    Noise angles and shot outcomes use separate child streams, so a zero noise ratio
    reproduces the noiseless frequencies exactly.
    """
    noise_seq, shots_seq = stream.spawn(2)
    measured = suite
    if noise is not None:
        angles = sample_noise_angles(noise, suite.n, np.random.default_rng(noise_seq))
        measured = apply_noise(suite, angles, noise)
    return np.asarray(measure_state(rho, measured, budget, np.random.default_rng(shots_seq)))


def generate_dataset(
    family: StateFamily,
    suite: MeasurementSuite,
    budget: Optional[ShotBudget],
    count: int,
    seed: int,
    noise: Optional[NoiseSpec] = None,
    workers: int = 1,
) -> Dataset:
    """count states from family measured with suite (Born probabilities when budget is None).

    Each sample gets its own SeedSequence child, so the result does not depend on
    workers.  Optical families ignore count and yield optical_basis * (1 + optical_gates).
    """
    if family.kind == OPTICAL:
        count = family.optical_count
    if count < 1:
        raise InvalidParameter(f"dataset count must be >= 1, got {count}")
    root = np.random.SeedSequence(seed)
    state_root, measure_root = root.spawn(2)
    state_streams = state_root.spawn(count) if family.kind != OPTICAL else []
    measure_streams = measure_root.spawn(count)
    pairs = _family_states(family, suite.n, state_streams, state_root)

    def build(index: int) -> Tuple[np.ndarray, np.ndarray]:
        true_rho, target_rho = pairs[index]
        features = collect_features(true_rho, suite, budget, measure_streams[index], noise)
        return features, density_to_alpha(target_rho)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(build, range(count)))
    else:
        rows = [build(i) for i in range(count)]

    manifest = dict(suite.descriptor())
    manifest.update(family.describe())
    manifest.update(
        {
            "noise": noise.describe() if noise is not None else "none",
            "copies": str(budget.copies) if budget is not None else "exact",
            "seed": str(seed),
            "count": str(count),
        }
    )
    logger.info("generated %d %s states on %s (copies=%s)", count, family.kind, suite.name, manifest["copies"])
    return Dataset(
        manifest,
        np.array([r[0] for r in rows]),
        np.array([r[1] for r in rows]),
        np.array([p[0] for p in pairs]),
    )


def ideal_suite(dataset: Dataset) -> MeasurementSuite:
    """The noiseless suite a dataset was measured with, rebuilt from its manifest."""
    try:
        manifest = dataset.manifest
        return build_suite(manifest["suite_kind"], int(manifest["qubits"]), int(manifest["set_count"]))
    except KeyError as exc:
        raise InvalidParameter(f"dataset manifest lacks {exc.args[0]!r}") from None


def dataset_to_bytes(dataset: Dataset) -> bytes:
    writer = BinaryWriter(DATASET_MAGIC)
    writer.text(json.dumps(dataset.manifest, sort_keys=True))
    writer.u64(len(dataset))
    writer.u64(dataset.feature_dim)
    writer.u64(dataset.target_dim)
    has_states = dataset.states is not None
    writer.u64(1 if has_states else 0)
    parts = [dataset.features, dataset.targets]
    if has_states:
        flat = dataset.states.reshape(len(dataset), -1)
        parts.append(np.stack([flat.real, flat.imag], axis=-1).reshape(len(dataset), -1))
    writer.f64_array(np.hstack(parts))
    return writer.payload()


def _read_dataset(reader: BinaryReader) -> Dataset:
    manifest = reader.manifest()
    rows, feature_dim, target_dim, has_states = (reader.u64() for _ in range(4))
    state_width = 2 * target_dim if has_states else 0
    width = feature_dim + target_dim + state_width
    table = reader.f64_array(rows * width).reshape(rows, width)
    states = None
    if has_states:
        d = int(round(np.sqrt(target_dim)))
        try:
            if d * d != target_dim:
                raise UnsupportedQubitCount(f"target width {target_dim} is not a square")
            qubits_for_dimension(d)
        except UnsupportedQubitCount as exc:
            raise FormatVersionMismatch(f"{reader.source}: {exc}") from None
        raw = table[:, feature_dim + target_dim :].reshape(rows, d * d, 2)
        states = (raw[..., 0] + 1j * raw[..., 1]).reshape(rows, d, d)
    reader.expect_end()
    return Dataset(
        manifest,
        table[:, :feature_dim].copy(),
        table[:, feature_dim : feature_dim + target_dim].copy(),
        states,
    )


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    target = atomic_write_bytes(path, dataset_to_bytes(dataset))
    logger.info("wrote %d-row dataset to %s", len(dataset), target)
    return target


def load_dataset(path: Union[str, Path]) -> Dataset:
    return _read_dataset(BinaryReader.from_path(path, DATASET_MAGIC))
