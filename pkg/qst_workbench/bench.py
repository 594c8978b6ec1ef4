"""Experiment harness: sweeps over copies, measurement sets, noise and purity,
plus the optical-state generalization run.

Every sweep point evaluates all listed estimators on one shared test set whose
states depend only on test_seed, so points differ only in the swept parameter.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cache import DatasetCache
from .config import (
    COPIES_SWEEP,
    NOISE_SWEEP,
    OPTICAL_GENERALIZATION,
    PURITY_SWEEP,
    SETS_SWEEP,
    ExperimentConfig,
    render_config,
)
from .datasets import OPTICAL, PURITY_GRID, Dataset, StateFamily, generate_dataset
from .dnn import MLPModel, init_model, load_model, predict_state, save_model, train
from .errors import ConfigError, MissingModel, QstError, SentinelViolation, ShapeMismatch
from .lre import lre_estimate
from .measure import MeasurementSuite, NoiseSpec, build_suite
from .mle import MleConfig, mle_estimate
from .qstate import expected_purity, infidelity, purity
from .report import (
    ResultRow,
    emit_csv,
    emit_plotdata,
    print_results_table,
    write_html_report,
    write_results_workbook,
)
from .sampling import ShotBudget
from .store import atomic_write_text

logger = logging.getLogger(__name__)

LRE_SENTINEL = 1e-6
# R rho R approaches rank-deficient optima sublinearly, so the MLE bound is looser.
MLE_SENTINEL = 1e-4
PURITY_TOLERANCE = 1e-9


@dataclass
class SweepPoint:
    """Everything that changes from one sweep value to the next."""

    value: float
    suite: MeasurementSuite
    budget: Optional[ShotBudget]
    noise: Optional[NoiseSpec]
    family: StateFamily

    @property
    def is_exact_corner(self) -> bool:
        complete = self.suite.set_count == build_suite(self.suite.kind, self.suite.n).set_count
        noiseless = self.noise is None or self.noise.is_noiseless
        return complete and self.budget is None and noiseless


@dataclass
class EstimatorScore:
    infidelities: List[float] = field(default_factory=list)
    failures: int = 0
    not_converged: int = 0
    seconds: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.infidelities))

    @property
    def std_error(self) -> float:
        n = len(self.infidelities)
        return float(np.std(self.infidelities, ddof=1) / np.sqrt(n)) if n > 1 else 0.0


@dataclass
class ExperimentRun:
    rows: List[ResultRow]
    warnings: List[str]
    outputs: Dict[str, Path] = field(default_factory=dict)


def _budget(copies: int) -> Optional[ShotBudget]:
    return ShotBudget(int(copies)) if copies else None


def _fixed_noise(cfg: ExperimentConfig) -> Optional[NoiseSpec]:
    return None if cfg.noise.is_noiseless else cfg.noise


def base_family(cfg: ExperimentConfig) -> StateFamily:
    if cfg.family.kind == PURITY_GRID:
        return cfg.family.at_ratio(cfg.family.p)
    return cfg.family


def sweep_points(cfg: ExperimentConfig) -> List[SweepPoint]:
    points = []
    for value in cfg.grid:
        suite = build_suite(cfg.suite, cfg.qubits, cfg.sets)
        budget = _budget(cfg.copies)
        noise = _fixed_noise(cfg)
        family = base_family(cfg)
        if cfg.kind == COPIES_SWEEP:
            budget = ShotBudget(int(value))
        elif cfg.kind == SETS_SWEEP:
            suite = build_suite(cfg.suite, cfg.qubits, int(value))
        elif cfg.kind == NOISE_SWEEP:
            noise = NoiseSpec.from_ratio(cfg.noise.distribution, value)
        elif cfg.kind == PURITY_SWEEP:
            family = cfg.family.at_ratio(value)
        points.append(SweepPoint(float(value), suite, budget, noise, family))
    return points


def score_estimator(
    name: str,
    estimate: Callable[[np.ndarray], Tuple[np.ndarray, bool]],
    test_set: Dataset,
    workers: int,
) -> EstimatorScore:
    assert test_set.states is not None

    def one(index: int) -> Tuple[Optional[float], bool, Optional[str]]:
        try:
            rho, converged = estimate(test_set.features[index])
            return infidelity(test_set.states[index], rho), converged, None
        except (QstError, np.linalg.LinAlgError) as exc:
            return None, True, f"{type(exc).__name__}: {exc}"

    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(len(test_set))))
    else:
        outcomes = [one(i) for i in range(len(test_set))]
    score = EstimatorScore(seconds=time.perf_counter() - start)
    for index, (value, converged, error) in enumerate(outcomes):
        if value is None:
            score.failures += 1
            logger.warning("%s failed on test sample %d: %s", name, index, error)
            continue
        score.infidelities.append(value)
        if not converged:
            score.not_converged += 1
    if not score.infidelities:
        raise QstError(f"{name}: every one of {len(test_set)} test samples failed")
    return score


def estimator_functions(
    suite: MeasurementSuite,
    mle_cfg: MleConfig,
    model: Optional[MLPModel],
) -> Dict[str, Callable[[np.ndarray], Tuple[np.ndarray, bool]]]:
    """Name -> features -> (estimate, converged).  LRE and MLE always use the ideal suite."""

    def run_mle(features: np.ndarray) -> Tuple[np.ndarray, bool]:
        result = mle_estimate(features, suite, mle_cfg)
        return result.rho, result.converged

    functions: Dict[str, Callable[[np.ndarray], Tuple[np.ndarray, bool]]] = {
        "lre": lambda features: (lre_estimate(features, suite), True),
        "mle": run_mle,
    }
    if model is not None:
        functions["dnn"] = lambda features: (predict_state(model, features), True)
    return functions


def _train_set(cfg: ExperimentConfig, point: SweepPoint, cache: Optional[DatasetCache]) -> Dataset:
    budget = point.budget if cfg.train_shots == "same" else None
    noise = point.noise if cfg.train_noise == "same" else None

    def build() -> Dataset:
        return generate_dataset(point.family, point.suite, budget, cfg.train_size, cfg.train_seed, noise, cfg.workers)

    if cache is None:
        return build()
    spec = {
        "role": "train",
        "suite": point.suite.fingerprint(),
        "noise": noise.describe() if noise is not None else "none",
        "copies": budget.copies if budget is not None else "exact",
        "seed": cfg.train_seed,
        "count": cfg.train_size,
        **point.family.describe(),
    }
    return cache.get_or_create(spec, build)


def _train_model(cfg: ExperimentConfig, point: SweepPoint, cache: Optional[DatasetCache]) -> MLPModel:
    dataset = _train_set(cfg, point, cache)
    train_cfg = cfg.effective_train_config()
    model = init_model(dataset.feature_dim, train_cfg.hidden_width, dataset.target_dim, train_cfg.seed)
    model.manifest.update(dataset.manifest)
    model, history = train(model, dataset, train_cfg)
    model.manifest["final_loss"] = repr(history[-1])
    return model


def _check_sentinel(cfg: ExperimentConfig, point: SweepPoint, scores: Dict[str, EstimatorScore]) -> None:
    if not cfg.sentinel or not point.is_exact_corner:
        return
    limits = {"lre": LRE_SENTINEL, "mle": MLE_SENTINEL}
    for name, limit in limits.items():
        score = scores.get(name)
        if score is not None and score.mean >= limit:
            message = f"{name} mean infidelity {score.mean:.3e} >= {limit:g} on complete, exact, noiseless data at {cfg.sweep_param}={point.value:g}"
            logger.error(message)
            raise SentinelViolation(message)


def _check_purity(cfg: ExperimentConfig, point: SweepPoint, test_set: Dataset) -> None:
    """The mixed population at ratio p must have Tr(rho^2) = expected_purity(p, d)."""
    if not cfg.sentinel or cfg.kind != PURITY_SWEEP or test_set.states is None:
        return
    measured = float(np.mean([purity(rho) for rho in test_set.states]))
    expected = expected_purity(point.value, point.suite.dim)
    if abs(measured - expected) > PURITY_TOLERANCE:
        message = f"population purity {measured:.12f} differs from {expected:.12f} at p={point.value:g}"
        logger.error(message)
        raise SentinelViolation(message)


def _rows_for(
    cfg: ExperimentConfig,
    point: SweepPoint,
    scores: Dict[str, EstimatorScore],
    test_set: Dataset,
    label: Callable[[str], str] = lambda name: name,
) -> List[ResultRow]:
    assert test_set.states is not None
    mean_purity = float(np.mean([purity(rho) for rho in test_set.states]))
    rows = []
    for name, score in scores.items():
        rows.append(
            ResultRow(
                experiment=cfg.name,
                estimator=label(name),
                sweep_param=cfg.sweep_param,
                sweep_value=point.value,
                mean_infidelity=min(max(score.mean, 0.0), 1.0),
                std_error=score.std_error,
                n_samples=len(score.infidelities),
                seconds=score.seconds if cfg.record_timing else 0.0,
                details={
                    "seconds_wall": round(score.seconds, 4),
                    "purity": round(mean_purity, 6),
                    "failures": score.failures,
                    "mle_not_converged": score.not_converged if name == "mle" else "",
                },
            )
        )
    return rows


def _warnings_for(point_label: str, scores: Dict[str, EstimatorScore]) -> List[str]:
    notes = []
    for name, score in scores.items():
        if score.failures:
            notes.append(f"{point_label}: {name} excluded {score.failures} failing sample(s).")
        if score.not_converged:
            notes.append(f"{point_label}: mle hit max_iters on {score.not_converged} sample(s).")
    return notes


def _cache_for(cfg: ExperimentConfig) -> Optional[DatasetCache]:
    if not cfg.use_cache:
        return None
    cfg.resolve_paths()
    assert cfg.cache_dir is not None
    return DatasetCache(cfg.cache_dir)


def _run_sweep(cfg: ExperimentConfig) -> Tuple[List[ResultRow], List[str], Dict[str, MLPModel]]:
    cache = _cache_for(cfg)
    rows: List[ResultRow] = []
    warnings: List[str] = []
    models: Dict[str, MLPModel] = {}
    for point in sweep_points(cfg):
        point_label = f"{cfg.sweep_param}={point.value:g}"
        logger.info("%s: %s on %s", cfg.name, point_label, point.suite.name)
        test_set = generate_dataset(point.family, point.suite, point.budget, cfg.test_size, cfg.test_seed, point.noise, cfg.workers)
        model = None
        if "dnn" in cfg.estimators:
            model = _train_model(cfg, point, cache)
            models[f"{cfg.sweep_param}_{point.value:g}"] = model
        functions = estimator_functions(point.suite, cfg.mle, model)
        scores = {name: score_estimator(name, functions[name], test_set, cfg.workers) for name in cfg.estimators}
        _check_sentinel(cfg, point, scores)
        _check_purity(cfg, point, test_set)
        rows.extend(_rows_for(cfg, point, scores, test_set))
        warnings.extend(_warnings_for(point_label, scores))
    return rows, warnings, models


def sweep_purity(cfg: ExperimentConfig) -> List[ResultRow]:
    """Rows over the p grid; details["purity"] holds Tr(rho^2) averaged over each population.

    Each population is checked against expected_purity(p, d) before its rows are kept.
    """
    if cfg.kind != PURITY_SWEEP:
        raise ConfigError(f"[experiment] kind: sweep_purity needs purity_sweep, got {cfg.kind!r}")
    cfg.validate()
    rows, _, _ = _run_sweep(cfg)
    return rows


def _load_optical_model(cfg: ExperimentConfig, suite: MeasurementSuite) -> MLPModel:
    path = cfg.model_paths().get(suite.kind)
    if path is None or not path.exists():
        raise MissingModel(f"no trained {suite.kind} model for optical generalization (models entry: {cfg.models!r})")
    model = load_model(path)
    if model.input_dim != suite.operator_count or model.output_dim != suite.dim**2:
        raise ShapeMismatch(f"{path} maps {model.input_dim}->{model.output_dim}, {suite.name} needs {suite.operator_count}->{suite.dim ** 2}")
    return model


def run_optical_generalization(cfg: ExperimentConfig) -> List[ResultRow]:
    rows, _ = _run_optical(cfg)
    return rows


def _run_optical(cfg: ExperimentConfig) -> Tuple[List[ResultRow], List[str]]:
    """Evaluate pre-trained models (never retrained) on the optical family at each noise ratio."""
    family = StateFamily(OPTICAL, optical_basis=cfg.family.optical_basis, optical_gates=cfg.family.optical_gates)
    budget = _budget(cfg.copies)
    rows: List[ResultRow] = []
    warnings: List[str] = []
    for kind in cfg.optical_suites:
        suite = build_suite(kind, 2)
        model = _load_optical_model(cfg, suite) if "dnn" in cfg.estimators else None
        functions = estimator_functions(suite, cfg.mle, model)
        for value in cfg.grid:
            point = SweepPoint(float(value), suite, budget, NoiseSpec.from_ratio(cfg.noise.distribution, value), family)
            test_set = generate_dataset(family, suite, budget, family.optical_count, cfg.test_seed, point.noise, cfg.workers)
            scores = {name: score_estimator(name, functions[name], test_set, cfg.workers) for name in cfg.estimators}
            _check_sentinel(cfg, point, scores)
            rows.extend(_rows_for(cfg, point, scores, test_set, label=lambda name: f"{name}@{suite.name}"))
            warnings.extend(_warnings_for(f"{suite.name} {cfg.sweep_param}={value:g}", scores))
    return rows, warnings


def experiment_manifest(cfg: ExperimentConfig) -> Dict[str, str]:
    return {
        "name": cfg.name,
        "kind": cfg.kind,
        "qubits": str(cfg.qubits),
        "suite": cfg.suite,
        "sets": str(cfg.sets or "complete"),
        "grid": ", ".join(f"{v:g}" for v in cfg.grid),
        "copies": str(cfg.copies or "exact"),
        "noise": cfg.noise.describe(),
        "family": ", ".join(f"{k}={v}" for k, v in cfg.family.describe().items()),
        "estimators": ", ".join(cfg.estimators),
        "train_size": str(cfg.train_size),
        "test_size": str(cfg.test_size),
        "train_seed": str(cfg.train_seed),
        "test_seed": str(cfg.test_seed),
        "train_shots": cfg.train_shots,
        "train_noise": cfg.train_noise,
        "hidden_width": str(cfg.effective_train_config().hidden_width),
    }


def write_artifacts(
    cfg: ExperimentConfig,
    rows: Sequence[ResultRow],
    warnings: Sequence[str],
    models: Optional[Dict[str, MLPModel]] = None,
) -> Dict[str, Path]:
    out_dir = cfg.experiment_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = experiment_manifest(cfg)
    outputs = {
        "csv": emit_csv(rows, out_dir / "results.csv"),
        "plotdata": emit_plotdata(rows, out_dir / "results.dat"),
        "workbook": write_results_workbook(rows, out_dir / "results.xlsx", manifest),
        "report": write_html_report(rows, out_dir / "report.html", manifest, warnings),
        "config": atomic_write_text(out_dir / "config.ini", render_config(cfg)),
    }
    for label, model in (models or {}).items():
        outputs[f"model:{label}"] = save_model(model, out_dir / "models" / f"{label}.bin")
    return outputs


def run_experiment(cfg: ExperimentConfig, console=None) -> ExperimentRun:
    """Run the configured experiment and write its artifacts under output_dir/<name>/."""
    cfg.validate()
    cfg.resolve_paths()
    started = time.perf_counter()
    models: Dict[str, MLPModel] = {}
    if cfg.kind == OPTICAL_GENERALIZATION:
        rows, warnings = _run_optical(cfg)
    else:
        rows, warnings, models = _run_sweep(cfg)
    outputs = write_artifacts(cfg, rows, warnings, models)
    logger.info("%s finished in %.1fs: %d rows", cfg.name, time.perf_counter() - started, len(rows))
    if console is not None:
        print_results_table(rows, console)
    return ExperimentRun(rows, warnings, outputs)

