from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from .datasets import PURE, StateFamily
from .dnn import TrainConfig
from .errors import ConfigError, QstError
from .measure import CUBE, MUB, NoiseSpec
from .mle import MleConfig
from .paths import get_cache_dir, get_log_dir, get_results_dir
from .store import atomic_write_text

COPIES_SWEEP = "copies_sweep"
SETS_SWEEP = "sets_sweep"
NOISE_SWEEP = "noise_sweep"
PURITY_SWEEP = "purity_sweep"
OPTICAL_GENERALIZATION = "optical_generalization"
EXPERIMENT_KINDS = (COPIES_SWEEP, SETS_SWEEP, NOISE_SWEEP, PURITY_SWEEP, OPTICAL_GENERALIZATION)

SWEEP_PARAMS = {
    COPIES_SWEEP: "copies",
    SETS_SWEEP: "sets",
    NOISE_SWEEP: "noise_ratio",
    PURITY_SWEEP: "p",
    OPTICAL_GENERALIZATION: "noise_ratio",
}

ESTIMATORS = ("dnn", "mle", "lre")

DESK_TRAIN_SIZE = 1_000
DESK_TEST_SIZE = 200
FULL_TRAIN_SIZE = 98_800
FULL_TEST_SIZE = 1_000


def default_hidden_width(n: int, family_kind: str) -> int:
    """128 units for 2-qubit pure states, 256 for mixed families and 3 qubits."""
    return 128 if n == 2 and family_kind == PURE else 256


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    kind: str = COPIES_SWEEP
    qubits: int = 2
    suite: str = CUBE
    # 0 keeps the complete suite.
    sets: int = 0
    grid: Tuple[float, ...] = (10.0, 100.0, 1000.0)
    # Copies per measurement operator; 0 means exact Born probabilities.
    copies: int = 100
    estimators: Tuple[str, ...] = ESTIMATORS
    train_size: int = DESK_TRAIN_SIZE
    test_size: int = DESK_TEST_SIZE
    train_seed: int = 1
    test_seed: int = 2
    # "same" trains on the test regime's shots; "exact" on Born probabilities.
    train_shots: str = "same"
    # "same" trains under the test noise; "none" on noiseless data.
    train_noise: str = "same"
    sentinel: bool = True
    record_timing: bool = False
    workers: int = 1
    use_cache: bool = True
    # Optical generalization: "cube:path,mub:path" pre-trained models.
    models: str = ""
    optical_suites: Tuple[str, ...] = (CUBE, MUB)

    output_dir: Optional[Path] = None
    cache_dir: Optional[Path] = None
    log_dir: Optional[Path] = None

    train: TrainConfig = field(default_factory=TrainConfig)
    mle: MleConfig = field(default_factory=MleConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    family: StateFamily = field(default_factory=StateFamily)

    _PATH_FIELDS = ["output_dir", "cache_dir", "log_dir"]

    def _coerce_path_fields(self) -> None:
        for name in self._PATH_FIELDS:
            value = getattr(self, name, None)
            if value is None or isinstance(value, Path):
                continue
            setattr(self, name, Path(value) if str(value).strip() else None)

    def resolve_paths(self) -> "ExperimentConfig":
        self._coerce_path_fields()
        if self.output_dir is None:
            self.output_dir = get_results_dir()
        if self.cache_dir is None:
            self.cache_dir = get_cache_dir()
        if self.log_dir is None:
            self.log_dir = get_log_dir()
        return self

    @property
    def sweep_param(self) -> str:
        return SWEEP_PARAMS[self.kind]

    @property
    def experiment_dir(self) -> Path:
        self.resolve_paths()
        assert self.output_dir is not None
        return self.output_dir / self.name

    def apply_full_scale(self) -> "ExperimentConfig":
        self.train_size = FULL_TRAIN_SIZE
        self.test_size = FULL_TEST_SIZE
        return self

    def effective_train_config(self) -> TrainConfig:
        if self.train.hidden_width:
            return self.train
        return replace(self.train, hidden_width=default_hidden_width(self.qubits, self.family.kind))

    def model_paths(self) -> Dict[str, Path]:
        """Parse the `models` entry into {suite kind: path}."""
        paths: Dict[str, Path] = {}
        for item in filter(None, (part.strip() for part in self.models.split(","))):
            kind, sep, location = item.partition(":")
            if not sep or kind.strip() not in (CUBE, MUB) or not location.strip():
                raise ConfigError(f"[experiment] models: expected 'cube:path,mub:path', got {item!r}")
            paths[kind.strip()] = Path(location.strip())
        return paths

    def available_sets(self) -> int:
        """Number of measurement sets in the complete suite: 3**n for the cube, d + 1 for MUB."""
        return 3**self.qubits if self.suite == CUBE else 2**self.qubits + 1

    def validate(self) -> "ExperimentConfig":
        def fail(key: str, message: str) -> None:
            raise ConfigError(f"[experiment] {key}: {message}")

        if not self.name or any(ch in self.name for ch in "/\\"):
            fail("name", f"must be a plain directory name, got {self.name!r}")
        if self.kind not in EXPERIMENT_KINDS:
            fail("kind", f"must be one of {', '.join(EXPERIMENT_KINDS)}, got {self.kind!r}")
        if self.qubits not in (2, 3):
            fail("qubits", f"must be 2 or 3, got {self.qubits}")
        if self.suite not in (CUBE, MUB):
            fail("suite", f"must be cube or mub, got {self.suite!r}")
        if self.suite == MUB and self.qubits != 2:
            fail("suite", "mub suites exist only for 2 qubits")
        if not self.grid:
            fail("grid", "must list at least one value")
        if not self.estimators:
            fail("estimators", "must list at least one estimator")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            fail("estimators", f"unknown estimator(s) {', '.join(unknown)}; choose from {', '.join(ESTIMATORS)}")
        if self.train_size < 1 or self.test_size < 1:
            fail("train_size", "train_size and test_size must be >= 1")
        if self.copies < 0:
            fail("copies", f"must be >= 0, got {self.copies}")
        if self.sets < 0:
            fail("sets", f"must be >= 0, got {self.sets}")
        available = self.available_sets()
        if self.sets > available:
            fail("sets", f"{self.suite} on {self.qubits} qubits has {available} sets, got {self.sets}")
        if self.workers < 1:
            fail("workers", f"must be >= 1, got {self.workers}")
        if self.train_shots not in ("same", "exact"):
            fail("train_shots", f"must be same or exact, got {self.train_shots!r}")
        if self.train_noise not in ("same", "none"):
            fail("train_noise", f"must be same or none, got {self.train_noise!r}")
        if self.kind == COPIES_SWEEP and any(v < 1 or v != int(v) for v in self.grid):
            fail("grid", "copies must be positive integers")
        if self.kind == SETS_SWEEP and any(v < 1 or v != int(v) for v in self.grid):
            fail("grid", "set counts must be positive integers")
        if self.kind == SETS_SWEEP and any(v > available for v in self.grid):
            fail("grid", f"set counts must not exceed the {available} sets of {self.suite} on {self.qubits} qubits")
        if self.kind in (NOISE_SWEEP, OPTICAL_GENERALIZATION) and any(v < 0 for v in self.grid):
            fail("grid", "noise ratios must be >= 0")
        if self.kind == PURITY_SWEEP and any(not 0.0 < v < 1.0 for v in self.grid):
            fail("grid", "mixing ratios p must lie in (0, 1)")
        if self.kind == OPTICAL_GENERALIZATION:
            if self.qubits != 2:
                fail("qubits", "optical generalization uses 2-qubit states")
            bad = [s for s in self.optical_suites if s not in (CUBE, MUB)]
            if not self.optical_suites or bad:
                fail("optical_suites", "must list cube and/or mub")
            self.model_paths()
        return self


_SECTIONS = {
    "experiment": ExperimentConfig,
    "train": TrainConfig,
    "mle": MleConfig,
    "noise": NoiseSpec,
    "family": StateFamily,
}
_NESTED = {"train", "mle", "noise", "family"}
_TUPLE_TYPES: Dict[Tuple[str, str], type] = {
    ("experiment", "grid"): float,
    ("experiment", "estimators"): str,
    ("experiment", "optical_suites"): str,
    ("noise", "ratios"): float,
}


def _scalar_fields(cls: type) -> Dict[str, Any]:
    """Field name -> default for every non-nested field of a config dataclass."""
    defaults = {}
    instance = cls()
    for f in fields(cls):
        if f.name.startswith("_") or f.name in _NESTED:
            continue
        defaults[f.name] = getattr(instance, f.name)
    return defaults


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(section: str, key: str, raw: str, default: Any) -> Any:
    text = raw.strip()
    try:
        if (section, key) in _TUPLE_TYPES:
            item_type = _TUPLE_TYPES[(section, key)]
            return tuple(item_type(part.strip()) for part in text.split(",") if part.strip())
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(text)
            return configparser.ConfigParser.BOOLEAN_STATES[lowered]
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if default is None or isinstance(default, Path):
            return Path(text) if text else None
        return text
    except ValueError:
        expected = type(default).__name__ if default is not None else "path"
        raise ConfigError(f"[{section}] {key}: expected {expected}, got {raw!r}") from None


def _section_kwargs(parser: configparser.ConfigParser, section: str) -> Dict[str, Any]:
    cls = _SECTIONS[section]
    defaults = _scalar_fields(cls)
    kwargs: Dict[str, Any] = {}
    if not parser.has_section(section):
        return kwargs
    for key, raw in parser.items(section):
        if key not in defaults:
            raise ConfigError(f"[{section}] {key}: unknown key")
        kwargs[key] = _parse_value(section, key, raw, defaults[key])
    return kwargs


def _build(section: str, kwargs: Dict[str, Any]) -> Any:
    try:
        return _SECTIONS[section](**kwargs)
    except ConfigError:
        raise
    except (QstError, ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def config_from_string(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = [s for s in parser.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(f"[{unknown[0]}]: unknown section")
    nested = {name: _build(name, _section_kwargs(parser, name)) for name in _NESTED}
    cfg = _build("experiment", _section_kwargs(parser, "experiment"))
    for name, value in nested.items():
        setattr(cfg, name, value)
    cfg._coerce_path_fields()
    return cfg.validate()


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return config_from_string(path.read_text(encoding="utf-8"), str(path))


def render_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for section in ("experiment", "train", "mle", "noise", "family"):
        source = cfg if section == "experiment" else getattr(cfg, section)
        parser.add_section(section)
        for key in _scalar_fields(_SECTIONS[section]):
            parser.set(section, key, _format_value(getattr(source, key)))
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def render_default_config() -> str:
    return render_config(ExperimentConfig())


def save_config(cfg: ExperimentConfig, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, render_config(cfg))
