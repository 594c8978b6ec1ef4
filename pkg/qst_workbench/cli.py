"""Command-line entry point.

Examples:
  python -m qst_workbench config init --out experiment.ini
  python -m qst_workbench sweep --config experiment.ini
  python -m qst_workbench sweep --kind sets_sweep --grid 1,3,5,7,9 --copies 0 --estimators lre
  python -m qst_workbench generate --role train --out train.qds
  python -m qst_workbench train --dataset train.qds --out model.bin
  python -m qst_workbench eval --dataset test.qds --estimator dnn --model model.bin
  python -m qst_workbench optical --models cube:cube.bin,mub:mub.bin --grid 0,0.05,0.1
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from rich.console import Console
from rich.table import Table

from .bench import base_family, estimator_functions, run_experiment, score_estimator
from .config import (
    EXPERIMENT_KINDS,
    OPTICAL_GENERALIZATION,
    ExperimentConfig,
    load_config,
    render_default_config,
)
from .datasets import FAMILY_KINDS, generate_dataset, ideal_suite, load_dataset, save_dataset
from .dnn import init_model, load_model, save_model, train
from .errors import ConfigError, MissingModel, QstError
from .first_run import ensure_workspace
from .logs import configure_logging
from .measure import NOISE_DISTRIBUTIONS, NoiseSpec, build_suite
from .sampling import ShotBudget
from .store import atomic_write_text

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_FAILURE = 1


def _floats(text: str) -> tuple:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _names(text: str) -> tuple:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _experiment_flags() -> argparse.ArgumentParser:
    """Flags mirroring ExperimentConfig fields; each overrides the config file value."""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("experiment overrides")
    group.add_argument("--config", type=Path, default=None, help="INI experiment file (default: built-in defaults)")
    group.add_argument("--name", default=None)
    group.add_argument("--kind", choices=EXPERIMENT_KINDS, default=None)
    group.add_argument("--qubits", type=int, choices=(2, 3), default=None)
    group.add_argument("--suite", choices=("cube", "mub"), default=None)
    group.add_argument("--sets", type=int, default=None, help="Truncate the suite to its first K sets (0 = complete)")
    group.add_argument("--grid", type=_floats, default=None, help="Comma-separated sweep values")
    group.add_argument("--copies", type=int, default=None, help="Copies per operator; 0 = exact frequencies")
    group.add_argument("--estimators", type=_names, default=None, help="Comma-separated subset of dnn,mle,lre")
    group.add_argument("--family", choices=FAMILY_KINDS, default=None)
    group.add_argument("--p", type=float, default=None, help="Mixing ratio for the mixed family")
    group.add_argument("--noise-dist", choices=NOISE_DISTRIBUTIONS, default=None)
    group.add_argument("--noise-ratio", type=float, default=None, help="Sets xi1 = xi2 = xi3")
    group.add_argument("--train-size", type=int, default=None)
    group.add_argument("--test-size", type=int, default=None)
    group.add_argument("--train-seed", type=int, default=None)
    group.add_argument("--test-seed", type=int, default=None)
    group.add_argument("--epochs", type=int, default=None)
    group.add_argument("--learning-rate", type=float, default=None)
    group.add_argument("--batch-size", type=int, default=None)
    group.add_argument("--hidden-width", type=int, default=None)
    group.add_argument("--workers", type=int, default=None)
    group.add_argument("--models", default=None, help="Pre-trained models, e.g. cube:cube.bin,mub:mub.bin")
    group.add_argument("--output-dir", type=Path, default=None)
    group.add_argument("--cache-dir", type=Path, default=None)
    group.add_argument("--no-cache", action="store_true", help="Regenerate training sets instead of reusing cached ones")
    group.add_argument("--no-sentinel", action="store_true", help="Do not fail on an exact-recovery violation")
    group.add_argument("--paper-scale", "--full-scale", dest="full_scale", action="store_true", help="98,800 training / 1,000 test states")
    group.add_argument("-v", "--verbose", action="store_true", help="Debug logging (per-epoch losses)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qst_workbench",
        description="Quantum state tomography workbench: DNN, MLE and LRE reconstruction benchmarks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Examples:", 1)[1] if __doc__ else None,
    )
    flags = _experiment_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[flags], help="Generate a dataset file")
    gen.add_argument("--role", choices=("train", "test"), default="train")
    gen.add_argument("--out", type=Path, default=None)

    tr = sub.add_parser("train", parents=[flags], help="Train the DNN estimator")
    tr.add_argument("--dataset", type=Path, default=None, help="Dataset file (default: generate from the config)")
    tr.add_argument("--out", type=Path, default=None)

    ev = sub.add_parser("eval", parents=[flags], help="Score one estimator on a dataset")
    ev.add_argument("--dataset", type=Path, required=True)
    ev.add_argument("--estimator", choices=("dnn", "mle", "lre"), required=True)
    ev.add_argument("--model", type=Path, default=None)

    sub.add_parser("sweep", parents=[flags], help="Run the configured sweep experiment")
    sub.add_parser("optical", parents=[flags], help="Run the optical-state generalization experiment")

    cfg_cmd = sub.add_parser("config", help="Configuration helpers")
    cfg_sub = cfg_cmd.add_subparsers(dest="config_command", required=True)
    init = cfg_sub.add_parser("init", help="Print (or write) the default config with every field")
    init.add_argument("--out", type=Path, default=None)
    return parser


_SIMPLE_OVERRIDES = (
    "name",
    "kind",
    "qubits",
    "suite",
    "sets",
    "grid",
    "copies",
    "estimators",
    "train_size",
    "test_size",
    "train_seed",
    "test_seed",
    "workers",
    "models",
    "output_dir",
    "cache_dir",
)
_TRAIN_OVERRIDES = ("epochs", "learning_rate", "batch_size", "hidden_width")


def config_from_args(args: argparse.Namespace, kind: Optional[str] = None) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if kind is not None:
        cfg.kind = kind
    for name in _SIMPLE_OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    train_updates = {name: getattr(args, name) for name in _TRAIN_OVERRIDES if getattr(args, name, None) is not None}
    try:
        if train_updates:
            cfg.train = replace(cfg.train, **train_updates)
        if args.family is not None or args.p is not None:
            cfg.family = replace(cfg.family, kind=args.family or cfg.family.kind, p=cfg.family.p if args.p is None else args.p)
        if args.noise_dist is not None or args.noise_ratio is not None:
            distribution = args.noise_dist or cfg.noise.distribution
            cfg.noise = NoiseSpec.from_ratio(distribution, args.noise_ratio) if args.noise_ratio is not None else NoiseSpec(distribution, cfg.noise.ratios)
    except QstError as exc:
        raise ConfigError(f"command line: {exc}") from None
    if args.no_cache:
        cfg.use_cache = False
    if args.no_sentinel:
        cfg.sentinel = False
    if args.full_scale:
        cfg.apply_full_scale()
    cfg._coerce_path_fields()
    return cfg.validate().resolve_paths()


def _cmd_generate(cfg: ExperimentConfig, args: argparse.Namespace, console: Console) -> None:
    suite = build_suite(cfg.suite, cfg.qubits, cfg.sets)
    budget = ShotBudget(cfg.copies) if cfg.copies else None
    noise = None if cfg.noise.is_noiseless else cfg.noise
    count, seed = (cfg.train_size, cfg.train_seed) if args.role == "train" else (cfg.test_size, cfg.test_seed)
    dataset = generate_dataset(base_family(cfg), suite, budget, count, seed, noise, cfg.workers)
    out = args.out or cfg.experiment_dir / f"{args.role}.qds"
    save_dataset(dataset, out)
    console.print(f"[green]Wrote {len(dataset)} rows ({suite.name}, {dataset.manifest['copies']} copies) to {out}[/green]")


def _cmd_train(cfg: ExperimentConfig, args: argparse.Namespace, console: Console) -> None:
    if args.dataset is not None:
        dataset = load_dataset(args.dataset)
    else:
        suite = build_suite(cfg.suite, cfg.qubits, cfg.sets)
        budget = ShotBudget(cfg.copies) if cfg.copies else None
        noise = None if cfg.noise.is_noiseless else cfg.noise
        dataset = generate_dataset(base_family(cfg), suite, budget, cfg.train_size, cfg.train_seed, noise, cfg.workers)
    train_cfg = cfg.effective_train_config()
    model = init_model(dataset.feature_dim, train_cfg.hidden_width, dataset.target_dim, train_cfg.seed)
    model.manifest.update(dataset.manifest)
    _, history = train(model, dataset, train_cfg)
    out = args.out or cfg.experiment_dir / "model.bin"
    save_model(model, out)
    console.print(f"[green]Trained {model.layer_sizes}: loss {history[0]:.4e} -> {history[-1]:.4e}; saved {out}[/green]")


def _cmd_eval(cfg: ExperimentConfig, args: argparse.Namespace, console: Console) -> None:
    dataset = load_dataset(args.dataset)
    if dataset.states is None:
        raise QstError(f"{args.dataset} carries no true states to score against")
    suite = ideal_suite(dataset)
    model = None
    if args.estimator == "dnn":
        if args.model is None or not args.model.exists():
            raise MissingModel(f"dnn evaluation needs --model; got {args.model}")
        model = load_model(args.model)
    functions = estimator_functions(suite, cfg.mle, model)
    score = score_estimator(args.estimator, functions[args.estimator], dataset, cfg.workers)

    table = Table(title=str(args.dataset), show_header=True, header_style="bold cyan")
    for column in ("Estimator", "Suite", "Infidelity", "Std err", "N", "Failures", "Seconds"):
        table.add_column(column, justify="left" if column in ("Estimator", "Suite") else "right")
    table.add_row(
        args.estimator,
        suite.name,
        f"{score.mean:.4e}",
        f"{score.std_error:.1e}",
        str(len(score.infidelities)),
        str(score.failures),
        f"{score.seconds:.2f}",
    )
    console.print(table)


def _cmd_sweep(cfg: ExperimentConfig, console: Console) -> None:
    run = run_experiment(cfg, console=console)
    for note in run.warnings:
        console.print(f"[yellow]{note}[/yellow]")
    console.print(f"[green]Results written to {cfg.experiment_dir}[/green]")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    console = Console()
    err = Console(stderr=True)

    if args.command == "config":
        text = render_default_config()
        if args.out:
            atomic_write_text(args.out, text)
            console.print(f"[green]Wrote default config to {args.out}[/green]")
        else:
            sys.stdout.write(text)
        return 0

    try:
        cfg = config_from_args(args, OPTICAL_GENERALIZATION if args.command == "optical" else None)
        paths = ensure_workspace(cfg)
        configure_logging(paths["log_dir"], verbose=args.verbose, console=err)
        logger.info("command %s for experiment %s", args.command, cfg.name)
        if args.command == "generate":
            _cmd_generate(cfg, args, console)
        elif args.command == "train":
            _cmd_train(cfg, args, console)
        elif args.command == "eval":
            _cmd_eval(cfg, args, console)
        else:
            _cmd_sweep(cfg, console)
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QstError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


def run() -> None:
    sys.exit(main())
