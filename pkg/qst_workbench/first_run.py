from __future__ import annotations

from pathlib import Path
from typing import Optional

from .config import ExperimentConfig, render_default_config
from .paths import get_default_config_path, get_state_dir
from .store import atomic_write_text


def ensure_workspace(cfg: Optional[ExperimentConfig] = None) -> dict[str, Path]:
    """
    Ensure the state, cache, log and results directories exist and that a
    commented default config sits in the state directory.
    Returns dict with keys: state_dir, cache_dir, log_dir, output_dir, config.
    Idempotent and safe to call multiple times.
    """
    cfg = (cfg or ExperimentConfig()).resolve_paths()
    state_dir = get_state_dir()
    assert cfg.cache_dir is not None and cfg.log_dir is not None and cfg.output_dir is not None

    for p in (state_dir, cfg.cache_dir, cfg.log_dir, cfg.output_dir):
        p.mkdir(parents=True, exist_ok=True)

    config_path = get_default_config_path()
    if not config_path.exists():
        atomic_write_text(config_path, render_default_config())

    return {
        "state_dir": state_dir,
        "cache_dir": cfg.cache_dir,
        "log_dir": cfg.log_dir,
        "output_dir": cfg.output_dir,
        "config": config_path,
    }
