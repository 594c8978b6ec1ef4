from __future__ import annotations

import os
from pathlib import Path

APP_NAME = "QstWorkbench"
PROFILE_ENV_VAR = "QSTBENCH_PROFILE"
CACHE_ENV_VAR = "QSTBENCH_CACHE_DIR"
_TEST_TOKEN = "TEST"
_RESULTS_FOLDER = "results"


def is_test_profile() -> bool:
    """Return True when running under the TEST profile."""
    return os.environ.get(PROFILE_ENV_VAR, "").strip().upper() == _TEST_TOKEN


def _profiled_name(base: str) -> str:
    return f"{base}_TEST" if is_test_profile() else base


def get_state_dir() -> Path:
    """
    Base directory for logs, cached datasets and the default config.
    %APPDATA% on Windows, $XDG_STATE_HOME (or ~/.local/state) elsewhere.
    No directories are created here; callers handle creation.
    """
    appdata_root = os.environ.get("APPDATA")
    if appdata_root:
        base = Path(appdata_root)
    else:
        xdg = os.environ.get("XDG_STATE_HOME")
        base = Path(xdg) if xdg else Path.home() / ".local" / "state"
    return base / _profiled_name(APP_NAME)


def get_cache_dir() -> Path:
    override = os.environ.get(CACHE_ENV_VAR, "").strip()
    if override:
        return Path(override)
    return get_state_dir() / "cache"


def get_log_dir() -> Path:
    return get_state_dir() / "logs"


def get_results_dir() -> Path:
    """Experiment outputs default to ./results under the working directory."""
    return Path.cwd() / _profiled_name(_RESULTS_FOLDER)


def get_default_config_path() -> Path:
    return get_state_dir() / "config.ini"
