"""
Path Management Module

Provides consistent locations for logs and experiment output across
deployment scenarios (source checkout vs. installed package).

Uses platformdirs for reliable Windows/macOS/Linux user directory detection.

For a source checkout (run.py next to the package):
- Logs: <project>/logs
- Results: <project>/results

For an installed package, or when CHM_USER_DIRS=1:
- Logs: platformdirs user log dir
- Results: platformdirs user data dir / results
"""

import os
from pathlib import Path

import platformdirs

APP_NAME = "ThompsonCHM"
APP_AUTHOR = "ThompsonCHM"


def get_runtime_root() -> Path:
    """Project root: the directory holding run.py and the chm package."""
    return Path(__file__).resolve().parent.parent


def use_user_dirs() -> bool:
    """True when runtime files belong in per-user directories instead of the checkout."""
    if os.getenv("CHM_USER_DIRS", "").strip().lower() in ("1", "true", "yes"):
        return True
    return not (get_runtime_root() / "run.py").exists()


def get_logs_dir() -> Path:
    """
    Get the logs directory.

    CHM_LOG_DIR wins when set.

    Windows: %LOCALAPPDATA%/ThompsonCHM/Logs
    macOS: ~/Library/Logs/ThompsonCHM
    Linux: ~/.local/state/ThompsonCHM/log
    """
    override = os.getenv("CHM_LOG_DIR", "").strip()
    if override:
        return Path(override)
    if use_user_dirs():
        return Path(platformdirs.user_log_dir(APP_NAME, APP_AUTHOR))
    return get_runtime_root() / "logs"


def get_output_dir() -> Path:
    """
    Get the default directory for CSV results.

    CHM_OUTPUT_DIR wins when set.

    Windows: %APPDATA%/ThompsonCHM/results
    macOS: ~/Library/Application Support/ThompsonCHM/results
    Linux: ~/.local/share/ThompsonCHM/results
    """
    override = os.getenv("CHM_OUTPUT_DIR", "").strip()
    if override:
        return Path(override)
    if use_user_dirs():
        return Path(platformdirs.user_data_dir(APP_NAME, APP_AUTHOR)) / "results"
    return get_runtime_root() / "results"


def ensure_dirs_exist() -> None:
    """Create the logs and results directories."""
    for dir_path in (get_logs_dir(), get_output_dir()):
        try:
            dir_path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            print(f"Warning: Could not create directory {dir_path}: {e}")


def get_runtime_log_file() -> Path:
    """Get the path to the runtime log file."""
    return get_logs_dir() / "chm_runtime.log"
