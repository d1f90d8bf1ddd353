#!/usr/bin/env python3
"""
Thompson-CHM - Entry Point

Loads .env, prepares the runtime directories and dispatches to the CLI.

Usage:
    python run.py oracle --figure2
    python run.py run --means 0.1,0.2,0.3 --gamma 0.25 --delta 0.1 --reps 50
    python run.py sweep --figure1 --workers 4
    python run.py selftest
"""

import os
import sys


def get_runtime_root() -> str:
    """Directory containing this file."""
    return os.path.dirname(os.path.abspath(__file__))


def load_environment():
    from dotenv import load_dotenv

    env_file = os.path.join(get_runtime_root(), ".env")
    if os.path.exists(env_file):
        load_dotenv(env_file)


def ensure_directories():
    from chm.paths import ensure_dirs_exist
    ensure_dirs_exist()


def main() -> int:
    load_environment()
    ensure_directories()

    # Import the package AFTER env is loaded: chm.config reads it at import
    from chm.cli import main as cli_main
    from chm.watchdog import watchdog

    watchdog.install_exception_hooks()
    watchdog.log_startup("Thompson-CHM")
    try:
        return cli_main(sys.argv[1:])
    finally:
        watchdog.log_shutdown("Thompson-CHM")


if __name__ == "__main__":
    sys.exit(main())
