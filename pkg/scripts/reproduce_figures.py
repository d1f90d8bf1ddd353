#!/usr/bin/env python3
"""
Figure preset launcher for Thompson-CHM.

Usage:
    python scripts/reproduce_figures.py [--workers N] [--out DIR]

Runs the oracle report and both preset sweeps, writing one subdirectory per
preset under the output directory.
"""

import os
import sys

project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)
os.chdir(project_root)

from dotenv import load_dotenv

load_dotenv(os.path.join(project_root, '.env'))

os.environ.setdefault('CHM_THREADS', str(os.cpu_count() or 1))


def main():
    """Run both figure presets, forwarding any extra flags."""
    from chm.cli import main as cli_main
    from chm.paths import ensure_dirs_exist, get_output_dir

    ensure_dirs_exist()
    extra = sys.argv[1:]
    base = get_output_dir()
    if '--out' in extra:
        i = extra.index('--out')
        base = extra[i + 1]
        extra = extra[:i] + extra[i + 2:]

    print("=" * 60)
    print("  Thompson-CHM - FIGURE PRESETS")
    print("=" * 60)

    for preset in ('figure1', 'figure2'):
        out = os.path.join(str(base), preset)
        print(f"\n  {preset} -> {out}\n")
        for command in ('oracle', 'sweep'):
            code = cli_main([command, f'--{preset}', '--out', out] + extra)
            if code != 0:
                return code
    return 0


if __name__ == '__main__':
    sys.exit(main())
