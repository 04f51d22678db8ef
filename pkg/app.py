"""
app.py - TV / TGV Denoising Workbench

Command-line entry point for the primal-dual denoisers and the
asymptotic-regime experiments.

Features:
- Test image generation (disk, squares, ramp with elliptical bump, 1-D step)
- TV, TGV2 and 1-D second-order TV denoising
- Parameter sweeps with CSV reports and pass/fail verdicts
- Panel sets of data, TV and TGV solutions

Run `python app.py --help` for the subcommands.
"""

import sys

from src.cli.commands import main

# ============================================================
# LAUNCH APPLICATION
# ============================================================

if __name__ == "__main__":
    sys.exit(main())
