"""Entry point for the psikit batch CLI.

Run:
  python Psi_Kit.py pipeline --preset mouse50_desk --phantom phantoms/two_vessels.json --out runs/two

Or as a module:
  python -m psikit presets

Env sample (.env):
  PSIKIT_WORKERS=4
  PSIKIT_LOG_JSON=1
  PSIKIT_OUTPUT_DIR=runs

Sanity check (resolution demo on a desk-sized preset):
  python Psi_Kit.py demo --preset mouse50_desk --out runs/demo
"""
from __future__ import annotations

import sys

from psikit.cli import main

__all__ = ["main"]


if __name__ == "__main__":
    sys.exit(main())
