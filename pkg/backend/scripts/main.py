#!/usr/bin/env python3
"""
Run the smart-grid detection experiments from a source checkout.

Same verbs and flags as the ``gridga`` console script:

    uv run backend/scripts/main.py baselines --data-dir data/binary
    uv run backend/scripts/main.py ga --ga-seeds 1,2,3,4,5 --out results
"""

import sys
from pathlib import Path

# Allow running the file directly without installing the package
sys.path.insert(0, str(Path(__file__).resolve().parents[2]))

from backend.src.harness.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
