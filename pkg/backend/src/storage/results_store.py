#!/usr/bin/env python3
"""
Results store for experiment output.
Keeps results.json (the source of truth) and the derived CSV/Markdown tables
in one output directory.
"""

import json
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import joblib
import numpy as np
import pandas as pd
import scipy

from backend.src.errors import DataError

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.json"
FLOAT_FORMAT = "%.6f"


def environment_stamp() -> dict:
    """Interpreter, platform and library versions of the current process."""
    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "joblib": joblib.__version__,
    }


def render_markdown(table: pd.DataFrame) -> str:
    """Render a DataFrame as a GitHub-flavoured Markdown table."""

    def cell(value) -> str:
        if isinstance(value, float):
            return "" if np.isnan(value) else f"{value:.4f}"
        return str(value)

    header = [str(c) for c in table.columns]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(" --- " for _ in header) + "|",
    ]
    for row in table.itertuples(index=False):
        lines.append("| " + " | ".join(cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


class ResultsStore:
    """Read/write access to one experiment output directory."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)

    @property
    def results_path(self) -> Path:
        return self.out_dir / RESULTS_FILE

    def _ensure_dir(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def load(self) -> dict:
        """
        Read results.json.

        Returns:
            The stored document, or an empty dict when nothing was written yet
        """
        if not self.results_path.exists():
            return {}
        try:
            return json.loads(self.results_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataError(f"Corrupt results file {self.results_path}: {e}") from None

    def save_section(
        self, section: str, payload: dict, config: Optional[dict] = None
    ) -> Path:
        """
        Store one experiment family ("baselines", "ablation", "ga") in results.json.

        Other sections already in the file are kept, so running the verbs one
        after another accumulates a single document.
        """
        self._ensure_dir()
        document = self.load()
        document[section] = payload
        if config is not None:
            document["config"] = config
        document["environment"] = environment_stamp()
        document["updated_at"] = datetime.now(timezone.utc).isoformat()
        self.results_path.write_text(
            json.dumps(document, indent=2, sort_keys=True, default=_json_default)
            + "\n",
            encoding="utf-8",
        )
        logger.debug("Saved section '%s' to %s", section, self.results_path)
        return self.results_path

    def write_table(self, name: str, table: pd.DataFrame) -> Path:
        """Write ``<name>.csv`` and its Markdown rendering ``<name>.md``."""
        self._ensure_dir()
        csv_path = self.out_dir / f"{name}.csv"
        table.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, na_rep="")
        (self.out_dir / f"{name}.md").write_text(
            render_markdown(table), encoding="utf-8"
        )
        return csv_path

    def write_lines(self, name: str, lines: list[str]) -> Path:
        self._ensure_dir()
        path = self.out_dir / name
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
        return path


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialise {type(value).__name__}")
