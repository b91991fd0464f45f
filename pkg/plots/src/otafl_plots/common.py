"""Shared CSV loading and figure plumbing for the plot scripts."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


@dataclass
class PlotSpec:
    """One figure request: input CSVs, output image, selection options."""

    inputs: list[Path]
    output: Path
    options: dict = field(default_factory=dict)


def read_rows(path, required: tuple[str, ...]) -> list[dict]:
    """Load one CSV, insisting on the named columns."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in required if col not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def read_many(paths, required: tuple[str, ...]) -> list[dict]:
    rows = []
    for path in paths:
        rows.extend(read_rows(path, required))
    return rows


def save(fig, output) -> Path:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return output
