"""Oscillator phase trajectories within a coherence block, one panel per file.

Input: phase_*.csv files from `otafl dump-phase` (columns: realization, s,
phase_radians).  Every realization becomes one line, so the panel shows the
spread of the random-walk drift over the block.
"""

from __future__ import annotations

import argparse
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

from .common import read_rows, save

REQUIRED = ("realization", "s", "phase_radians")


def build_figure(per_file):
    """per_file: list of (label, rows) pairs, one panel each."""
    if not per_file:
        raise ValueError("no input files")
    fig, axes = plt.subplots(len(per_file), 1, sharex=True,
                             figsize=(7, 3.0 * len(per_file)), squeeze=False)
    for ax, (label, rows) in zip(axes[:, 0], per_file):
        walks = defaultdict(list)
        for row in rows:
            walks[int(row["realization"])].append(
                (int(row["s"]), float(row["phase_radians"])))
        for realization in sorted(walks):
            points = sorted(walks[realization])
            ax.plot([s for s, _ in points], [p for _, p in points],
                    linewidth=0.6, alpha=0.7)
        ax.set_ylabel("phase (radians)")
        ax.set_title(label, fontsize=10)
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel("symbol index")
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--input", nargs="+", required=True,
                        help="phase trajectory CSV files, one panel each")
    parser.add_argument("--output", required=True, help="image file to write")
    args = parser.parse_args(argv)
    per_file = [(Path(path).stem, read_rows(path, REQUIRED))
                for path in args.input]
    path = save(build_figure(per_file), args.output)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
