"""Average absolute gradient per coordinate, log scale, selected epochs.

Input: grad_profile.csv from `otafl train` with training.dump_grad_profile
enabled (columns: trial, epoch, coord, mean_abs_grad).  One curve per
selected epoch, averaged over trials; zeros from dead ReLU units are clipped
to a floor so they stay visible on the log axis as dips.
"""

from __future__ import annotations

import argparse
from collections import defaultdict

import matplotlib.pyplot as plt
import numpy as np

from .common import read_many, save

REQUIRED = ("trial", "epoch", "coord", "mean_abs_grad")
LOG_FLOOR = 1e-12


def build_figure(rows, epochs=None):
    by_epoch = defaultdict(lambda: defaultdict(list))
    for row in rows:
        by_epoch[int(row["epoch"])][int(row["coord"])].append(
            float(row["mean_abs_grad"]))
    available = sorted(by_epoch)
    if epochs is None:
        epochs = [available[0]] if len(available) == 1 \
            else [available[0], available[-1]]
    missing = [e for e in epochs if e not in by_epoch]
    if missing:
        raise ValueError(f"epoch(s) {missing} not present; "
                         f"available: {available}")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for epoch in epochs:
        coords = sorted(by_epoch[epoch])
        profile = np.array([np.mean(by_epoch[epoch][c]) for c in coords])
        ax.semilogy(coords, np.maximum(profile, LOG_FLOOR),
                    linewidth=0.8, label=f"epoch {epoch + 1}")
    ax.set_xlabel("gradient coordinate")
    ax.set_ylabel("mean |gradient|")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--input", nargs="+", required=True,
                        help="grad_profile.csv files")
    parser.add_argument("--output", required=True, help="image file to write")
    parser.add_argument("--epochs", default=None,
                        help="comma-separated epoch indices "
                             "(default: first and last present)")
    args = parser.parse_args(argv)
    epochs = None
    if args.epochs:
        epochs = [int(part) for part in args.epochs.split(",")]
    rows = read_many(args.input, REQUIRED)
    path = save(build_figure(rows, epochs), args.output)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
