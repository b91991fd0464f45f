"""Test accuracy vs epoch, one curve per permutation.

Input: one or more metrics.csv files produced by `otafl train` / `otafl
sweep` (columns: trial, epoch, batch_index, permutation, sigma_e2,
test_accuracy, mean_train_loss, power_violations).  Rows are averaged over
trials and over the evaluations inside each epoch.  Curves are keyed by
(permutation, sigma_e2), so a no-phase-noise baseline shows up as its own
curve next to the noisy runs.
"""

from __future__ import annotations

import argparse
from collections import defaultdict

import matplotlib.pyplot as plt

from .common import read_many, save

REQUIRED = ("epoch", "permutation", "sigma_e2", "test_accuracy")


def build_figure(rows):
    groups = defaultdict(lambda: defaultdict(list))
    sigmas = set()
    for row in rows:
        key = (row["permutation"], float(row["sigma_e2"]))
        sigmas.add(key[1])
        groups[key][int(row["epoch"])].append(float(row["test_accuracy"]))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for permutation, sigma in sorted(groups):
        per_epoch = groups[(permutation, sigma)]
        epochs = sorted(per_epoch)
        means = [sum(per_epoch[e]) / len(per_epoch[e]) for e in epochs]
        label = permutation
        if len(sigmas) > 1:
            label = f"{permutation} (sigma_e2={sigma:g})"
        ax.plot([e + 1 for e in epochs], means, marker="o", markersize=3,
                label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend()
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--input", nargs="+", required=True,
                        help="metrics.csv files (one per run directory)")
    parser.add_argument("--output", required=True, help="image file to write")
    args = parser.parse_args(argv)
    rows = read_many(args.input, REQUIRED)
    path = save(build_figure(rows), args.output)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
