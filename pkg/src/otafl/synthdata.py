"""Synthetic digit images in MNIST's IDX container format.

Real MNIST cannot be redistributed with this package and downloading it is a
manual step, so tests and demo runs can fall back to this generator: 28x28
grayscale digit glyphs with random placement, intensity, and pixel noise,
written as the four standard (gzipped) IDX files.  The train split uses
MNIST's exact per-class counts so the heterogeneous sharding arithmetic
behaves identically; the test split is evenly distributed.

Usage:  python -m otafl.synthdata OUT_DIR [--seed N] [--scale F]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .core import RngStream
from .data import write_idx

# Per-class sample counts of the MNIST train split (sums to 60000).
MNIST_TRAIN_COUNTS = (5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949)
TEST_PER_CLASS = 1000

FILE_NAMES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}

_GLYPH_ROWS = [
    (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    (".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."),
    ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
]


def _glyphs() -> list[np.ndarray]:
    out = []
    for rows in _GLYPH_ROWS:
        bitmap = np.array([[1.0 if ch == "#" else 0.0 for ch in row] for row in rows])
        out.append(np.kron(bitmap, np.ones((3, 3))))  # 21 x 15
    return out


def synthesize(counts, stream: RngStream,
               chunk_size: int = 8192) -> tuple[np.ndarray, np.ndarray]:
    """Render `counts[c]` samples of each digit c, shuffled.

    Returns (images uint8 (N, 28, 28), labels uint8 (N,)); renders in chunks
    to keep the float workspace small.
    """
    glyphs = _glyphs()
    total = int(sum(counts))
    labels = np.repeat(np.arange(10, dtype=np.uint8), counts)
    labels = stream.permutation(labels)
    gh, gw = glyphs[0].shape
    images = np.empty((total, 28, 28), dtype=np.uint8)
    for start in range(0, total, chunk_size):
        stop = min(start + chunk_size, total)
        m = stop - start
        row_off = stream.integers(0, 28 - gh + 1, m)
        col_off = stream.integers(3, 28 - gw - 2, m)
        intensity = stream.uniform(0.55, 1.0, m)
        canvas = np.zeros((m, 28, 28))
        for i in range(m):
            r, c = row_off[i], col_off[i]
            canvas[i, r:r + gh, c:c + gw] = glyphs[labels[start + i]] * intensity[i]
        canvas += stream.standard_normal((m, 28, 28)) * 0.08
        images[start:stop] = (np.clip(canvas, 0.0, 1.0) * 255).astype(np.uint8)
    return images, labels


def scaled_train_counts(scale: float) -> list[int]:
    """Per-class counts shrunk by `scale`, nudged so the total stays
    divisible into the 20 shards of the default heterogeneous split."""
    counts = [max(1, round(c * scale)) for c in MNIST_TRAIN_COUNTS]
    total = sum(counts)
    target = max(20, total - total % 20)
    order = sorted(range(10), key=lambda c: -counts[c])
    i = 0
    while total != target:
        c = order[i % 10]
        i += 1
        if total > target and counts[c] > 1:
            counts[c] -= 1
            total -= 1
        elif total < target:
            counts[c] += 1
            total += 1
    return counts


def generate(out_dir, seed: int = 0, scale: float = 1.0) -> dict[str, Path]:
    """Write the four IDX files under out_dir; reuse them if already present.

    scale shrinks every per-class count proportionally (desk-scale fixtures).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {key: out_dir / name for key, name in FILE_NAMES.items()}
    if all(p.exists() for p in paths.values()):
        return paths
    train_counts = scaled_train_counts(scale)
    test_counts = [max(1, round(TEST_PER_CLASS * scale))] * 10
    stream = RngStream(seed)
    train_images, train_labels = synthesize(train_counts, stream)
    test_images, test_labels = synthesize(test_counts, stream)
    write_idx(train_images, paths["train_images"])
    write_idx(train_labels, paths["train_labels"])
    write_idx(test_images, paths["test_images"])
    write_idx(test_labels, paths["test_labels"])
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scale", type=float, default=1.0,
                        help="shrink per-class counts by this factor")
    args = parser.parse_args(argv)
    paths = generate(args.out_dir, seed=args.seed, scale=args.scale)
    for key, path in paths.items():
        print(f"{key}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
