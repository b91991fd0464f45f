"""MNIST IDX ingestion, label-sorted heterogeneous sharding, and batching.

Reads the four standard IDX files (optionally gzip-compressed).  Sharding
follows the heterogeneous recipe: sort the train set by label, cut it into
2K equal shards, and deal every device two distinct shards, so each device
ends up with samples from only a few digit classes.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
SHARDS_PER_DEVICE = 2


class IdxFormatError(ValueError):
    """Malformed IDX payload: bad magic, truncation, or dimension mismatch."""


@dataclass
class Dataset:
    """Images as float64 in [0, 1], labels as int64 digits."""

    images: np.ndarray  # (N, 28, 28)
    labels: np.ndarray  # (N,)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxFormatError(
                f"dimension mismatch: {len(self.images)} images vs "
                f"{len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class ShardAssignment:
    """Per-device sample indices plus the shard ids behind them."""

    device_indices: list[np.ndarray]
    device_shards: list[tuple[int, ...]]
    shard_size: int

    @property
    def num_devices(self) -> int:
        return len(self.device_indices)


def parse_idx(data: bytes) -> np.ndarray:
    """Decode one IDX file: uint8 images (N, rows, cols) or labels (N,)."""
    if len(data) < 4:
        raise IdxFormatError("truncated header")
    magic = int.from_bytes(data[0:4], "big")
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise IdxFormatError(f"unsupported magic {magic}")
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise IdxFormatError("truncated dimension header")
    dims = [int.from_bytes(data[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    expected = int(np.prod(dims))
    payload = data[header_end:]
    if len(payload) < expected:
        raise IdxFormatError(
            f"truncated payload: header implies {expected} bytes, got {len(payload)}")
    if len(payload) > expected:
        raise IdxFormatError(
            f"dimension mismatch: {len(payload) - expected} trailing bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def write_idx(array: np.ndarray, path) -> None:
    """Serialize a uint8 array back to IDX (gzip if the path ends in .gz)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = IMAGE_MAGIC if array.ndim == 3 else LABEL_MAGIC
    blob = magic.to_bytes(4, "big")
    for dim in array.shape:
        blob += int(dim).to_bytes(4, "big")
    blob += array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        # mtime pinned so rewriting the same data is byte-identical
        with gzip.GzipFile(path, "wb", mtime=0) as fh:
            fh.write(blob)
    else:
        path.write_bytes(blob)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def load_dataset(images_path, labels_path) -> Dataset:
    """Load one images/labels IDX pair, scaling pixels to [0, 1]."""
    images = parse_idx(_read_bytes(images_path))
    labels = parse_idx(_read_bytes(labels_path))
    if images.ndim != 3:
        raise IdxFormatError(f"{images_path} does not hold images")
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path} does not hold labels")
    return Dataset(images=images.astype(float) / 255.0,
                   labels=labels.astype(np.int64))


def subsample_per_class(dataset: Dataset, per_class: int) -> Dataset:
    """Deterministic desk-scale subset: the first `per_class` samples of each
    class in original order."""
    keep = []
    for label in np.unique(dataset.labels):
        idx = np.flatnonzero(dataset.labels == label)[:per_class]
        keep.append(idx)
    keep = np.sort(np.concatenate(keep))
    return Dataset(images=dataset.images[keep], labels=dataset.labels[keep])


def shard_heterogeneous(train: Dataset, stream: RngStream,
                        num_devices: int = 10) -> ShardAssignment:
    """Label-sort the train set, split into 2K equal shards, deal 2 per device.

    Shards are drawn without replacement, so all 2K shards are used exactly
    once and device holdings are disjoint.  The label sort is stable, which
    makes the assignment reproducible for a given stream.
    """
    n = len(train)
    num_shards = num_devices * SHARDS_PER_DEVICE
    if n % num_shards != 0:
        raise ValueError(f"train size {n} not divisible into {num_shards} equal shards")
    shard_size = n // num_shards
    order = np.argsort(train.labels, kind="stable")
    shards = order.reshape(num_shards, shard_size)
    dealt = stream.permutation(num_shards)
    device_indices = []
    device_shards = []
    for k in range(num_devices):
        picks = tuple(int(s) for s in dealt[SHARDS_PER_DEVICE * k:
                                            SHARDS_PER_DEVICE * (k + 1)])
        device_shards.append(picks)
        device_indices.append(np.concatenate([shards[s] for s in picks]))
    return ShardAssignment(device_indices=device_indices,
                           device_shards=device_shards, shard_size=shard_size)


def batches(assignment: ShardAssignment, device: int, batch_size: int,
            stream: RngStream):
    """Yield one epoch of index batches for a device, shuffled by the stream.

    The stream should be keyed per (trial, device, epoch).  A final short
    batch is dropped, so an epoch has floor(C / B) batches.
    """
    indices = assignment.device_indices[device]
    shuffled = stream.permutation(indices)
    for start in range(0, len(shuffled) - batch_size + 1, batch_size):
        yield shuffled[start:start + batch_size]
