import os
from pathlib import Path

import pytest

from otafl import data, synthdata

# Set OTAFL_DATA_DIR to a directory holding the real (gzipped) MNIST IDX
# files to run the data-dependent tests against them; otherwise a synthetic
# stand-in with MNIST's exact label histogram is generated once per session.


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory) -> Path:
    env = os.environ.get("OTAFL_DATA_DIR")
    if env:
        base = Path(env)
        if all((base / name).exists() for name in synthdata.FILE_NAMES.values()):
            return base
    out = tmp_path_factory.mktemp("digits")
    synthdata.generate(out, seed=2024)
    return out


@pytest.fixture(scope="session")
def full_sets(mnist_dir):
    train = data.load_dataset(mnist_dir / synthdata.FILE_NAMES["train_images"],
                              mnist_dir / synthdata.FILE_NAMES["train_labels"])
    test = data.load_dataset(mnist_dir / synthdata.FILE_NAMES["test_images"],
                             mnist_dir / synthdata.FILE_NAMES["test_labels"])
    return train, test


@pytest.fixture(scope="session")
def desk_sets(full_sets):
    """6000-sample class-balanced train subset and a 2000-sample test subset."""
    train, test = full_sets
    return (data.subsample_per_class(train, 600),
            data.subsample_per_class(test, 200))
