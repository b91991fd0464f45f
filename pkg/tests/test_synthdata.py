import numpy as np

from otafl import data, synthdata
from otafl.core import RngStream


def test_train_histogram_matches_mnist():
    assert sum(synthdata.MNIST_TRAIN_COUNTS) == 60_000
    images, labels = synthdata.synthesize((5, 3, 2, 1, 1, 1, 1, 1, 1, 4),
                                          RngStream(1))
    assert images.shape == (20, 28, 28)
    assert np.bincount(labels, minlength=10).tolist() == [5, 3, 2, 1, 1, 1, 1, 1, 1, 4]


def test_generation_deterministic_and_cached(tmp_path):
    paths = synthdata.generate(tmp_path / "a", seed=3, scale=0.01)
    blob = paths["train_images"].read_bytes()
    again = synthdata.generate(tmp_path / "a", seed=3, scale=0.01)
    assert again["train_images"].read_bytes() == blob  # reused, not rewritten
    other = synthdata.generate(tmp_path / "b", seed=3, scale=0.01)
    assert other["train_images"].read_bytes() == blob


def test_generated_files_load_as_dataset(tmp_path):
    paths = synthdata.generate(tmp_path, seed=5, scale=0.01)
    train = data.load_dataset(paths["train_images"], paths["train_labels"])
    test = data.load_dataset(paths["test_images"], paths["test_labels"])
    assert train.images.min() >= 0.0 and train.images.max() <= 1.0
    assert set(np.unique(test.labels)) == set(range(10))
    # classes are visually distinct: mean images differ across labels
    means = np.stack([train.images[train.labels == c].mean(axis=0)
                      for c in range(10)])
    gaps = [np.abs(means[a] - means[b]).max()
            for a in range(10) for b in range(a + 1, 10)]
    assert min(gaps) > 0.05
