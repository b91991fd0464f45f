"""Shared test utilities: independent oracles and fixture builders."""

import numpy as np

from otafl import data, model, synthdata
from otafl.core import RngStream


def reference_forward(p: model.ModelParams, image: np.ndarray) -> np.ndarray:
    """Independent scalar-loop forward pass for one 28x28 image."""

    def conv(x, w, b):
        in_c, height, width = x.shape
        out_c, _, k, _ = w.shape
        out = np.zeros((out_c, height - k + 1, width - k + 1))
        for o in range(out_c):
            for i in range(height - k + 1):
                for j in range(width - k + 1):
                    acc = b[o]
                    for c in range(in_c):
                        for u in range(k):
                            for v in range(k):
                                acc += w[o, c, u, v] * x[c, i + u, j + v]
                    out[o, i, j] = acc
        return out

    def relu(x):
        return np.where(x > 0, x, 0.0)

    def pool(x):
        c, height, width = x.shape
        out = np.zeros((c, height // 2, width // 2))
        for ch in range(c):
            for i in range(height // 2):
                for j in range(width // 2):
                    out[ch, i, j] = max(x[ch, 2 * i, 2 * j],
                                        x[ch, 2 * i, 2 * j + 1],
                                        x[ch, 2 * i + 1, 2 * j],
                                        x[ch, 2 * i + 1, 2 * j + 1])
        return out

    x = image[None, :, :]
    x = pool(relu(conv(x, p.conv1_w, p.conv1_b)))
    x = pool(relu(conv(x, p.conv2_w, p.conv2_b)))
    flat = []
    for c in range(x.shape[0]):
        for i in range(x.shape[1]):
            for j in range(x.shape[2]):
                flat.append(x[c, i, j])
    flat = np.array(flat)
    hidden = relu(p.fc1_w @ flat + p.fc1_b)
    return p.fc2_w @ hidden + p.fc2_b


def write_noise_idx_dir(out_dir, train_per_class, test_per_class, seed):
    """Balanced random-pixel IDX files (content-free, for plumbing tests)."""
    stream = RngStream(seed, role=9)
    for split, per_class in (("train", train_per_class), ("test", test_per_class)):
        labels = np.repeat(np.arange(10, dtype=np.uint8), per_class)
        labels = stream.permutation(labels)
        images = (stream.uniform(0.0, 1.0, (len(labels), 28, 28)) * 255)
        data.write_idx(images.astype(np.uint8),
                       out_dir / synthdata.FILE_NAMES[f"{split}_images"])
        data.write_idx(labels, out_dir / synthdata.FILE_NAMES[f"{split}_labels"])
    return out_dir
