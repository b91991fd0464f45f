"""Small CNN for 28x28 grayscale digits with hand-written backpropagation.

Layer stack: conv 5x5 (1->6), ReLU, 2x2 max pool, conv 5x5 (6->2), ReLU,
2x2 max pool, flatten (32), linear 32->30, ReLU, linear 30->10, softmax
cross-entropy.  Feature shapes: 28x28x1 -> 24x24x6 -> 12x12x6 -> 8x8x2 ->
4x4x2 -> 32.  The second pool is required to land on the 32-unit linear
input.

Parameters flatten to a single float64 vector in fixed order (input layers
first): conv1 weights, conv1 biases, conv2 weights, conv2 biases, fc1
weights, fc1 biases, fc2 weights, fc2 biases.  That coordinate order is what
the channel transmits and the permutations reorder.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import RngStream

_SHAPES = (
    ("conv1_w", (6, 1, 5, 5)),
    ("conv1_b", (6,)),
    ("conv2_w", (2, 6, 5, 5)),
    ("conv2_b", (2,)),
    ("fc1_w", (30, 32)),
    ("fc1_b", (30,)),
    ("fc2_w", (10, 30)),
    ("fc2_b", (10,)),
)

NUM_CLASSES = 10
IMAGE_SIDE = 28


@dataclass
class ModelParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).ravel() for name, _ in _SHAPES])


def param_count() -> int:
    return sum(int(np.prod(shape)) for _, shape in _SHAPES)


def unflatten(vec: np.ndarray) -> ModelParams:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (param_count(),):
        raise ValueError(f"expected flat vector of length {param_count()}")
    fields = {}
    offset = 0
    for name, shape in _SHAPES:
        size = int(np.prod(shape))
        fields[name] = vec[offset:offset + size].reshape(shape).copy()
        offset += size
    return ModelParams(**fields)


def init_params(stream: RngStream) -> ModelParams:
    """Weights uniform in +-sqrt(1/fan_in), biases zero."""
    fan_in = {"conv1_w": 25, "conv2_w": 150, "fc1_w": 32, "fc2_w": 30}
    fields = {}
    for name, shape in _SHAPES:
        if name.endswith("_b"):
            fields[name] = np.zeros(shape)
        else:
            bound = np.sqrt(1.0 / fan_in[name])
            fields[name] = stream.uniform(-bound, bound, shape)
    return ModelParams(**fields)


def _im2col(x, kh, kw):
    """Patch matrix (B*H_out*W_out, C*kh*kw) so convolution is one matmul."""
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    b, c, h, w = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * kh * kw)
    return np.ascontiguousarray(cols), (b, h, w)


def _conv_forward(x, w, b):
    kh, kw = w.shape[-2:]
    cols, (batch, h_out, w_out) = _im2col(x, kh, kw)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.reshape(batch, h_out, w_out, w.shape[0]).transpose(0, 3, 1, 2)


def _conv_backward(dout, x, w, need_dx=True):
    out_channels = w.shape[0]
    kh, kw = w.shape[-2:]
    cols, (batch, h_out, w_out) = _im2col(x, kh, kw)
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, out_channels)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    dx = None
    if need_dx:
        dcols = (dmat @ w.reshape(out_channels, -1)).reshape(
            batch, h_out, w_out, x.shape[1], kh, kw)
        dx = np.zeros_like(x)
        for u in range(kh):
            for v in range(kw):
                dx[:, :, u:u + h_out, v:v + w_out] += \
                    dcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    return dw, db, dx


def _pool_forward(x):
    b, c, h, w = x.shape
    tiles = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    tiles = tiles.reshape(b, c, h // 2, w // 2, 4)
    idx = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, shape):
    b, c, h, w = shape
    tiles = np.zeros((b, c, h // 2, w // 2, 4))
    np.put_along_axis(tiles, idx[..., None], dout[..., None], axis=-1)
    tiles = tiles.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return tiles.reshape(b, c, h, w)


def forward(params: ModelParams, images: np.ndarray):
    """Run the network on a batch of images in [0, 1].

    Accepts (B, 28, 28) or (B, 1, 28, 28); returns (logits, cache) where the
    cache holds the intermediates backward() needs.
    """
    x = np.asarray(images, dtype=float)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.ndim != 4 or x.shape[1:] != (1, IMAGE_SIDE, IMAGE_SIDE):
        raise ValueError(f"expected images shaped (B, 28, 28), got {images.shape}")
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")

    z1 = _conv_forward(x, params.conv1_w, params.conv1_b)
    a1 = np.maximum(z1, 0.0)
    p1, idx1 = _pool_forward(a1)
    z2 = _conv_forward(p1, params.conv2_w, params.conv2_b)
    a2 = np.maximum(z2, 0.0)
    p2, idx2 = _pool_forward(a2)
    flat = p2.reshape(x.shape[0], -1)
    z3 = flat @ params.fc1_w.T + params.fc1_b
    a3 = np.maximum(z3, 0.0)
    logits = a3 @ params.fc2_w.T + params.fc2_b
    cache = {"params": params, "x": x, "z1": z1, "idx1": idx1, "p1": p1,
             "z2": z2, "idx2": idx2, "flat": flat, "z3": z3, "a3": a3,
             "logits": logits}
    return logits, cache


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of a batch under the softmax of the logits."""
    labels = _check_labels(labels, logits.shape[0])
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(lse - shifted[np.arange(len(labels)), labels]))


def _check_labels(labels, batch):
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ValueError("labels must match the batch")
    if labels.min() < 0 or labels.max() >= NUM_CLASSES:
        raise ValueError("label out of range")
    return labels


def backward(cache, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean batch cross-entropy, flattened in canonical order."""
    params: ModelParams = cache["params"]
    batch = cache["x"].shape[0]
    labels = _check_labels(labels, batch)

    dz4 = _softmax(cache["logits"])
    dz4[np.arange(batch), labels] -= 1.0
    dz4 /= batch

    d_fc2_w = dz4.T @ cache["a3"]
    d_fc2_b = dz4.sum(axis=0)
    da3 = dz4 @ params.fc2_w
    dz3 = da3 * (cache["z3"] > 0)

    d_fc1_w = dz3.T @ cache["flat"]
    d_fc1_b = dz3.sum(axis=0)
    dflat = dz3 @ params.fc1_w

    dp2 = dflat.reshape(batch, 2, 4, 4)
    da2 = _pool_backward(dp2, cache["idx2"], (batch, 2, 8, 8))
    dz2 = da2 * (cache["z2"] > 0)
    d_conv2_w, d_conv2_b, dp1 = _conv_backward(dz2, cache["p1"], params.conv2_w)

    da1 = _pool_backward(dp1, cache["idx1"], (batch, 6, 24, 24))
    dz1 = da1 * (cache["z1"] > 0)
    d_conv1_w, d_conv1_b, _ = _conv_backward(dz1, cache["x"], params.conv1_w,
                                             need_dx=False)

    return np.concatenate([
        d_conv1_w.ravel(), d_conv1_b.ravel(),
        d_conv2_w.ravel(), d_conv2_b.ravel(),
        d_fc1_w.ravel(), d_fc1_b.ravel(),
        d_fc2_w.ravel(), d_fc2_b.ravel(),
    ])


def batch_gradient(params: ModelParams, images, labels):
    """Convenience wrapper: (mean loss, flat gradient) for one batch."""
    logits, cache = forward(params, images)
    return cross_entropy(logits, labels), backward(cache, labels)


def evaluate(params: ModelParams, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 512) -> float:
    """Fraction of argmax-correct predictions."""
    if len(images) == 0:
        raise ValueError("test set must be nonempty")
    correct = 0
    for start in range(0, len(images), batch_size):
        logits, _ = forward(params, images[start:start + batch_size])
        correct += int((logits.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return correct / len(images)


def save_flat(path, vec: np.ndarray) -> None:
    """Write a flat parameter vector: uint64 length prefix + little-endian f64."""
    vec = np.asarray(vec, dtype=float)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", vec.size))
        fh.write(vec.astype("<f8").tobytes())


def load_flat(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (count,) = struct.unpack("<Q", fh.read(8))
        data = fh.read(count * 8)
    if len(data) != count * 8:
        raise ValueError(f"truncated parameter file {path}")
    return np.frombuffer(data, dtype="<f8").astype(float)
