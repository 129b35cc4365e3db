"""Layer kernels: same-padded 2D convolution, 2x2 max pooling, dense, ReLU, softmax.

Every kernel accepts a single tensor or a leading batch axis.  Spatial tensors
are laid out (rows, columns, channels), i.e. ``(H, W, C)`` or ``(B, H, W, C)``.
Kernels preserve the floating dtype of their inputs, so the same code runs in
float32 for training and float64 inside gradient checks.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError

__all__ = [
    "ConvLayerParams",
    "DenseLayerParams",
    "GradientBundle",
    "PoolIndex",
    "OpCounter",
    "conv2d",
    "conv2d_backward",
    "maxpool2x2",
    "maxpool2x2_backward",
    "dense",
    "dense_backward",
    "relu",
    "relu_backward",
    "softmax",
]


@dataclass
class ConvLayerParams:
    """Square ``r x r`` filters stored as ``(r, r, in_channels, out_channels)``."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.biases)
        if w.ndim != 4 or w.shape[0] != w.shape[1]:
            raise ConfigurationError(f"conv weights must be (r, r, in, out), got {w.shape}")
        if b.shape != (w.shape[3],):
            raise ConfigurationError(
                f"conv biases must have shape ({w.shape[3]},), got {b.shape}"
            )
        self.weights, self.biases = w, b

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[3]


@dataclass
class DenseLayerParams:
    """Fully connected layer; ``weights`` is ``(in_features, out_features)``."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights)
        b = np.asarray(self.biases)
        if w.ndim != 2:
            raise ConfigurationError(f"dense weights must be 2-D, got {w.shape}")
        if b.shape != (w.shape[1],):
            raise ConfigurationError(
                f"dense biases must have shape ({w.shape[1]},), got {b.shape}"
            )
        self.weights, self.biases = w, b

    @property
    def in_features(self) -> int:
        return self.weights.shape[0]

    @property
    def out_features(self) -> int:
        return self.weights.shape[1]


@dataclass
class GradientBundle:
    weights: np.ndarray | None
    biases: np.ndarray | None
    input: np.ndarray


@dataclass
class PoolIndex:
    """Winning position (0..3, row-major inside the 2x2 window) of every pooled value."""

    input_shape: tuple
    argmax: np.ndarray
    batched: bool


# --------------------------------------------------------------------------
# operation counting

_local = threading.local()


class OpCounter:
    """Context manager that tallies the operations executed by the kernels.

    Multiply-accumulates count one each.  Pooling charges a 2x2 window scan
    (4 operations) for every input value it reads.
    """

    def __init__(self):
        self.count = 0

    def __enter__(self):
        if not hasattr(_local, "counters"):
            _local.counters = []
        _local.counters.append(self)
        return self

    def __exit__(self, *exc):
        _local.counters.remove(self)
        return False


def _tally(n):
    for counter in getattr(_local, "counters", ()):
        counter.count += int(n)


# --------------------------------------------------------------------------
# helpers

def _batch4(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], False
    if x.ndim == 4:
        return x, True
    raise ConfigurationError(f"expected (H, W, C) or (B, H, W, C) tensor, got shape {x.shape}")


def _batch2(x):
    x = np.asarray(x)
    if x.ndim == 1:
        return x[None], False
    if x.ndim == 2:
        return x, True
    raise ConfigurationError(f"expected a vector or a batch of vectors, got shape {x.shape}")


def _same_pads(r):
    # even kernels put the extra row/column on the bottom/right
    top = (r - 1) // 2
    return top, r - 1 - top


def _im2col(x, r):
    top, bottom = _same_pads(r)
    xp = np.pad(x, ((0, 0), (top, bottom), (top, bottom), (0, 0)))
    b, h, w, c = x.shape
    win = sliding_window_view(xp, (r, r), axis=(1, 2))  # (B, H, W, C, r, r)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, r * r * c)


# --------------------------------------------------------------------------
# convolution

def conv2d(x, params: ConvLayerParams) -> np.ndarray:
    """Stride-1 same-padded convolution; output keeps the input's spatial size."""
    xb, batched = _batch4(x)
    if xb.shape[3] != params.in_channels:
        raise ConfigurationError(
            f"conv expects {params.in_channels} input channels, got {xb.shape[3]}"
        )
    b, h, w, c = xb.shape
    r, n = params.kernel_size, params.out_channels
    cols = _im2col(xb, r)
    out = cols @ params.weights.reshape(r * r * c, n) + params.biases
    _tally(b * h * w * r * r * c * n)
    out = out.reshape(b, h, w, n)
    return out if batched else out[0]


def conv2d_backward(x, params: ConvLayerParams, upstream) -> GradientBundle:
    xb, batched = _batch4(x)
    ub, _ = _batch4(upstream)
    b, h, w, c = xb.shape
    r, n = params.kernel_size, params.out_channels
    if c != params.in_channels or ub.shape != (b, h, w, n):
        raise ConfigurationError(
            f"upstream shape {ub.shape} inconsistent with conv output {(b, h, w, n)}"
        )
    cols = _im2col(xb, r)
    d2 = ub.reshape(-1, n)
    dw = (cols.T @ d2).reshape(r, r, c, n)
    db = d2.sum(axis=0)
    dcols = (d2 @ params.weights.reshape(r * r * c, n).T).reshape(b, h, w, r, r, c)
    top, _ = _same_pads(r)
    dxp = np.zeros((b, h + r - 1, w + r - 1, c), dtype=dcols.dtype)
    for i in range(r):
        for j in range(r):
            dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, top:top + h, top:top + w, :]
    return GradientBundle(dw, db, dx if batched else dx[0])


# --------------------------------------------------------------------------
# pooling

def maxpool2x2(x):
    """Non-overlapping 2x2 max pooling with stride 2.

    A trailing odd row or column is dropped.  Ties resolve to the first maximum
    in row-major order inside the window.  Returns ``(pooled, PoolIndex)``.
    """
    xb, batched = _batch4(x)
    b, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ConfigurationError(f"max pooling needs at least 2x2 input, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    win = (
        xb[:, :2 * h2, :2 * w2, :]
        .reshape(b, h2, 2, w2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, h2, w2, c, 4)
    )
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    _tally(4 * b * (2 * h2) * (2 * w2) * c)
    index = PoolIndex(xb.shape, idx.astype(np.uint8), batched)
    return (out if batched else out[0]), index


def maxpool2x2_backward(index: PoolIndex, upstream) -> np.ndarray:
    ub, _ = _batch4(upstream)
    b, h, w, c = index.input_shape
    h2, w2 = h // 2, w // 2
    if ub.shape != (b, h2, w2, c):
        raise ConfigurationError(
            f"upstream shape {ub.shape} inconsistent with pooled shape {(b, h2, w2, c)}"
        )
    dwin = np.zeros((b, h2, w2, c, 4), dtype=ub.dtype)
    np.put_along_axis(dwin, index.argmax[..., None].astype(np.intp), ub[..., None], axis=-1)
    dcrop = dwin.reshape(b, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * h2, 2 * w2, c)
    dx = np.zeros((b, h, w, c), dtype=ub.dtype)
    dx[:, :2 * h2, :2 * w2, :] = dcrop
    return dx if index.batched else dx[0]


# --------------------------------------------------------------------------
# dense, activations

def dense(x, params: DenseLayerParams) -> np.ndarray:
    xb, batched = _batch2(x)
    if xb.shape[1] != params.in_features:
        raise ConfigurationError(
            f"dense expects {params.in_features} inputs, got {xb.shape[1]}"
        )
    _tally(xb.shape[0] * params.in_features * params.out_features)
    out = xb @ params.weights + params.biases
    return out if batched else out[0]


def dense_backward(x, params: DenseLayerParams, upstream) -> GradientBundle:
    xb, batched = _batch2(x)
    ub, _ = _batch2(upstream)
    if xb.shape[1] != params.in_features or ub.shape != (xb.shape[0], params.out_features):
        raise ConfigurationError(
            f"dense backward: input {xb.shape} / upstream {ub.shape} do not match "
            f"layer {params.weights.shape}"
        )
    dw = xb.T @ ub
    db = ub.sum(axis=0)
    dx = ub @ params.weights.T
    return GradientBundle(dw, db, dx if batched else dx[0])


def relu(x) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x, upstream) -> np.ndarray:
    # derivative taken as 0 at exactly 0
    return np.where(np.asarray(x) > 0, upstream, 0).astype(np.result_type(upstream))


def softmax(z, axis=-1) -> np.ndarray:
    z = np.asarray(z)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)
