"""8-bit post-training quantization and integer inference.

Weights are quantized per tensor, symmetric and signed (zero point 0).
Activations are quantized per site, asymmetric and unsigned, from the min/max
observed on calibration windows.  Activation sites are the network input, the
output of every conv block (shared by its max pool), the temporal combination,
and every hidden dense layer.  Kernels accumulate in int32 and requantize to
the next site; the final accumulator is dequantized and passed through a
floating-point softmax.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from ._binary import Reader, Writer
from .data import to_float
from .errors import FormatError, InputError
from .model import (
    Model,
    ModelConfig,
    _check_frames,
    decode_config,
    encode_config,
    expected_shapes,
    temporal_combine,
)

__all__ = [
    "QuantParams",
    "QuantizedLayer",
    "QuantizedModel",
    "round_half_away",
    "quantize_tensor",
    "dequantize_tensor",
    "weight_params",
    "observed_range",
    "activation_params",
    "calibrate",
    "predict_windows_quantized",
    "classify_window_quantized",
    "predict_labels_quantized",
    "save_quantized",
    "load_quantized",
]

QUANT_MAGIC = b"STNQ"
QUANT_VERSION = 1
RANGE_EPS = 1e-6


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    signed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scale", float(np.float32(self.scale)))
        if not self.scale > 0:
            raise InputError(f"quantization scale must be positive, got {self.scale}")
        if not self.qmin <= self.zero_point <= self.qmax:
            raise InputError(f"zero point {self.zero_point} outside [{self.qmin}, {self.qmax}]")

    @property
    def qmin(self) -> int:
        return -128 if self.signed else 0

    @property
    def qmax(self) -> int:
        return 127 if self.signed else 255

    @property
    def dtype(self):
        return np.int8 if self.signed else np.uint8


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_tensor(values, params: QuantParams) -> np.ndarray:
    q = round_half_away(np.asarray(values, dtype=np.float64) / params.scale) + params.zero_point
    return np.clip(q, params.qmin, params.qmax).astype(params.dtype)


def dequantize_tensor(q, params: QuantParams) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) - params.zero_point) * params.scale


def weight_params(weights) -> QuantParams:
    peak = float(np.max(np.abs(weights))) if np.size(weights) else 0.0
    return QuantParams(max(peak, RANGE_EPS) / 127.0, 0, signed=True)


def observed_range(values):
    """(min, max) of ``values``; a degenerate range is widened to [min, min + eps]."""
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        hi = lo + RANGE_EPS
    return lo, hi


def activation_params(lo: float, hi: float) -> QuantParams:
    """Unsigned asymmetric parameters covering [lo, hi] and real zero."""
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi - lo < RANGE_EPS:
        hi = lo + RANGE_EPS
    scale = float(np.float32((hi - lo) / 255.0))
    zp = int(np.clip(round_half_away(-lo / scale), 0, 255))
    return QuantParams(scale, zp, signed=False)


@dataclass
class QuantizedLayer:
    weights: np.ndarray  # int8, same shape as the float weights
    weight_params: QuantParams
    biases: np.ndarray  # int32, folded as round(b / (s_in * s_w))


@dataclass
class QuantizedModel:
    config: ModelConfig
    sites: list  # QuantParams: input, conv 1..l, temporal, dense 1..b
    layers: list  # QuantizedLayer: conv 1..l, temporal, dense 1..b, softmax

    @property
    def input_params(self) -> QuantParams:
        return self.sites[0]

    def layer_input(self, i: int) -> QuantParams:
        """Activation site feeding layer ``i`` (layers and sites line up one-to-one)."""
        return self.sites[i]


# --------------------------------------------------------------------------
# calibration

def _float_sites(model: Model, windows):
    """Activation values at every site for a float batch of windows."""
    b, t = windows.shape[:2]
    x = windows.reshape((b * t,) + windows.shape[2:]).astype(model.dtype, copy=False)
    sites = [x]
    for layer in model.conv:
        act = nn.relu(nn.conv2d(x, layer))
        sites.append(act)
        x, _ = nn.maxpool2x2(act)
    combined = temporal_combine(model.temporal, x.reshape((b, t) + x.shape[1:]))
    sites.append(combined)
    h = combined.reshape(b, -1)
    for layer in model.dense[:-1]:
        h = nn.relu(nn.dense(h, layer))
        sites.append(h)
    return sites


def _fold_bias(biases, in_params: QuantParams, wp: QuantParams):
    q = round_half_away(np.asarray(biases, dtype=np.float64) / (in_params.scale * wp.scale))
    return np.clip(q, -(2 ** 31), 2 ** 31 - 1).astype(np.int32)


def calibrate(model: Model, calibration_windows, batch_size: int = 64) -> QuantizedModel:
    """Quantize ``model`` using activation ranges observed on the given windows."""
    windows = np.asarray(calibration_windows)
    if windows.ndim != 5 or len(windows) == 0:
        raise InputError("calibration needs at least one (T, H, W, C) window")
    lows, highs = None, None
    for start in range(0, len(windows), batch_size):
        chunk = windows[start:start + batch_size]
        chunk = to_float(chunk, model.dtype) if chunk.dtype == np.uint8 else chunk
        sites = _float_sites(model, _check_frames(model.config, chunk))
        lo = [float(s.min()) for s in sites]
        hi = [float(s.max()) for s in sites]
        lows = lo if lows is None else [min(a, b) for a, b in zip(lows, lo)]
        highs = hi if highs is None else [max(a, b) for a, b in zip(highs, hi)]
    site_params = [activation_params(*observed_range([lo, hi])) for lo, hi in zip(lows, highs)]

    float_layers = list(model.conv) + [model.temporal] + list(model.dense)
    layers = []
    for i, layer in enumerate(float_layers):
        wp = weight_params(layer.weights)
        layers.append(QuantizedLayer(
            quantize_tensor(layer.weights, wp), wp,
            _fold_bias(layer.biases, site_params[i], wp),
        ))
    return QuantizedModel(model.config, site_params, layers)


# --------------------------------------------------------------------------
# integer inference

def _requantize(acc, in_scale, w_scale, out: QuantParams, relu: bool):
    q = round_half_away(acc * (in_scale * w_scale / out.scale)) + out.zero_point
    lower = out.zero_point if relu else out.qmin
    return np.clip(q, lower, out.qmax).astype(out.dtype)


def _centered(q, params: QuantParams):
    return q.astype(np.int32) - np.int32(params.zero_point)


def _conv_int(xc, layer: QuantizedLayer):
    b, h, w, c = xc.shape
    r, n = layer.weights.shape[0], layer.weights.shape[3]
    cols = nn._im2col(xc, r)  # zero padding is real zero after centering
    acc = cols @ layer.weights.reshape(r * r * c, n).astype(np.int32) + layer.biases
    nn._tally(b * h * w * r * r * c * n)
    return acc.reshape(b, h, w, n)


def predict_windows_quantized(qmodel: QuantizedModel, windows) -> np.ndarray:
    """Class probabilities ``(B, k)`` for float or uint8 windows ``(B, T, H, W, C)``."""
    windows = _check_frames(qmodel.config, windows)
    if windows.ndim != 5 or windows.shape[1] != qmodel.config.T:
        raise InputError(
            f"expected windows of shape (B, {qmodel.config.T}, H, W, C), got {windows.shape}"
        )
    if windows.dtype == np.uint8:
        windows = to_float(windows)
    b, t = windows.shape[:2]
    cfg = qmodel.config
    sites, layers = qmodel.sites, qmodel.layers

    x = quantize_tensor(windows.reshape((b * t,) + windows.shape[2:]), sites[0])
    for i in range(cfg.l):
        acc = _conv_int(_centered(x, sites[i]), layers[i])
        act = _requantize(acc, sites[i].scale, layers[i].weight_params.scale, sites[i + 1], True)
        x, _ = nn.maxpool2x2(act)

    i = cfg.l
    feats = _centered(x.reshape((b, t) + x.shape[1:]), sites[i])
    tw = layers[i].weights.astype(np.int32)
    acc = np.einsum("btmnc,ct->bmnc", feats, tw) + layers[i].biases
    nn._tally(b * tw.size * feats.shape[2] * feats.shape[3])
    h = _requantize(acc, sites[i].scale, layers[i].weight_params.scale, sites[i + 1], False)
    h = h.reshape(b, -1)

    for j in range(cfg.b + 1):
        i = cfg.l + 1 + j
        layer = layers[i]
        acc = _centered(h, sites[i]) @ layer.weights.astype(np.int32) + layer.biases
        nn._tally(b * layer.weights.size)
        if j < cfg.b:
            h = _requantize(acc, sites[i].scale, layer.weight_params.scale, sites[i + 1], True)
    logits = acc * (sites[-1].scale * layers[-1].weight_params.scale)
    return nn.softmax(logits)


def classify_window_quantized(qmodel: QuantizedModel, frames):
    frames = np.stack([np.asarray(f) for f in frames])
    if len(frames) != qmodel.config.T:
        raise InputError(f"expected {qmodel.config.T} frames, got {len(frames)}")
    probs = predict_windows_quantized(qmodel, frames[None])[0]
    return int(np.argmax(probs)), probs


def predict_labels_quantized(qmodel: QuantizedModel, windows, batch_size: int = 64):
    out = [predict_windows_quantized(qmodel, windows[s:s + batch_size]).argmax(axis=1)
           for s in range(0, len(windows), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.intp)


# --------------------------------------------------------------------------
# quantized weight file

def _site_count(config: ModelConfig) -> int:
    return 1 + config.l + 1 + config.b


def quantized_to_bytes(qmodel: QuantizedModel) -> bytes:
    w = Writer()
    w.raw(QUANT_MAGIC)
    w.u32(QUANT_VERSION)
    encode_config(w, qmodel.config)
    w.u32(len(qmodel.sites))
    for p in qmodel.sites:
        w.f32(p.scale)
        w.i32(p.zero_point)
    for layer in qmodel.layers:
        w.f32(layer.weight_params.scale)
        w.i32(layer.weight_params.zero_point)
        w.array(layer.weights, np.int8)
        w.array(layer.biases, np.int32)
    return w.getvalue()


def _read_params(rd: Reader, signed: bool, what: str) -> QuantParams:
    at = rd.offset
    scale, zp = rd.f32(f"{what} scale"), rd.i32(f"{what} zero point")
    try:
        return QuantParams(scale, zp, signed)
    except InputError as exc:
        raise FormatError(f"{what}: {exc}", at) from exc


def quantized_from_bytes(data: bytes) -> QuantizedModel:
    rd = Reader(data)
    rd.expect_magic(QUANT_MAGIC, QUANT_VERSION)
    config = decode_config(rd)
    at = rd.offset
    count = rd.u32("site count")
    if count != _site_count(config):
        raise FormatError(f"{count} activation sites, config implies {_site_count(config)}", at)
    sites = [_read_params(rd, False, f"site {i}") for i in range(count)]
    shapes = expected_shapes(config)
    layers = []
    for (wname, wshape), (_, bshape) in zip(shapes[0::2], shapes[1::2]):
        wp = _read_params(rd, True, wname)
        q = rd.array(np.int8, wshape, wname)
        bias = rd.array(np.int32, bshape, wname.replace("weights", "biases"))
        layers.append(QuantizedLayer(q, wp, bias))
    rd.expect_end()
    return QuantizedModel(config, sites, layers)


def save_quantized(qmodel: QuantizedModel, path):
    Path(path).write_bytes(quantized_to_bytes(qmodel))


def load_quantized(path) -> QuantizedModel:
    return quantized_from_bytes(Path(path).read_bytes())
