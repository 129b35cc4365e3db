"""The spatial-temporal network: per-frame extractor g and temporal head h.

g applies ``l`` blocks of (same-padded conv -> ReLU -> 2x2 max pool) to one
frame.  h stacks the last ``T`` feature maps per channel, mixes them with one
1x1 temporal convolution per channel, flattens row-major and runs ``b`` dense
ReLU layers followed by a ``k``-way softmax layer.

Windows are ordered oldest first: index 0 is the oldest frame, ``T - 1`` the
newest.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from ._binary import Reader, Writer
from .errors import ConfigurationError, FormatError, InputError, ShapeError, StateError

__all__ = [
    "ModelConfig",
    "TemporalConvParams",
    "Model",
    "GOLFDB_CONFIG",
    "JESTER_CONFIG",
    "DESK_CONFIG",
    "build_model",
    "extract_features",
    "temporal_combine",
    "temporal_combine_backward",
    "head_logits",
    "predict_windows",
    "classify_window",
    "forward",
    "backward",
    "save_weights",
    "load_weights",
    "weights_to_bytes",
    "weights_from_bytes",
    "parse_config_text",
    "load_config",
    "format_config",
]

WEIGHTS_MAGIC = b"STNW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_h: int
    input_w: int
    input_c: int
    T: int
    n: tuple
    r: tuple
    d: tuple
    k: int

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        r = tuple(int(v) for v in np.atleast_1d(self.r))
        d = tuple(int(v) for v in np.atleast_1d(self.d))
        if len(r) == 1 and len(n) > 1:
            r = r * len(n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "d", d)
        self._validate()

    def _validate(self):
        for name in ("input_h", "input_w", "input_c", "T"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.k < 2:
            raise ConfigurationError(f"k must be >= 2, got {self.k}")
        if not self.n:
            raise ConfigurationError("at least one conv block is required")
        if len(self.r) != len(self.n):
            raise ConfigurationError(
                f"{len(self.n)} conv blocks but {len(self.r)} kernel sizes"
            )
        if not self.d:
            raise ConfigurationError("at least one dense layer is required")
        if min(self.n) < 1 or min(self.r) < 1 or min(self.d) < 1:
            raise ConfigurationError("filter counts, kernel sizes and dense widths must be >= 1")
        h, w = self.input_h, self.input_w
        for i in range(len(self.n)):
            if h < 2 or w < 2:
                raise ConfigurationError(
                    f"conv block {i + 1}: {h}x{w} map is too small for 2x2 pooling"
                )
            h, w = h // 2, w // 2
        if self.input_h * self.input_w * self.input_c <= h * w * self.n[-1]:
            raise ConfigurationError(
                f"conv block {len(self.n)}: output {h}x{w}x{self.n[-1]} does not reduce "
                f"the {self.input_h}x{self.input_w}x{self.input_c} input"
            )

    @property
    def l(self) -> int:
        return len(self.n)

    @property
    def b(self) -> int:
        return len(self.d)

    @property
    def input_shape(self) -> tuple:
        return (self.input_h, self.input_w, self.input_c)

    def block_inputs(self):
        """(height, width, in_channels) seen by each conv block."""
        dims = []
        h, w, c = self.input_shape
        for n in self.n:
            dims.append((h, w, c))
            h, w, c = h // 2, w // 2, n
        return dims

    @property
    def output_shape(self) -> tuple:
        h, w, _ = self.block_inputs()[-1]
        return (h // 2, w // 2, self.n[-1])

    @property
    def flat_features(self) -> int:
        return int(np.prod(self.output_shape))

    def with_window(self, T: int) -> "ModelConfig":
        return dataclasses.replace(self, T=T)


GOLFDB_CONFIG = ModelConfig(160, 160, 3, T=16, n=(4, 8, 16, 32, 64), r=2, d=(64, 32), k=9)
JESTER_CONFIG = ModelConfig(120, 120, 3, T=10, n=(4, 8, 16, 32), r=2, d=(16,), k=3)
DESK_CONFIG = ModelConfig(32, 32, 1, T=8, n=(4, 8, 8), r=3, d=(16,), k=3)


@dataclass
class TemporalConvParams:
    """One 1x1 temporal convolution per channel: ``weights[c, t]``, t=0 oldest."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        self.biases = np.asarray(self.biases)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ConfigurationError(
                f"temporal weights {self.weights.shape} / biases {self.biases.shape} inconsistent"
            )

    @property
    def channels(self) -> int:
        return self.weights.shape[0]

    @property
    def T(self) -> int:
        return self.weights.shape[1]


@dataclass
class Model:
    config: ModelConfig
    conv: list
    temporal: TemporalConvParams
    dense: list = field(default_factory=list)  # b hidden layers, then the softmax layer

    def parameters(self):
        """Parameter arrays in canonical (file) order.  Views, not copies."""
        out = []
        for layer in self.conv:
            out += [layer.weights, layer.biases]
        out += [self.temporal.weights, self.temporal.biases]
        for layer in self.dense:
            out += [layer.weights, layer.biases]
        return out

    def parameter_names(self):
        names = []
        for i in range(len(self.conv)):
            names += [f"conv{i + 1}.weights", f"conv{i + 1}.biases"]
        names += ["temporal.weights", "temporal.biases"]
        for j in range(len(self.dense) - 1):
            names += [f"dense{j + 1}.weights", f"dense{j + 1}.biases"]
        names += ["softmax.weights", "softmax.biases"]
        return names

    def weight_count(self) -> int:
        """Number of non-bias parameter values."""
        return sum(p.size for p, name in zip(self.parameters(), self.parameter_names())
                   if name.endswith("weights"))

    def astype(self, dtype) -> "Model":
        m = copy.deepcopy(self)
        for layer in m.conv + m.dense + [m.temporal]:
            layer.weights = layer.weights.astype(dtype)
            layer.biases = layer.biases.astype(dtype)
        return m

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    @property
    def dtype(self):
        return self.conv[0].weights.dtype


def expected_shapes(config: ModelConfig):
    """(name, shape) of every parameter tensor, in canonical order."""
    shapes = []
    for i, ((_, _, c), n, r) in enumerate(zip(config.block_inputs(), config.n, config.r)):
        shapes += [(f"conv{i + 1}.weights", (r, r, c, n)), (f"conv{i + 1}.biases", (n,))]
    c_out = config.n[-1]
    shapes += [("temporal.weights", (c_out, config.T)), ("temporal.biases", (c_out,))]
    widths = [config.flat_features] + list(config.d)
    for j in range(config.b):
        shapes += [(f"dense{j + 1}.weights", (widths[j], widths[j + 1])),
                   (f"dense{j + 1}.biases", (widths[j + 1],))]
    shapes += [("softmax.weights", (config.d[-1], config.k)), ("softmax.biases", (config.k,))]
    return shapes


def _from_arrays(config: ModelConfig, arrays) -> Model:
    it = iter(arrays)
    conv = [nn.ConvLayerParams(next(it), next(it)) for _ in range(config.l)]
    temporal = TemporalConvParams(next(it), next(it))
    dense = [nn.DenseLayerParams(next(it), next(it)) for _ in range(config.b + 1)]
    return Model(config, conv, temporal, dense)


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    """Fresh model with weights uniform in +-sqrt(6 / fan_in) and zero biases."""
    rng = np.random.default_rng(seed)
    arrays = []
    for name, shape in expected_shapes(config):
        if name.endswith("biases"):
            arrays.append(np.zeros(shape, dtype=np.float32))
            continue
        if name.startswith("conv"):
            fan_in = shape[0] * shape[1] * shape[2]
        elif name.startswith("temporal"):
            fan_in = shape[1]
        else:
            fan_in = shape[0]
        limit = np.sqrt(6.0 / fan_in)
        arrays.append(rng.uniform(-limit, limit, size=shape).astype(np.float32))
    return _from_arrays(config, arrays)


# --------------------------------------------------------------------------
# inference

def _check_frames(config: ModelConfig, frames):
    frames = np.asarray(frames)
    if frames.shape[-3:] != config.input_shape:
        raise InputError(
            f"frame shape {frames.shape[-3:]} does not match model input {config.input_shape}"
        )
    return frames


def extract_features(model: Model, frames) -> np.ndarray:
    """Apply g to one frame ``(H, W, C)`` or a batch ``(B, H, W, C)``."""
    x = _check_frames(model.config, frames)
    if x.ndim not in (3, 4):
        raise InputError(f"expected a frame or a batch of frames, got shape {x.shape}")
    x = x.astype(model.dtype, copy=False)
    for layer in model.conv:
        x, _ = nn.maxpool2x2(nn.relu(nn.conv2d(x, layer)))
    return x


def temporal_combine(params: TemporalConvParams, window) -> np.ndarray:
    """Mix ``T`` feature maps per channel.  ``window`` is ``(T, M, N, C)`` or batched."""
    window = np.asarray(window)
    if window.ndim not in (4, 5):
        raise StateError(f"expected (T, M, N, C) window, got shape {window.shape}")
    t_axis = window.ndim - 4
    if window.shape[t_axis] != params.T:
        raise StateError(f"window holds {window.shape[t_axis]} maps, expected T={params.T}")
    if window.shape[-1] != params.channels:
        raise StateError(
            f"window has {window.shape[-1]} channels, temporal conv expects {params.channels}"
        )
    m, n = window.shape[-3], window.shape[-2]
    batch = window.shape[0] if window.ndim == 5 else 1
    nn._tally(batch * params.channels * params.T * m * n)
    out = np.einsum("...tmnc,ct->...mnc", window, params.weights) + params.biases
    return out.astype(window.dtype, copy=False)


def temporal_combine_backward(params: TemporalConvParams, window, upstream):
    window, upstream = np.asarray(window), np.asarray(upstream)
    single = window.ndim == 4
    if single:
        window, upstream = window[None], upstream[None]
    dw = np.einsum("bmnc,btmnc->ct", upstream, window)
    db = upstream.reshape(-1, params.channels).sum(axis=0)
    dwin = np.einsum("bmnc,ct->btmnc", upstream, params.weights)
    return nn.GradientBundle(dw, db, dwin[0] if single else dwin)


def head_logits(model: Model, combined) -> np.ndarray:
    """Flatten the combined map(s) and run the dense stack up to the logits."""
    combined = np.asarray(combined)
    single = combined.ndim == 3
    x = combined.reshape(1 if single else combined.shape[0], -1)
    for layer in model.dense[:-1]:
        x = nn.relu(nn.dense(x, layer))
    z = nn.dense(x, model.dense[-1])
    return z[0] if single else z


def predict_windows(model: Model, windows) -> np.ndarray:
    """Class probabilities ``(B, k)`` for windows shaped ``(B, T, H, W, C)``."""
    windows = _check_frames(model.config, windows)
    if windows.ndim != 5 or windows.shape[1] != model.config.T:
        raise InputError(
            f"expected windows of shape (B, {model.config.T}, H, W, C), got {windows.shape}"
        )
    b, t = windows.shape[:2]
    feats = extract_features(model, windows.reshape((b * t,) + windows.shape[2:]))
    feats = feats.reshape((b, t) + feats.shape[1:])
    return nn.softmax(head_logits(model, temporal_combine(model.temporal, feats)))


def classify_window(model: Model, frames):
    """Label and probability vector for exactly ``T`` frames, oldest first."""
    frames = _check_frames(model.config, np.stack([np.asarray(f) for f in frames]))
    if frames.ndim != 4 or len(frames) != model.config.T:
        raise InputError(f"expected {model.config.T} frames, got {len(frames)}")
    probs = predict_windows(model, frames[None])[0]
    return int(np.argmax(probs)), probs


# --------------------------------------------------------------------------
# training-time forward/backward over batches of windows

def forward(model: Model, windows):
    """Logits ``(B, k)`` plus the cache ``backward`` needs."""
    windows = _check_frames(model.config, windows)
    b, t = windows.shape[:2]
    x = windows.reshape((b * t,) + windows.shape[2:]).astype(model.dtype, copy=False)
    blocks = []
    for layer in model.conv:
        pre = nn.conv2d(x, layer)
        pooled, index = nn.maxpool2x2(nn.relu(pre))
        blocks.append((x, pre, index))
        x = pooled
    feats = x.reshape((b, t) + x.shape[1:])
    combined = temporal_combine(model.temporal, feats)
    h = combined.reshape(b, -1)
    dense_cache = []
    for layer in model.dense[:-1]:
        pre = nn.dense(h, layer)
        dense_cache.append((h, pre))
        h = nn.relu(pre)
    logits = nn.dense(h, model.dense[-1])
    cache = {"blocks": blocks, "feats": feats, "combined": combined,
             "dense": dense_cache, "last_in": h}
    return logits, cache


def backward(model: Model, cache, dlogits):
    """Gradients for every parameter, aligned with ``model.parameters()``."""
    grads_dense = []
    g = nn.dense_backward(cache["last_in"], model.dense[-1], dlogits)
    grads_dense.append((g.weights, g.biases))
    up = g.input
    for layer, (h, pre) in zip(reversed(model.dense[:-1]), reversed(cache["dense"])):
        up = nn.relu_backward(pre, up)
        g = nn.dense_backward(h, layer, up)
        grads_dense.append((g.weights, g.biases))
        up = g.input
    grads_dense.reverse()

    up = up.reshape(cache["combined"].shape)
    gt = temporal_combine_backward(model.temporal, cache["feats"], up)
    feats = cache["feats"]
    up = gt.input.reshape((-1,) + feats.shape[2:])

    grads_conv = []
    for layer, (x, pre, index) in zip(reversed(model.conv), reversed(cache["blocks"])):
        up = nn.maxpool2x2_backward(index, up)
        up = nn.relu_backward(pre, up)
        g = nn.conv2d_backward(x, layer, up)
        grads_conv.append((g.weights, g.biases))
        up = g.input
    grads_conv.reverse()

    out = []
    for w, bias in grads_conv:
        out += [w, bias]
    out += [gt.weights, gt.biases]
    for w, bias in grads_dense:
        out += [w, bias]
    return out


# --------------------------------------------------------------------------
# weight file

def encode_config(w: Writer, config: ModelConfig):
    for v in (config.input_h, config.input_w, config.input_c, config.T, config.l):
        w.u32(v)
    for arr in (config.n, config.r):
        w.u32(len(arr))
        for v in arr:
            w.u32(v)
    w.u32(config.b)
    w.u32(len(config.d))
    for v in config.d:
        w.u32(v)
    w.u32(config.k)


def decode_config(rd: Reader) -> ModelConfig:
    start = rd.offset
    h, wd, c, t, l = (rd.u32("config") for _ in range(5))
    lists = []
    for name in ("n", "r"):
        at = rd.offset
        length = rd.u32(f"config.{name} length")
        if length != l:
            raise FormatError(f"config.{name} has {length} entries but l={l}", at)
        lists.append(tuple(rd.u32(f"config.{name}") for _ in range(length)))
    b = rd.u32("config.b")
    at = rd.offset
    length = rd.u32("config.d length")
    if length != b:
        raise FormatError(f"config.d has {length} entries but b={b}", at)
    d = tuple(rd.u32("config.d") for _ in range(length))
    k = rd.u32("config.k")
    try:
        return ModelConfig(h, wd, c, t, lists[0], lists[1], d, k)
    except ConfigurationError as exc:
        raise FormatError(f"invalid model config: {exc}", start) from exc


def check_config(found: ModelConfig, expected: ModelConfig | None):
    if expected is None or found == expected:
        return
    for (name, got), (_, want) in zip(expected_shapes(found), expected_shapes(expected)):
        if got != want:
            raise ShapeError(f"layer {name}: file has shape {got}, expected {want}", layer=name)
    raise ShapeError(f"file config {found} differs from expected {expected}")


def weights_to_bytes(model: Model) -> bytes:
    w = Writer()
    w.raw(WEIGHTS_MAGIC)
    w.u32(WEIGHTS_VERSION)
    encode_config(w, model.config)
    for (name, shape), arr in zip(expected_shapes(model.config), model.parameters()):
        if arr.shape != shape:
            raise ShapeError(f"layer {name}: model has shape {arr.shape}, config implies {shape}",
                             layer=name)
        w.array(arr, np.float32)
    return w.getvalue()


def weights_from_bytes(data: bytes, expected_config: ModelConfig | None = None) -> Model:
    rd = Reader(data)
    rd.expect_magic(WEIGHTS_MAGIC, WEIGHTS_VERSION)
    config = decode_config(rd)
    check_config(config, expected_config)
    arrays = [rd.array(np.float32, shape, name) for name, shape in expected_shapes(config)]
    rd.expect_end()
    return _from_arrays(config, arrays)


def save_weights(model: Model, path):
    Path(path).write_bytes(weights_to_bytes(model))


def load_weights(path, expected_config: ModelConfig | None = None) -> Model:
    return weights_from_bytes(Path(path).read_bytes(), expected_config)


# --------------------------------------------------------------------------
# text config files: ``key = value`` lines, lists comma separated

_CONFIG_KEYS = ("input_h", "input_w", "input_c", "T", "l", "n", "r", "b", "d", "k")


def parse_config_text(text: str) -> ModelConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = tuple(int(v) for v in value.split(","))
        except ValueError:
            raise ConfigurationError(f"line {lineno}: {key} must be integers, got {value!r}")
    missing = [k for k in _CONFIG_KEYS if k not in values and k not in ("l", "b")]
    if missing:
        raise ConfigurationError(f"missing config keys: {', '.join(missing)}")
    config = ModelConfig(
        values["input_h"][0], values["input_w"][0], values["input_c"][0], values["T"][0],
        values["n"], values["r"], values["d"], values["k"][0],
    )
    if "l" in values and values["l"][0] != config.l:
        raise ConfigurationError(f"l = {values['l'][0]} but n lists {config.l} blocks")
    if "b" in values and values["b"][0] != config.b:
        raise ConfigurationError(f"b = {values['b'][0]} but d lists {config.b} layers")
    return config


def load_config(path) -> ModelConfig:
    return parse_config_text(Path(path).read_text())


def format_config(config: ModelConfig) -> str:
    join = lambda xs: ",".join(str(v) for v in xs)  # noqa: E731
    return (
        f"input_h = {config.input_h}\ninput_w = {config.input_w}\ninput_c = {config.input_c}\n"
        f"T = {config.T}\nl = {config.l}\nn = {join(config.n)}\nr = {join(config.r)}\n"
        f"b = {config.b}\nd = {join(config.d)}\nk = {config.k}\n"
    )
