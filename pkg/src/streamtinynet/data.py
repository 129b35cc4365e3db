"""Synthetic streaming-video clips whose classes differ only in time.

Every clip shows a textured static background, one bright blob, and per-frame
sensor noise.  The classes:

``static``  the blob stays where it is;
``up``      the blob travels upward across the clip;
``down``    an independently drawn ``up`` clip played backwards;
``left`` / ``right``  the horizontal analogues (``right`` is a reversed ``left``).

Because ``down`` clips are frame reversals of ``up`` clips, any single frame
of one class is distributed exactly like a frame of the other: only the order
of frames tells them apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._binary import Reader, Writer
from .errors import ConfigurationError, FormatError, InputError

__all__ = [
    "DatasetSpec",
    "Dataset",
    "generate_dataset",
    "sample_uniform_indices",
    "trailing_window",
    "uniform_windows",
    "to_float",
    "split_indices",
    "save_dataset",
    "load_dataset",
]

DATASET_MAGIC = b"STND"
DATASET_VERSION = 1

_KINDS = ("static", "up", "down", "left", "right")
_MIRROR = {"left": "right", "right": "left"}


@dataclass(frozen=True)
class DatasetSpec:
    clips_per_class: int = 600
    frames: int = 24
    height: int = 32
    width: int = 32
    channels: int = 1
    classes: tuple = ("static", "up", "down")
    noise: float = 8.0
    seed: int = 7

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ConfigurationError(f"frames must be at least 8x8, got {self.height}x{self.width}")
        if self.channels < 1 or self.frames < 1 or self.clips_per_class < 1:
            raise ConfigurationError("channels, frames and clips_per_class must be >= 1")
        if len(self.classes) < 2:
            raise ConfigurationError("at least two classes are required")
        bad = [c for c in self.classes if c not in _KINDS]
        if bad or len(set(self.classes)) != len(self.classes):
            raise ConfigurationError(f"classes must be distinct members of {_KINDS}, got {self.classes}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)


@dataclass
class Dataset:
    frames: np.ndarray  # (clips, F, H, W, C) uint8
    labels: np.ndarray  # (clips,) uint8
    num_classes: int
    # label each class maps to under a horizontal flip
    flip_label_map: tuple = field(default=None)

    def __post_init__(self):
        if self.flip_label_map is None:
            self.flip_label_map = tuple(range(self.num_classes))

    def __len__(self):
        return len(self.labels)

    @property
    def clip_shape(self) -> tuple:
        return self.frames.shape[1:]


def _flip_map(classes):
    return tuple(classes.index(_MIRROR.get(c, c)) if _MIRROR.get(c, c) in classes
                 else i for i, c in enumerate(classes))


def _blob(h, w, cy, cx, sigma):
    yy, xx = np.mgrid[0:h, 0:w]
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))


def _background(rng, spec):
    # smooth texture: coarse random grid upsampled to the frame size
    gh, gw = max(2, spec.height // 4), max(2, spec.width // 4)
    coarse = rng.uniform(0.0, 1.0, size=(gh, gw, spec.channels))
    rows = np.linspace(0, gh - 1, spec.height).round().astype(int)
    cols = np.linspace(0, gw - 1, spec.width).round().astype(int)
    level = rng.uniform(30.0, 70.0)
    return level + 40.0 * coarse[rows][:, cols]


def _render(rng, spec, track):
    """Frames for a blob following ``track`` (F x 2 array of row, col)."""
    bg = _background(rng, spec)
    sigma = rng.uniform(1.5, 2.5)
    amp = rng.uniform(110.0, 150.0)
    tint = rng.uniform(0.8, 1.0, size=spec.channels)
    frames = np.empty((spec.frames, spec.height, spec.width, spec.channels), dtype=np.uint8)
    for t, (cy, cx) in enumerate(track):
        img = bg + amp * _blob(spec.height, spec.width, cy, cx, sigma)[..., None] * tint
        img = img + rng.normal(0.0, spec.noise, size=img.shape)
        frames[t] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return frames


def _moving_track(rng, spec, axis):
    # travel towards smaller coordinates along ``axis`` (0 = upward, 1 = leftward)
    size = (spec.height, spec.width)
    along, across = size[axis], size[1 - axis]
    start = rng.uniform(0.70, 0.85) * along
    dist = rng.uniform(0.45, 0.60) * along
    pos = start - dist * np.linspace(0.0, 1.0, spec.frames)
    other = np.full(spec.frames, rng.uniform(0.25, 0.75) * across)
    return np.stack([pos, other] if axis == 0 else [other, pos], axis=1)


def _static_track(rng, spec):
    cy = rng.uniform(0.15, 0.85) * spec.height
    cx = rng.uniform(0.25, 0.75) * spec.width
    return np.tile([cy, cx], (spec.frames, 1))


def _clip(rng, spec, kind):
    if kind == "static":
        return _render(rng, spec, _static_track(rng, spec))
    if kind in ("up", "left"):
        return _render(rng, spec, _moving_track(rng, spec, 0 if kind == "up" else 1))
    # down/right: an independently drawn up/left clip, played backwards
    return _clip(rng, spec, "up" if kind == "down" else "left")[::-1].copy()


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """Deterministic in ``spec``; each clip draws from its own derived seed."""
    clips, labels = [], []
    for label, kind in enumerate(spec.classes):
        for i in range(spec.clips_per_class):
            rng = np.random.default_rng([spec.seed, label, i])
            clips.append(_clip(rng, spec, kind))
            labels.append(label)
    return Dataset(np.stack(clips), np.asarray(labels, dtype=np.uint8), spec.num_classes,
                   _flip_map(list(spec.classes)))


# --------------------------------------------------------------------------
# windowing

def sample_uniform_indices(F: int, T: int) -> list[int]:
    """``T`` frame indices spread evenly over ``F`` frames, first and last included."""
    if T < 1 or F < T:
        raise InputError(f"cannot sample {T} frames from a clip of {F}")
    if T == 1:
        return [F - 1]
    # round(i * (F-1) / (T-1)), halves rounded up, in exact integer arithmetic
    return [(2 * i * (F - 1) + (T - 1)) // (2 * (T - 1)) for i in range(T)]


def trailing_window(clip, event_index: int, T: int) -> np.ndarray:
    """The event frame and the ``T - 1`` frames before it; clamps at the clip start."""
    clip = np.asarray(clip)
    if not 0 <= event_index < len(clip):
        raise InputError(f"event index {event_index} outside clip of {len(clip)} frames")
    idx = np.maximum(np.arange(event_index - T + 1, event_index + 1), 0)
    return clip[idx]


def uniform_windows(dataset: Dataset, T: int, indices=None) -> np.ndarray:
    """``(clips, T, H, W, C)`` uint8 windows sampled uniformly from each clip."""
    frames = dataset.frames if indices is None else dataset.frames[indices]
    return frames[:, sample_uniform_indices(frames.shape[1], T)]


def to_float(frames, dtype=np.float32) -> np.ndarray:
    """Scale 8-bit pixels to [0, 1]."""
    dtype = np.dtype(dtype)
    return np.asarray(frames, dtype=dtype) / dtype.type(255.0)


def split_indices(labels, ratios=(8, 1, 1), seed: int = 0):
    """Class-stratified train/val/test index arrays in the given ratio."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    total = float(sum(ratios))
    parts = [[] for _ in ratios]
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        bounds = np.rint(np.cumsum(ratios) / total * len(idx)).astype(int)
        start = 0
        for part, stop in zip(parts, bounds):
            part.extend(idx[start:stop])
            start = stop
    return tuple(np.sort(np.asarray(p, dtype=np.intp)) for p in parts)


# --------------------------------------------------------------------------
# dataset file

def dataset_to_bytes(dataset: Dataset) -> bytes:
    n, F, H, W, C = dataset.frames.shape
    if max(F, H, W) > 0xFFFF or C > 0xFF or dataset.num_classes > 0xFF:
        raise ConfigurationError("dataset dimensions exceed the file format's field widths")
    w = Writer()
    w.raw(DATASET_MAGIC)
    w.u32(DATASET_VERSION)
    w.u32(n)
    w.u16(F)
    w.u16(H)
    w.u16(W)
    w.u8(C)
    w.u8(dataset.num_classes)
    for label, clip in zip(dataset.labels, dataset.frames):
        w.u8(int(label))
        w.array(clip, np.uint8)
    return w.getvalue()


def dataset_from_bytes(data: bytes) -> Dataset:
    rd = Reader(data)
    rd.expect_magic(DATASET_MAGIC, DATASET_VERSION)
    n = rd.u32("clip count")
    F, H, W = rd.u16("F"), rd.u16("H"), rd.u16("W")
    C, k = rd.u8("C"), rd.u8("k")
    if min(F, H, W, C) < 1 or k < 2:
        raise FormatError(f"invalid header dims F={F} H={H} W={W} C={C} k={k}", 8)
    clip_bytes = F * H * W * C
    expected = rd.offset + n * (1 + clip_bytes)
    if len(data) != expected:
        raise FormatError(
            f"payload length {len(data)} does not match header ({n} clips of "
            f"{F}x{H}x{W}x{C} imply {expected} bytes)",
            min(len(data), expected),
        )
    frames = np.empty((n, F, H, W, C), dtype=np.uint8)
    labels = np.empty(n, dtype=np.uint8)
    for i in range(n):
        at = rd.offset
        labels[i] = rd.u8("label")
        if labels[i] >= k:
            raise FormatError(f"clip {i} has label {labels[i]} but k={k}", at)
        frames[i] = rd.array(np.uint8, (F, H, W, C), f"clip {i}")
    rd.expect_end()
    return Dataset(frames, labels, k)


def save_dataset(dataset: Dataset, path):
    Path(path).write_bytes(dataset_to_bytes(dataset))


def load_dataset(path, flip_label_map=None) -> Dataset:
    ds = dataset_from_bytes(Path(path).read_bytes())
    if flip_label_map is not None:
        ds.flip_label_map = tuple(flip_label_map)
    return ds
