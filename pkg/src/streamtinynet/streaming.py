"""Streaming inference over an unbounded sequence of frames.

The engine runs the per-frame extractor exactly once per incoming frame and
keeps only what the temporal head needs:

* sliding mode (``stride < T``): a ring buffer of the last ``T`` feature maps;
* accumulator mode (``stride == T``): consecutive windows never overlap, so the
  1x1 temporal convolution is folded into a single running map as frames
  arrive and no feature map is retained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import nn
from .errors import ConfigurationError
from .model import Model, extract_features, head_logits, temporal_combine

__all__ = ["Prediction", "StreamEngine", "run_stream"]


@dataclass
class Prediction:
    frame_index: int  # 0-based index of the newest frame in the window
    label: int
    probabilities: np.ndarray


class StreamEngine:
    def __init__(self, model: Model, stride: int = 1):
        T = model.config.T
        if not 1 <= stride <= T:
            raise ConfigurationError(f"stride must be in [1, {T}], got {stride}")
        self.model = model
        self.stride = int(stride)
        self.T = T
        self.accumulator_mode = self.stride == T
        self.reset()

    def reset(self):
        self.frames_pushed = 0
        self.g_invocations = 0
        self.peak_maps_retained = 0
        self._ring = None
        self._ring_len = 0
        self._head = 0  # slot the next map is written to
        self._acc = None

    @property
    def maps_retained(self) -> int:
        if self.accumulator_mode:
            return 0 if self._acc is None else 1
        return self._ring_len

    def push_frame(self, frame) -> Prediction | None:
        features = extract_features(self.model, frame)
        self.g_invocations += 1
        self.frames_pushed += 1
        if self.accumulator_mode:
            combined = self._accumulate(features)
        else:
            combined = self._slide(features)
        self.peak_maps_retained = max(self.peak_maps_retained, self.maps_retained)
        if self.frames_pushed < self.T or (self.frames_pushed - self.T) % self.stride:
            return None
        if self.accumulator_mode:
            self._acc = None
        probs = nn.softmax(head_logits(self.model, combined))
        return Prediction(self.frames_pushed - 1, int(np.argmax(probs)), probs)

    def _slide(self, features):
        if self._ring is None:
            self._ring = np.zeros((self.T,) + features.shape, dtype=features.dtype)
        self._ring[self._head] = features  # overwrites the map pushed T frames ago
        self._head = (self._head + 1) % self.T
        self._ring_len = min(self._ring_len + 1, self.T)
        if self._ring_len < self.T:
            return None
        order = (self._head + np.arange(self.T)) % self.T  # oldest first
        return temporal_combine(self.model.temporal, self._ring[order])

    def _accumulate(self, features):
        temporal = self.model.temporal
        t = (self.frames_pushed - 1) % self.T
        if t == 0:
            self._acc = np.broadcast_to(temporal.biases, features.shape).astype(features.dtype)
        self._acc += features * temporal.weights[:, t]
        nn._tally(features.size)
        return self._acc


def run_stream(model: Model, frames: Iterable, stride: int = 1) -> Iterator[Prediction]:
    engine = StreamEngine(model, stride)
    for frame in frames:
        pred = engine.push_frame(frame)
        if pred is not None:
            yield pred
