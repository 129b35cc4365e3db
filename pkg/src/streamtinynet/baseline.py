"""Frame-by-frame comparison: a T=1 model whose per-frame labels are majority-voted."""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .model import Model, ModelConfig, build_model, classify_window
from .training import EvalResult, Hyperparams, confusion_matrix, predict_labels, train

__all__ = [
    "frame_config",
    "build_frame_model",
    "predict_frame",
    "majority_vote",
    "frames_from_windows",
    "train_frame_model",
    "evaluate_baseline",
]


def frame_config(config: ModelConfig) -> ModelConfig:
    """Same extractor and dense head, observation window of one frame."""
    return config.with_window(1)


def build_frame_model(config: ModelConfig, seed: int = 0) -> Model:
    return build_model(frame_config(config), seed)


def _require_frame_model(fm: Model):
    if fm.config.T != 1:
        raise InputError(f"frame model must have T=1, got T={fm.config.T}")


def predict_frame(fm: Model, frame):
    _require_frame_model(fm)
    return classify_window(fm, [frame])


def majority_vote(labels) -> int:
    """Most frequent label; ties go to the lowest class index."""
    labels = np.asarray(labels, dtype=np.intp).ravel()
    if labels.size == 0:
        raise InputError("majority vote over an empty set of predictions")
    return int(np.argmax(np.bincount(labels)))


def frames_from_windows(windows, labels):
    """Every frame of every window as a one-frame window carrying the window's label."""
    windows = np.asarray(windows)
    n, t = windows.shape[:2]
    frames = windows.reshape((n * t, 1) + windows.shape[2:])
    return frames, np.repeat(np.asarray(labels), t)


def train_frame_model(config: ModelConfig, train_set, val_set, hyper: Hyperparams = Hyperparams(),
                      seed: int = 0, flip_label_map=None, log=None):
    """Train from scratch on the individual frames of the multi-frame training windows."""
    fm = build_frame_model(config, seed)
    return train(fm, frames_from_windows(*train_set), frames_from_windows(*val_set), hyper,
                 flip_label_map=flip_label_map, log=log)


def window_votes(fm: Model, windows, batch_size: int = 256) -> np.ndarray:
    _require_frame_model(fm)
    windows = np.asarray(windows)
    n, t = windows.shape[:2]
    per_frame = predict_labels(fm, windows.reshape((n * t, 1) + windows.shape[2:]), batch_size)
    return np.array([majority_vote(row) for row in per_frame.reshape(n, t)], dtype=np.intp)


def evaluate_baseline(fm: Model, windows, labels) -> EvalResult:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    cm = confusion_matrix(labels, window_votes(fm, windows), fm.config.k)
    return EvalResult(float(np.trace(cm) / cm.sum()), cm)
