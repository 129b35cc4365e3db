"""End-to-end training of g and h together, evaluation, augmentation, gradient checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import nn
from .data import to_float
from .errors import InputError
from .model import Model, backward, forward, predict_windows

__all__ = [
    "Hyperparams",
    "TrainHistory",
    "EvalResult",
    "cross_entropy",
    "augment",
    "flip_window",
    "rotate_window",
    "train",
    "predict_labels",
    "evaluate",
    "grad_check",
]


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    augment: bool = False
    flip_prob: float = 0.5
    rotation_limit: float = 5.0
    decay_at: float = 2.0 / 3.0  # fraction of epochs after which lr is scaled
    decay: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InputError("learning rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise InputError("batch size must be >= 1 and epochs >= 0")

    def lr_at(self, epoch: int) -> float:
        if epoch >= int(round(self.decay_at * self.epochs)):
            return self.learning_rate * self.decay
        return self.learning_rate


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = -1

    def lines(self) -> list[str]:
        out = ["epoch,loss,train_acc,val_acc"]
        for i, (l, a, v) in enumerate(zip(self.loss, self.train_acc, self.val_acc), 1):
            out.append(f"{i},{l:.6f},{a:.4f},{v:.4f}")
        return out


def cross_entropy(probs, labels):
    """Mean negative log-likelihood and its gradient with respect to the logits.

    Accepts one probability vector with an integer label, or a ``(B, k)``
    batch with a label array.  The gradient of the batch mean is returned.
    """
    probs = np.asarray(probs)
    single = probs.ndim == 1
    p = probs[None] if single else probs
    y = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    k = p.shape[1]
    if y.shape != (len(p),) or (y < 0).any() or (y >= k).any():
        raise InputError(f"labels {y} invalid for {k} classes")
    picked = p[np.arange(len(p)), y]
    loss = float(-np.log(np.maximum(picked, 1e-12)).mean())
    grad = p.copy()
    grad[np.arange(len(p)), y] -= 1
    grad /= len(p)
    return loss, (grad[0] if single else grad)


# --------------------------------------------------------------------------
# augmentation: one draw per window, applied identically to every frame

def flip_window(window) -> np.ndarray:
    return np.asarray(window)[:, :, ::-1, :]


def rotate_window(window, angle: float) -> np.ndarray:
    """Rotate every frame of a (T, H, W, C) window; nearest neighbour, zero fill."""
    window = np.asarray(window)
    if angle == 0:
        return window.copy()
    return ndimage.rotate(window, angle, axes=(2, 1), reshape=False, order=0,
                          mode="constant", cval=0.0)


def augment(window, label, rng, hyper: Hyperparams = Hyperparams(), flip_label_map=None):
    window = np.asarray(window)
    if rng.random() < hyper.flip_prob:
        window = flip_window(window)
        if flip_label_map is not None:
            label = flip_label_map[label]
    angle = rng.uniform(-hyper.rotation_limit, hyper.rotation_limit)
    return rotate_window(window, angle), label


# --------------------------------------------------------------------------
# training loop

def _as_float(windows, dtype):
    windows = np.asarray(windows)
    if windows.dtype == np.uint8:
        return to_float(windows, dtype)
    return windows.astype(dtype, copy=False)


def _check_set(model, windows, labels, name):
    windows, labels = np.asarray(windows), np.asarray(labels)
    if len(windows) == 0:
        raise InputError(f"{name} set is empty")
    if windows.ndim != 5 or windows.shape[1] != model.config.T:
        raise InputError(
            f"{name} windows must be (N, {model.config.T}, H, W, C), got {windows.shape}"
        )
    if len(labels) != len(windows):
        raise InputError(f"{name} set has {len(windows)} windows but {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= model.config.k:
        raise InputError(f"{name} labels outside [0, {model.config.k})")
    return windows, labels.astype(np.intp)


def train(model: Model, train_set, val_set, hyper: Hyperparams = Hyperparams(),
          flip_label_map=None, log=None):
    """Minibatch SGD with momentum on the cross-entropy loss.

    ``train_set`` and ``val_set`` are ``(windows, labels)`` pairs; uint8
    windows are scaled to [0, 1].  The input model is left untouched; the
    returned model carries the weights of the best validation epoch.
    """
    x_train, y_train = _check_set(model, *train_set, "training")
    x_val, y_val = _check_set(model, *val_set, "validation")
    model = model.copy()
    params = model.parameters()
    velocity = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(hyper.seed)
    history = TrainHistory()
    best, best_acc = model.copy(), -1.0
    n = len(x_train)

    for epoch in range(hyper.epochs):
        lr = hyper.lr_at(epoch)
        order = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            xb = _as_float(x_train[idx], model.dtype)
            yb = y_train[idx]
            if hyper.augment:
                pairs = [augment(w, y, rng, hyper, flip_label_map) for w, y in zip(xb, yb)]
                xb = np.stack([p[0] for p in pairs])
                yb = np.array([p[1] for p in pairs], dtype=np.intp)
            logits, cache = forward(model, xb)
            probs = nn.softmax(logits)
            loss, dlogits = cross_entropy(probs, yb)
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == yb).sum())
            grads = backward(model, cache, dlogits.astype(model.dtype))
            for p, v, g in zip(params, velocity, grads):
                v *= hyper.momentum
                v -= lr * g
                p += v
        val = evaluate(model, x_val, y_val).accuracy
        history.loss.append(total_loss / n)
        history.train_acc.append(correct / n)
        history.val_acc.append(val)
        if val > best_acc:
            best, best_acc, history.best_epoch = model.copy(), val, epoch + 1
        if log is not None:
            log(history.lines()[-1])
    if hyper.epochs == 0:
        best = model
    return best, history


# --------------------------------------------------------------------------
# evaluation

@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # confusion[true, predicted]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def predict_labels(model: Model, windows, batch_size: int = 64) -> np.ndarray:
    windows = np.asarray(windows)
    out = []
    for start in range(0, len(windows), batch_size):
        xb = _as_float(windows[start:start + batch_size], model.dtype)
        out.append(predict_windows(model, xb).argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.intp)


def confusion_matrix(labels, predicted, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=np.intp), np.asarray(predicted, dtype=np.intp)), 1)
    return cm


def evaluate(model: Model, windows, labels, batch_size: int = 64) -> EvalResult:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    pred = predict_labels(model, windows, batch_size)
    cm = confusion_matrix(labels, pred, model.config.k)
    return EvalResult(float(np.trace(cm) / cm.sum()), cm)


# --------------------------------------------------------------------------
# gradient verification

def relative_error(a, b, floor: float = 1e-8):
    """``|a - b| / max(|a|, |b|)``; symmetric, with a floor on the denominator."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _loss_and_pattern(model, window, label):
    logits, cache = forward(model, window[None])
    # which side of every ReLU / which max of every pool the input lands on
    pattern = [pre > 0 for _, pre, _ in cache["blocks"]]
    pattern += [index.argmax for _, _, index in cache["blocks"]]
    pattern += [pre > 0 for _, pre in cache["dense"]]
    return cross_entropy(nn.softmax(logits), [label])[0], pattern


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(model: Model, window, label: int, n_coords: int = 200, eps: float = 1e-3,
               seed: int = 0, return_details: bool = False, skip_kinks: bool = True):
    """Largest relative error between backprop and central differences.

    Runs in float64 on a copy of ``model`` over ``n_coords`` coordinates drawn
    uniformly from all parameters.  A central difference straddling a ReLU or
    max-pool switch measures no derivative at all, so with ``skip_kinks`` such
    coordinates are replaced by fresh draws.
    """
    m64 = model.astype(np.float64)
    window = _as_float(window, np.float64)
    logits, cache = forward(m64, window[None])
    _, dlogits = cross_entropy(nn.softmax(logits), [label])
    grads = backward(m64, cache, dlogits)
    _, base = _loss_and_pattern(m64, window, label)
    params = m64.parameters()
    sizes = np.array([p.size for p in params])
    bounds = np.cumsum(sizes)
    rng = np.random.default_rng(seed)
    analytic, numeric, skipped = [], [], 0
    for f in rng.permutation(int(sizes.sum())):
        if len(analytic) == n_coords:
            break
        which = int(np.searchsorted(bounds, f, side="right"))
        pos = np.unravel_index(f - (bounds[which] - sizes[which]), params[which].shape)
        p = params[which]
        orig = p[pos]
        p[pos] = orig + eps
        up, pat_up = _loss_and_pattern(m64, window, label)
        p[pos] = orig - eps
        down, pat_down = _loss_and_pattern(m64, window, label)
        p[pos] = orig
        if skip_kinks and not (_same_pattern(base, pat_up) and _same_pattern(base, pat_down)):
            skipped += 1
            continue
        analytic.append(grads[which][pos])
        numeric.append((up - down) / (2 * eps))
    err = relative_error(analytic, numeric)
    worst = float(err.max()) if len(err) else 0.0
    if return_details:
        return worst, np.asarray(analytic), np.asarray(numeric), skipped
    return worst
