from collections import Counter
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamtinynet.baseline import (
    build_frame_model,
    evaluate_baseline,
    frames_from_windows,
    majority_vote,
    predict_frame,
    window_votes,
)
from streamtinynet.errors import InputError
from streamtinynet.model import ModelConfig, build_model, classify_window, extract_features, head_logits
from streamtinynet import nn

CFG = ModelConfig(8, 8, 2, T=4, n=(4,), r=3, d=(6,), k=3)


def vote_oracle(labels):
    counts = Counter(labels)
    best = max(counts.values())
    return min(c for c, v in counts.items() if v == best)


def test_vote_examples():
    assert majority_vote([2, 2, 1]) == 2
    assert majority_vote([0, 1, 1, 0]) == 0
    assert majority_vote([3]) == 3
    with pytest.raises(InputError):
        majority_vote([])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=9))
def test_vote_matches_counting_oracle(labels):
    assert majority_vote(labels) == vote_oracle(labels)


def test_vote_permutation_invariant():
    labels = [0, 2, 2, 1, 1]
    assert len({majority_vote(list(p)) for p in permutations(labels)}) == 1


def test_frame_model_equals_plain_head():
    fm = build_frame_model(CFG, 3)
    assert fm.config.T == 1
    frame = np.random.default_rng(0).uniform(size=CFG.input_shape).astype(np.float32)
    label, p = predict_frame(fm, frame)
    # T=1: temporal layer is a per-channel affine map on the single feature map
    o = extract_features(fm, frame)
    combined = o * fm.temporal.weights[:, 0] + fm.temporal.biases
    np.testing.assert_allclose(p, nn.softmax(head_logits(fm, combined)), rtol=1e-5)
    assert label == int(np.argmax(p))


def test_predict_frame_requires_T1():
    with pytest.raises(InputError):
        predict_frame(build_model(CFG, 0), np.zeros(CFG.input_shape))


def test_frames_from_windows():
    w = np.arange(2 * 3 * 8 * 8 * 2).reshape(2, 3, 8, 8, 2)
    f, y = frames_from_windows(w, [1, 0])
    assert f.shape == (6, 1, 8, 8, 2)
    np.testing.assert_array_equal(y, [1, 1, 1, 0, 0, 0])
    np.testing.assert_array_equal(f[4, 0], w[1, 1])


def test_votes_match_per_frame_loop():
    fm = build_frame_model(CFG, 1)
    windows = np.random.default_rng(2).uniform(size=(5, 4) + CFG.input_shape).astype(np.float32)
    votes = window_votes(fm, windows)
    for w, v in zip(windows, votes):
        assert v == vote_oracle([classify_window(fm, [f])[0] for f in w])


def test_constant_predictor_accuracy():
    fm = build_frame_model(CFG, 0)
    for p in fm.parameters():
        p[...] = 0
    fm.dense[-1].biases[:] = [0.0, 0.0, 1.0]
    windows = np.zeros((8, 4) + CFG.input_shape, np.float32)
    labels = np.array([2, 2, 0, 1, 2, 0, 0, 1])
    res = evaluate_baseline(fm, windows, labels)
    assert res.accuracy == pytest.approx(3 / 8)
