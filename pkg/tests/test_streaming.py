import numpy as np
import pytest

from streamtinynet.errors import ConfigurationError
from streamtinynet.model import ModelConfig, build_model, classify_window
from streamtinynet.streaming import StreamEngine, run_stream

CFG = ModelConfig(12, 12, 1, T=4, n=(3, 4), r=3, d=(6,), k=3)


@pytest.fixture(scope="module")
def model():
    return build_model(CFG, 5)


def frames(count, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, size=(count,) + CFG.input_shape).astype(np.float32)


def test_warm_up_emits_nothing(model):
    engine = StreamEngine(model, 1)
    for f in frames(CFG.T - 1):
        assert engine.push_frame(f) is None
    assert engine.push_frame(frames(1, 9)[0]) is not None


@pytest.mark.parametrize("stride", [1, 2, 3, 4])
def test_emission_indices(model, stride):
    emitted = [p.frame_index for p in run_stream(model, frames(13), stride)]
    expected = [i for i in range(13) if i + 1 >= CFG.T and (i + 1 - CFG.T) % stride == 0]
    assert emitted == expected


def test_stride_T_emits_every_T_frames(model):
    # the sequence 4, 8, 12 in 1-based frame counts
    emitted = [p.frame_index + 1 for p in run_stream(model, frames(12), CFG.T)]
    assert emitted == [4, 8, 12]


@pytest.mark.parametrize("stride", [1, 3, 4])
def test_matches_batch_classification(model, stride):
    seq = frames(30, stride)
    engine = StreamEngine(model, stride)
    count = 0
    for f in seq:
        pred = engine.push_frame(f)
        if pred is None:
            continue
        window = seq[pred.frame_index - CFG.T + 1: pred.frame_index + 1]
        label, probs = classify_window(model, window)
        np.testing.assert_allclose(pred.probabilities, probs, rtol=1e-5)
        assert pred.label == label
        count += 1
    assert count > 0
    assert engine.g_invocations == len(seq) == engine.frames_pushed


def test_memory_modes(model):
    sliding, acc = StreamEngine(model, 1), StreamEngine(model, CFG.T)
    assert acc.accumulator_mode and not sliding.accumulator_mode
    for f in frames(10):
        sliding.push_frame(f)
        acc.push_frame(f)
    assert sliding.peak_maps_retained == CFG.T
    assert acc.peak_maps_retained == 1


def test_reset_then_replay(model):
    seq = frames(9, 3)
    engine = StreamEngine(model, 2)
    first = [engine.push_frame(f) for f in seq]
    engine.reset()
    engine.reset()
    assert engine.frames_pushed == 0 and engine.g_invocations == 0 and engine.maps_retained == 0
    second = [engine.push_frame(f) for f in seq]
    for a, b in zip(first, second):
        assert (a is None) == (b is None)
        if a is not None:
            np.testing.assert_array_equal(a.probabilities, b.probabilities)


def test_oldest_frame_is_evicted(model):
    # a window differing only in the frame that should have left the buffer
    seq_a = frames(CFG.T + 1, 1)
    seq_b = seq_a.copy()
    seq_b[0] = 0
    pa = list(run_stream(model, seq_a, 1))[-1]
    pb = list(run_stream(model, seq_b, 1))[-1]
    np.testing.assert_array_equal(pa.probabilities, pb.probabilities)


@pytest.mark.parametrize("stride", [0, CFG.T + 1, -1])
def test_bad_stride(model, stride):
    with pytest.raises(ConfigurationError):
        StreamEngine(model, stride)


def test_T1_engine_is_per_frame():
    cfg = CFG.with_window(1)
    m = build_model(cfg, 0)
    seq = frames(5)
    preds = list(run_stream(m, seq, 1))
    assert [p.frame_index for p in preds] == list(range(5))
    for f, p in zip(seq, preds):
        np.testing.assert_allclose(p.probabilities, classify_window(m, f[None])[1], rtol=1e-5)
