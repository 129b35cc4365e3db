import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamtinynet.errors import FormatError, InputError
from streamtinynet.model import ModelConfig, build_model, predict_windows
from streamtinynet.quant import (
    QuantParams,
    activation_params,
    calibrate,
    classify_window_quantized,
    dequantize_tensor,
    load_quantized,
    observed_range,
    predict_windows_quantized,
    quantize_tensor,
    quantized_from_bytes,
    quantized_to_bytes,
    round_half_away,
    save_quantized,
    weight_params,
)

CFG = ModelConfig(12, 12, 1, T=3, n=(4, 6), r=3, d=(8,), k=3)


@pytest.fixture(scope="module")
def setup():
    m = build_model(CFG, 4)
    for layer in m.conv + m.dense:
        layer.biases[:] = np.random.default_rng(1).normal(0, 0.05, layer.biases.shape)
    rng = np.random.default_rng(0)
    windows = rng.uniform(size=(80, CFG.T) + CFG.input_shape).astype(np.float32)
    return m, windows, calibrate(m, windows[:40])


def test_quantize_examples():
    p = QuantParams(0.5, 10)
    np.testing.assert_array_equal(quantize_tensor([1.0, 1.25, -0.25, 1000.0, -1000.0], p),
                                  [12, 13, 9, 255, 0])
    assert dequantize_tensor(np.uint8(12), p) == 1.0


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away([0.5, 1.5, -0.5, -2.5, 2.4]), [1, 2, -1, -3, 2])


@settings(max_examples=60, deadline=None)
@given(lo=st.floats(-10, 0), width=st.floats(0.01, 20), frac=st.floats(0, 1))
def test_roundtrip_error_within_half_scale(lo, width, frac):
    p = activation_params(lo, lo + width)
    v = lo + frac * width
    err = abs(dequantize_tensor(quantize_tensor(v, p), p) - v)
    assert err <= p.scale / 2 + 1e-9


def test_zero_is_exact():
    for lo, hi in [(-1.0, 3.0), (0.2, 5.0), (-4.0, -1.0)]:
        p = activation_params(lo, hi)
        assert dequantize_tensor(quantize_tensor(0.0, p), p) == 0.0


def test_weight_params():
    w = np.array([-0.5, 1.0, 0.25])
    p = weight_params(w)
    assert p.signed and p.zero_point == 0
    assert p.scale == pytest.approx(1 / 127)
    assert quantize_tensor(w, p).max() == 127
    assert weight_params(-w).scale == p.scale


def test_degenerate_range():
    lo, hi = observed_range(np.full(5, 3.0))
    assert lo == 3.0 and hi > lo
    p = activation_params(0.0, 0.0)
    assert p.scale > 0 and p.zero_point == 0


def test_params_validation():
    with pytest.raises(InputError):
        QuantParams(0.0, 0)
    with pytest.raises(InputError):
        QuantParams(0.1, 300)
    with pytest.raises(InputError):
        QuantParams(0.1, -1, signed=False)


def test_calibration_deterministic(setup):
    m, windows, q = setup
    q2 = calibrate(m, windows[:40])
    assert quantized_to_bytes(q) == quantized_to_bytes(q2)
    assert len(q.sites) == 1 + CFG.l + 1 + CFG.b
    assert all(layer.weights.dtype == np.int8 and layer.biases.dtype == np.int32 for layer in q.layers)


def test_calibration_batches_agree(setup):
    m, windows, q = setup
    assert quantized_to_bytes(calibrate(m, windows[:40], batch_size=7)) == quantized_to_bytes(q)


def test_quantized_tracks_float(setup):
    m, windows, q = setup
    pf = predict_windows(m, windows[40:])
    pq = predict_windows_quantized(q, windows[40:])
    np.testing.assert_allclose(pq.sum(axis=1), 1.0, atol=1e-6)
    assert np.abs(pf - pq).max() < 0.05
    assert (pf.argmax(1) == pq.argmax(1)).mean() >= 0.9


def test_uint8_input_matches_scaled_float(setup):
    _, _, q = setup
    raw = np.random.default_rng(3).integers(0, 256, size=(4, CFG.T) + CFG.input_shape).astype(np.uint8)
    np.testing.assert_array_equal(predict_windows_quantized(q, raw),
                                  predict_windows_quantized(q, raw.astype(np.float32) / np.float32(255)))


def test_classify_window_quantized(setup):
    _, windows, q = setup
    label, p = classify_window_quantized(q, windows[0])
    assert label == int(np.argmax(p))
    with pytest.raises(InputError):
        classify_window_quantized(q, windows[0][:2])


def test_file_roundtrip(tmp_path, setup):
    _, windows, q = setup
    path = tmp_path / "q.stnq"
    save_quantized(q, path)
    loaded = load_quantized(path)
    assert quantized_to_bytes(loaded) == path.read_bytes()
    np.testing.assert_array_equal(predict_windows_quantized(loaded, windows[:5]),
                                  predict_windows_quantized(q, windows[:5]))


def test_corrupted_file(setup):
    _, _, q = setup
    blob = quantized_to_bytes(q)
    with pytest.raises(FormatError, match="magic"):
        quantized_from_bytes(b"STNW" + blob[4:])
    with pytest.raises(FormatError, match="version"):
        quantized_from_bytes(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
    with pytest.raises(FormatError, match="truncated"):
        quantized_from_bytes(blob[:-1])
    with pytest.raises(FormatError, match="trailing"):
        quantized_from_bytes(blob + b"\0")
