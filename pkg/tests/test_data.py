import numpy as np
import pytest

from streamtinynet.data import (
    Dataset,
    DatasetSpec,
    dataset_from_bytes,
    dataset_to_bytes,
    generate_dataset,
    load_dataset,
    sample_uniform_indices,
    save_dataset,
    split_indices,
    to_float,
    trailing_window,
    uniform_windows,
)
from streamtinynet.errors import ConfigurationError, FormatError, InputError

SMALL = DatasetSpec(clips_per_class=20, frames=10, height=16, width=16, seed=3)


@pytest.fixture(scope="module")
def small():
    return generate_dataset(SMALL)


def test_shapes_and_balance(small):
    assert small.frames.shape == (60, 10, 16, 16, 1)
    assert small.frames.dtype == np.uint8
    assert np.bincount(small.labels).tolist() == [20, 20, 20]


def test_deterministic(small):
    again = generate_dataset(SMALL)
    np.testing.assert_array_equal(small.frames, again.frames)
    other = generate_dataset(DatasetSpec(clips_per_class=20, frames=10, height=16, width=16, seed=4))
    assert not np.array_equal(small.frames, other.frames)


def _blob_row(frame):
    return np.unravel_index(np.argmax(frame[..., 0]), frame.shape[:2])[0]


def test_motion_direction(small):
    up = small.frames[small.labels == 1]
    down = small.frames[small.labels == 2]
    static = small.frames[small.labels == 0]
    assert all(_blob_row(c[-1]) < _blob_row(c[0]) for c in up)
    assert all(_blob_row(c[-1]) > _blob_row(c[0]) for c in down)
    assert np.mean([abs(_blob_row(c[-1]) - _blob_row(c[0])) for c in static]) < 1.5


def test_down_is_reversed_up():
    # a "down" clip is an "up" clip with the same derived seed, reversed
    from streamtinynet import data

    rng_a = np.random.default_rng([0, 2, 0])
    rng_b = np.random.default_rng([0, 2, 0])
    down = data._clip(rng_a, SMALL, "down")
    up = data._clip(rng_b, SMALL, "up")
    np.testing.assert_array_equal(down, up[::-1])


def test_single_frames_do_not_separate_up_from_down():
    ds = generate_dataset(DatasetSpec(clips_per_class=200, frames=8, height=16, width=16, seed=11))
    keep = ds.labels > 0
    X = to_float(ds.frames[keep], np.float64).reshape(keep.sum(), 8, -1)
    y = ds.labels[keep]
    rng = np.random.default_rng(0)
    order = rng.permutation(len(y))
    tr, te = order[:300], order[300:]
    # nearest-class-mean on individual frames, fit on one half, scored on the other
    fx, fy = X[tr].reshape(-1, X.shape[-1]), np.repeat(y[tr], 8)
    mu1, mu2 = fx[fy == 1].mean(0), fx[fy == 2].mean(0)
    tx, ty = X[te].reshape(-1, X.shape[-1]), np.repeat(y[te], 8)
    pred = np.where(((tx - mu1) ** 2).sum(1) < ((tx - mu2) ** 2).sum(1), 1, 2)
    assert (pred == ty).mean() <= 0.55


def test_flip_label_map():
    ds = generate_dataset(DatasetSpec(clips_per_class=2, frames=4, height=8, width=8,
                                      classes=("static", "left", "right")))
    assert ds.flip_label_map == (0, 2, 1)
    assert generate_dataset(SMALL).flip_label_map == (0, 1, 2)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        DatasetSpec(classes=("up",))
    with pytest.raises(ConfigurationError):
        DatasetSpec(classes=("up", "sideways"))
    with pytest.raises(ConfigurationError):
        DatasetSpec(height=4)


# -- windowing -----------------------------------------------------------------

def test_uniform_indices_examples():
    assert sample_uniform_indices(8, 4) == [0, 2, 5, 7]
    assert sample_uniform_indices(10, 10) == list(range(10))
    assert sample_uniform_indices(10, 1) == [9]
    assert sample_uniform_indices(24, 8) == [0, 3, 7, 10, 13, 16, 20, 23]


@pytest.mark.parametrize("F,T", [(24, 8), (17, 5), (9, 2), (100, 16), (3, 3)])
def test_uniform_indices_oracle(F, T):
    expected = [int(np.floor(i * (F - 1) / (T - 1) + 0.5)) for i in range(T)]
    got = sample_uniform_indices(F, T)
    assert got == expected
    assert got[0] == 0 and got[-1] == F - 1
    assert all(a < b for a, b in zip(got, got[1:]))


def test_uniform_indices_too_short():
    with pytest.raises(InputError):
        sample_uniform_indices(3, 4)


def test_trailing_window():
    clip = np.arange(10)
    np.testing.assert_array_equal(trailing_window(clip, 6, 3), [4, 5, 6])
    np.testing.assert_array_equal(trailing_window(clip, 1, 4), [0, 0, 0, 1])
    with pytest.raises(InputError):
        trailing_window(clip, 10, 2)


def test_uniform_windows(small):
    w = uniform_windows(small, 4, [0, 5])
    assert w.shape == (2, 4, 16, 16, 1)
    np.testing.assert_array_equal(w[1, -1], small.frames[5, -1])


def test_to_float_range(small):
    x = to_float(small.frames)
    assert x.dtype == np.float32 and 0 <= x.min() and x.max() <= 1
    assert small.frames.max() > 200 and small.frames.min() < 80


def test_split_stratified_and_disjoint(small):
    tr, va, te = split_indices(small.labels, (8, 1, 1), 7)
    assert len(tr) + len(va) + len(te) == len(small)
    assert not (set(tr) & set(va) or set(tr) & set(te) or set(va) & set(te))
    assert np.bincount(small.labels[te]).tolist() == [2, 2, 2]
    again = split_indices(small.labels, (8, 1, 1), 7)
    for a, b in zip((tr, va, te), again):
        np.testing.assert_array_equal(a, b)


# -- file ---------------------------------------------------------------------

def test_file_roundtrip(tmp_path, small):
    path = tmp_path / "d.stnd"
    save_dataset(small, path)
    loaded = load_dataset(path)
    np.testing.assert_array_equal(loaded.frames, small.frames)
    np.testing.assert_array_equal(loaded.labels, small.labels)
    assert dataset_to_bytes(loaded) == path.read_bytes()


def test_file_header_layout(small):
    blob = dataset_to_bytes(small)
    assert blob[:4] == b"STND"
    assert len(blob) == 4 + 4 + 4 + 6 + 2 + 60 * (1 + 10 * 16 * 16)


def test_truncated_file(small):
    blob = dataset_to_bytes(small)
    with pytest.raises(FormatError) as err:
        dataset_from_bytes(blob[:-1])
    assert err.value.offset is not None


def test_header_payload_mismatch(small):
    blob = bytearray(dataset_to_bytes(small))
    blob[8] += 1  # one more clip than stored
    with pytest.raises(FormatError, match="does not match header"):
        dataset_from_bytes(bytes(blob))


def test_bad_label_and_magic(small):
    blob = bytearray(dataset_to_bytes(small))
    blob[20] = 9
    with pytest.raises(FormatError, match="label"):
        dataset_from_bytes(bytes(blob))
    with pytest.raises(FormatError, match="magic"):
        dataset_from_bytes(b"NOPE" + bytes(blob[4:]))


def test_load_with_flip_map(tmp_path):
    ds = Dataset(np.zeros((2, 1, 8, 8, 1), np.uint8), np.array([0, 1], np.uint8), 2, (1, 0))
    save_dataset(ds, tmp_path / "x")
    assert load_dataset(tmp_path / "x").flip_label_map == (0, 1)
    assert load_dataset(tmp_path / "x", (1, 0)).flip_label_map == (1, 0)
