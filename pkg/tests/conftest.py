import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@contextmanager
def criterion(number, name):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE[number] = (False, f"{name}: {detail.get('info', '')} ({type(exc).__name__}: {exc})"
                              .replace("\n", " ")[:300])
        raise
    took = time.perf_counter() - start
    ACCEPTANCE[number] = (True, f"{name}: {detail.get('info', '')} [{took:.1f}s]")


@pytest.fixture(scope="session")
def desk_run():
    """The desk-scale experiment: default dataset, multi-frame model and frame baseline."""
    from streamtinynet.baseline import evaluate_baseline, train_frame_model
    from streamtinynet.data import DatasetSpec, generate_dataset, split_indices, uniform_windows
    from streamtinynet.model import DESK_CONFIG, build_model
    from streamtinynet.training import Hyperparams, evaluate, train

    start = time.perf_counter()
    ds = generate_dataset(DatasetSpec())
    tr, va, te = split_indices(ds.labels, (8, 1, 1), seed=7)
    windows = uniform_windows(ds, DESK_CONFIG.T)
    train_set = (windows[tr], ds.labels[tr])
    val_set = (windows[va], ds.labels[va])
    model, _ = train(build_model(DESK_CONFIG, 7), train_set, val_set,
                     Hyperparams(epochs=12, augment=True, seed=7), flip_label_map=ds.flip_label_map)
    frame_model, _ = train_frame_model(DESK_CONFIG, train_set, val_set, Hyperparams(epochs=4, seed=7),
                                       seed=7, flip_label_map=ds.flip_label_map)
    return {
        "dataset": ds, "windows": windows, "split": (tr, va, te),
        "model": model, "frame_model": frame_model,
        "accuracy": evaluate(model, windows[te], ds.labels[te]).accuracy,
        "baseline_accuracy": evaluate_baseline(frame_model, windows[te], ds.labels[te]).accuracy,
        "seconds": time.perf_counter() - start,
    }


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
