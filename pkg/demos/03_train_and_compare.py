# # Motion only shows up across frames
#
# In the synthetic set a "down" clip is an "up" clip played backwards, so a
# single frame cannot tell the two apart. A model that sees T frames should
# separate them. A frame-by-frame model with majority voting should not.
#
# This is a reduced run (fewer clips and epochs) that finishes in well under a
# minute. The test suite trains on the full default set.

from streamtinynet import DESK_CONFIG, build_model
from streamtinynet.baseline import evaluate_baseline, train_frame_model
from streamtinynet.data import DatasetSpec, generate_dataset, split_indices, uniform_windows
from streamtinynet.training import Hyperparams, evaluate, train

ds = generate_dataset(DatasetSpec(clips_per_class=200))
train_idx, val_idx, test_idx = split_indices(ds.labels, (8, 1, 1), seed=7)
windows = uniform_windows(ds, DESK_CONFIG.T)
train_set = (windows[train_idx], ds.labels[train_idx])
val_set = (windows[val_idx], ds.labels[val_idx])

model, history = train(build_model(DESK_CONFIG, 7), train_set, val_set,
                       Hyperparams(epochs=8, augment=True, seed=7), log=print)
result = evaluate(model, windows[test_idx], ds.labels[test_idx])
print("multi-frame accuracy", result.accuracy)
print(result.confusion)

# Same extractor and head with T=1, trained on every individual frame.

frame_model, _ = train_frame_model(DESK_CONFIG, train_set, val_set, Hyperparams(epochs=3, seed=7), seed=7)
base = evaluate_baseline(frame_model, windows[test_idx], ds.labels[test_idx])
print("frame-by-frame + vote accuracy", base.accuracy)
print(base.confusion)  # up and down are mixed up with each other
