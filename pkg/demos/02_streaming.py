# # Streaming a video one frame at a time

import numpy as np

from streamtinynet import DESK_CONFIG, StreamEngine, build_model, classify_window

model = build_model(DESK_CONFIG, seed=1)
T = DESK_CONFIG.T
rng = np.random.default_rng(0)
frames = rng.uniform(size=(40,) + DESK_CONFIG.input_shape).astype(np.float32)

# With stride 1 every new frame after the first T-1 yields a prediction.
# Each frame goes through the extractor once, and its feature map is reused
# by the next T-1 windows.

engine = StreamEngine(model, stride=1)
preds = [p for p in map(engine.push_frame, frames) if p is not None]
print(len(preds), "predictions,", engine.g_invocations, "extractor calls")
print("feature maps held:", engine.peak_maps_retained)

# Recomputing the last window from scratch gives the same answer.

last = preds[-1]
label, probs = classify_window(model, frames[-T:])
print(last.label, label, np.abs(last.probabilities - probs).max())

# With stride T the windows do not overlap, so the temporal 1x1 convolution is
# accumulated as frames arrive and no feature map is kept.

engine = StreamEngine(model, stride=T)
preds = [p for p in map(engine.push_frame, frames) if p is not None]
print([p.frame_index for p in preds], "maps held:", engine.peak_maps_retained)
