# # Post-training int8 quantization
#
# Weights become int8 with one scale per tensor. Activations become uint8
# with ranges taken from a few calibration windows.

import numpy as np

from streamtinynet import DESK_CONFIG, build_model
from streamtinynet.data import DatasetSpec, generate_dataset, split_indices, uniform_windows
from streamtinynet.quant import calibrate, predict_labels_quantized, quantized_to_bytes
from streamtinynet.training import Hyperparams, predict_labels, train

ds = generate_dataset(DatasetSpec(clips_per_class=150))
tr, va, te = split_indices(ds.labels, (8, 1, 1), seed=7)
windows = uniform_windows(ds, DESK_CONFIG.T)
model, _ = train(build_model(DESK_CONFIG, 7), (windows[tr], ds.labels[tr]),
                 (windows[va], ds.labels[va]), Hyperparams(epochs=6, augment=True, seed=7))

qmodel = calibrate(model, windows[tr[:128]])
for i, site in enumerate(qmodel.sites):
    print(f"site {i}: scale={site.scale:.5f} zero_point={site.zero_point}")

pf = predict_labels(model, windows[te])
pq = predict_labels_quantized(qmodel, windows[te])
print("float", (pf == ds.labels[te]).mean(), "int8", (pq == ds.labels[te]).mean(),
      "agreement", (pf == pq).mean())

# The quantized file is about a quarter of the float one.

print(len(quantized_to_bytes(qmodel)), "bytes vs", 4 * sum(p.size for p in model.parameters()))
