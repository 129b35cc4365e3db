# # Will it fit on the device?
#
# The cost model works from a configuration alone, so a network can be sized
# before any training happens.

import numpy as np

from streamtinynet import GOLFDB_CONFIG, DeviceBudget, build_model, check_budget, totals
from streamtinynet.resource import count_ops_instrumented

# The golf-swing configuration: 160x160 RGB input, five conv blocks.

report = totals(GOLFDB_CONFIG)
print(report.format_table())

# Longer windows cost only the extra feature maps in the buffer and a few
# temporal weights. The extractor is untouched.

for T in (1, 4, 8, 16):
    r = totals(GOLFDB_CONFIG.with_window(T))
    print(f"T={T:>2}  m_w={r.m_w:>7,}  m_a={r.m_a:>7,}  m={r.m:>7,}")

# At one byte per value the T=16 network needs 321,488 B. Checked against a
# 1 MiB part and against a smaller one:

for limit in (1_048_576, 300_000):
    print(limit, check_budget(report, DeviceBudget(memory_bytes=limit)).describe())

# The op count is not just a formula. Running the model under the counter
# gives the same number.

model = build_model(GOLFDB_CONFIG, seed=0)
frames = np.zeros((GOLFDB_CONFIG.T,) + GOLFDB_CONFIG.input_shape, np.float32)
print("formula", report.c, "executed", count_ops_instrumented(model, frames))
