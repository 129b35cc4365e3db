"""Spatial-temporal tiny CNN for streaming video classification.

Per-frame features are computed once and buffered; a per-channel 1x1 temporal
convolution and a small dense head classify the last ``T`` frames.
"""

from .errors import (
    ConfigurationError,
    FormatError,
    InputError,
    ShapeError,
    StateError,
    StreamTinyNetError,
)
from .model import (
    DESK_CONFIG,
    GOLFDB_CONFIG,
    JESTER_CONFIG,
    Model,
    ModelConfig,
    build_model,
    classify_window,
    extract_features,
    load_weights,
    save_weights,
    temporal_combine,
)
from .resource import DeviceBudget, check_budget, layer_costs, totals
from .streaming import Prediction, StreamEngine

__version__ = "0.1.0"
