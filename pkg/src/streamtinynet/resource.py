"""Analytical memory and compute model of the network.

Per layer the model reports ``m_w`` (weight values, biases excluded), ``m_a``
(activation values) and ``c`` (operations, one per multiply-accumulate).
Totals follow the two-consecutive-layer activation optimisation for g; for h
the activation term is the buffer of ``T`` feature maps.  Multiply the value
counts by the storage width (1 byte for int8, 4 for float32) to get bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InputError
from .model import Model, ModelConfig, classify_window
from .nn import OpCounter
from .streaming import StreamEngine

__all__ = [
    "LayerCost",
    "ResourceReport",
    "DeviceBudget",
    "BudgetVerdict",
    "layer_costs",
    "totals",
    "check_budget",
    "count_ops_instrumented",
]


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    m_w: int
    m_a: int
    c: int
    stage: str  # "g" or "h"


def layer_costs(config: ModelConfig) -> list[LayerCost]:
    h, w, c_in = config.input_shape
    rows = [LayerCost("input", "input", 0, h * w * c_in, 0, "g")]
    for i, ((h, w, c_in), n, r) in enumerate(zip(config.block_inputs(), config.n, config.r), 1):
        rows.append(LayerCost(f"conv-{i}", "conv", r * r * c_in * n, h * w * n,
                              r * r * c_in * n * h * w, "g"))
        h2, w2 = h // 2, w // 2
        # 2x2 window scan over every pooled input value (odd remainder is never read)
        rows.append(LayerCost(f"pool-{i}", "pool", 0, h2 * w2 * n,
                              2 * 2 * (2 * h2) * (2 * w2) * n, "g"))
    mo, no, co = config.output_shape
    T = config.T
    rows.append(LayerCost("window", "buffer", 0, mo * no * co * T, 0, "h"))
    rows.append(LayerCost("temporal", "conv1x1", co * T, mo * no * co, co * T * mo * no, "h"))
    rows.append(LayerCost("flatten", "flatten", 0, 0, 0, "h"))
    width = mo * no * co
    for j, d in enumerate(config.d, 1):
        rows.append(LayerCost(f"dense-{j}", "dense", width * d, d, width * d, "h"))
        width = d
    rows.append(LayerCost("softmax", "softmax", width * config.k, config.k, width * config.k, "h"))
    return rows


def _max_pair(values):
    if len(values) == 1:
        return values[0]
    return max(a + b for a, b in zip(values, values[1:]))


@dataclass
class ResourceReport:
    config: ModelConfig
    layers: list
    m_w: int
    m_a_g: int
    m_a_h: int
    c: int
    bytes_per_value: int = 1
    conservative: bool = False

    @property
    def m_a(self) -> int:
        return self.m_a_g + self.m_a_h

    @property
    def m(self) -> int:
        return self.m_w + self.m_a

    @property
    def memory_bytes(self) -> int:
        return self.m * self.bytes_per_value

    def csv_lines(self) -> list[str]:
        lines = ["layer,kind,m_w,m_a,c"]
        lines += [f"{x.name},{x.kind},{x.m_w},{x.m_a},{x.c}" for x in self.layers]
        lines.append(f"total,network,{self.m_w},{self.m_a},{self.c}")
        lines.append(f"memory,m={self.m},m_a_g={self.m_a_g},m_a_h={self.m_a_h},"
                     f"bytes={self.memory_bytes}")
        return lines

    def format_table(self) -> str:
        out = [f"{'layer':<10} {'kind':<8} {'m_w':>12} {'m_a':>12} {'c':>14}"]
        for x in self.layers:
            out.append(f"{x.name:<10} {x.kind:<8} {x.m_w:>12,} {x.m_a:>12,} {x.c:>14,}")
        out.append("-" * len(out[0]))
        out.append(f"{'m_w':<20}{self.m_w:>14,}")
        out.append(f"{'m_a (g + h)':<20}{self.m_a:>14,}   ({self.m_a_g:,} + {self.m_a_h:,})")
        out.append(f"{'m':<20}{self.m:>14,}   = {self.memory_bytes:,} B at "
                   f"{self.bytes_per_value} B/value")
        out.append(f"{'c':<20}{self.c:>14,}")
        return "\n".join(out)


def totals(config: ModelConfig, bytes_per_value: int = 1, conservative: bool = False) -> ResourceReport:
    """Aggregate the per-layer costs.

    With ``conservative=True`` the h-side activation term is the largest sum
    over two consecutive h layers (window buffer included) instead of the
    window buffer alone.
    """
    rows = layer_costs(config)
    g_acts = [x.m_a for x in rows if x.stage == "g"]
    if conservative:
        m_a_h = _max_pair([x.m_a for x in rows if x.stage == "h" and x.kind != "flatten"])
    else:
        m_a_h = next(x.m_a for x in rows if x.kind == "buffer")
    return ResourceReport(
        config=config,
        layers=rows,
        m_w=sum(x.m_w for x in rows),
        m_a_g=_max_pair(g_acts),
        m_a_h=m_a_h,
        c=sum(x.c for x in rows),
        bytes_per_value=bytes_per_value,
        conservative=conservative,
    )


@dataclass(frozen=True)
class DeviceBudget:
    memory_bytes: int | None = None
    max_ops: int | None = None


@dataclass
class BudgetVerdict:
    passed: bool
    violations: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)  # limit - usage; must be > 0 to pass

    def describe(self) -> str:
        if self.passed:
            parts = [f"{k} margin {v:,}" for k, v in self.margins.items()]
            return "PASS" + (" (" + ", ".join(parts) + ")" if parts else "")
        return "FAIL: " + "; ".join(self.violations)


def check_budget(report: ResourceReport, budget: DeviceBudget) -> BudgetVerdict:
    """Strict comparison: usage equal to the budget fails."""
    verdict = BudgetVerdict(True)
    if budget.memory_bytes is not None:
        margin = budget.memory_bytes - report.memory_bytes
        verdict.margins["memory"] = margin
        if margin <= 0:
            verdict.passed = False
            verdict.violations.append(
                f"memory {report.memory_bytes:,} B >= budget {budget.memory_bytes:,} B "
                f"(over by {-margin:,} B)"
            )
    if budget.max_ops is not None:
        margin = budget.max_ops - report.c
        verdict.margins["c"] = margin
        if margin <= 0:
            verdict.passed = False
            verdict.violations.append(
                f"c {report.c:,} ops >= budget {budget.max_ops:,} (over by {-margin:,})"
            )
    return verdict


def count_ops_instrumented(model: Model, frames, recompute: bool = False) -> int:
    """Operations actually executed to classify one window of ``T`` frames.

    By default this is the steady-state streaming cost: the frames are pushed
    through a stride-1 engine and only the final push is counted, i.e. one
    feature extraction for the newest frame plus the temporal head.  This is
    the quantity ``totals(config).c`` models.  ``recompute=True`` instead
    counts a stand-alone ``classify_window`` call, which extracts features
    from all ``T`` frames.
    """
    frames = list(frames)
    if recompute:
        with OpCounter() as counter:
            classify_window(model, frames)
        return counter.count
    if len(frames) != model.config.T:
        raise InputError(f"expected {model.config.T} frames, got {len(frames)}")
    engine = StreamEngine(model, stride=1)
    for frame in frames[:-1]:
        engine.push_frame(frame)
    with OpCounter() as counter:
        pred = engine.push_frame(frames[-1])
    assert pred is not None
    return counter.count
