"""Operation tallies and memory accounting for training runs.

The counter records scalar arithmetic by kind (ADD, MUL, binary-operand
MUL, bit shift, EXP, float ops) and by phase.  Two counting modes exist:

* ``event``: matmul-like work is charged per nonzero of the data operand
  (spikes that did not fire cost nothing), element-wise work is charged
  densely.  This models an event-driven integer implementation and is the
  default.
* ``dense``: everything is charged by tensor shape alone, so two runs over
  identically shaped data always produce identical counts.

Memory accounting prices a declared inventory of tensors at their declared
bit widths, one byte-rounding per tensor, and can re-price the same
inventory at 32-bit floats for comparison.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, replace

KINDS = ("add", "mul", "bmul", "shift", "exp", "float_ops")
PHASES = ("forward", "backward", "update")
MODES = ("event", "dense")


class OpCounter:
    """Single-writer tally of scalar operations, mergeable across shards."""

    def __init__(self, mode: str = "event"):
        if mode not in MODES:
            raise ValueError(f"unknown counting mode {mode!r}")
        self.mode = mode
        self._phase = "forward"
        self._tally = {(p, k): 0 for p in PHASES for k in KINDS}
        self.saturations = 0

    def record(self, kind: str, n: int) -> None:
        if kind not in KINDS:
            raise ValueError(f"unknown op kind {kind!r}")
        if n < 0:
            raise ValueError("op count increments must be non-negative")
        self._tally[(self._phase, kind)] += int(n)

    @contextmanager
    def phase(self, name: str):
        if name not in PHASES:
            raise ValueError(f"unknown phase {name!r}")
        prev, self._phase = self._phase, name
        try:
            yield self
        finally:
            self._phase = prev

    def note_saturation(self, n: int) -> None:
        self.saturations += int(n)

    def total(self, kind: str) -> int:
        return sum(self._tally[(p, kind)] for p in PHASES)

    def phase_total(self, phase: str, kind: str) -> int:
        return self._tally[(phase, kind)]

    def merge(self, other: "OpCounter") -> None:
        for key, n in other._tally.items():
            self._tally[key] += n
        self.saturations += other.saturations

    def snapshot(self) -> dict[str, int]:
        return {k: self.total(k) for k in KINDS}

    def delta_since(self, before: dict[str, int]) -> dict[str, int]:
        return {k: self.total(k) - before.get(k, 0) for k in KINDS}


def charge_corr_trace_step(counter: OpCounter, batch: int, n_out: int,
                           fan_in: int, nnz_sg: int) -> None:
    """Price one timestep of correlation-trace accumulation.

    The 0/1 surrogate gate is evaluated for every postsynaptic neuron (one
    binary multiply each); presynaptic-trace rows are added only where the
    gate is open.  Dense mode charges every scalar slot instead.
    """
    if counter.mode == "dense":
        counter.record("bmul", batch * n_out * fan_in)
        counter.record("add", batch * n_out * fan_in)
    else:
        counter.record("bmul", batch * n_out)
        counter.record("add", nnz_sg * fan_in)


def charge_gradient_reduce(counter: OpCounter, trace_numel: int) -> None:
    """Price the feedback x trace product and its batch-sum reduction.

    One general multiply and one accumulation add per trace element,
    independent of mode; the trace itself is dense.
    """
    counter.record("mul", trace_numel)
    counter.record("add", trace_numel)


def tensor_bytes(numel: int, bits: int) -> int:
    """Bytes for `numel` values at `bits` each, rounded up per tensor."""
    return -(-numel * bits // 8)


@dataclass(frozen=True)
class TensorItem:
    """One tensor (or scalar) in a memory inventory."""

    name: str
    numel: int
    bits: int
    kind: str  # "static" or "dynamic"

    @property
    def bytes(self) -> int:
        return tensor_bytes(self.numel, self.bits)


@dataclass(frozen=True)
class MemoryReport:
    static_bytes: int
    dynamic_bytes: int
    items: tuple[TensorItem, ...]

    @property
    def total_bytes(self) -> int:
        return self.static_bytes + self.dynamic_bytes

    def as_dict(self) -> dict:
        return {
            "static_bytes": self.static_bytes,
            "dynamic_bytes": self.dynamic_bytes,
            "total_bytes": self.total_bytes,
            "items": [
                {"name": i.name, "numel": i.numel, "bits": i.bits,
                 "kind": i.kind, "bytes": i.bytes}
                for i in self.items
            ],
        }

    def as_text(self) -> str:
        lines = [
            f"static_bytes: {self.static_bytes}",
            f"dynamic_bytes: {self.dynamic_bytes}",
            f"total_bytes: {self.total_bytes}",
        ]
        for i in self.items:
            lines.append(f"  {i.kind}/{i.name}: {i.bytes}")
        return "\n".join(lines)


def summarize(items) -> MemoryReport:
    items = tuple(items)
    static = sum(i.bytes for i in items if i.kind == "static")
    dynamic = sum(i.bytes for i in items if i.kind == "dynamic")
    return MemoryReport(static, dynamic, items)


def reprice_fp32(items) -> tuple[TensorItem, ...]:
    """The same inventory with every tensor held as 32-bit floats."""
    return tuple(replace(i, bits=32) for i in items)
