"""Cycle-approximate cost model of the five-stage kNN classification datapath.

Stages run back to back with no overlap:

- distance calc: one MAC per stored feature (store reads ride along with the MACs)
- storage unit: fixed overhead only
- control unit: per candidate, one constant-cost compare plus ``k`` insert steps
- voting unit: one step per neighbour
- output unit: fixed overhead only
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

from .exceptions import InvalidParams
from .model_store import USER_DATA_BUDGET_BYTES, footprint_for

STAGES = ("dmcd", "su", "cu", "avu", "output")
DEFAULT_CLOCK_HZ = 80_000_000
DEFAULT_SAMPLE_RATE_HZ = 178.0

CSV_COLUMNS = (
    "m", "k", "n", "cycles", "latency_us", "windows_per_s",
    "store_bytes", "fits_budget", "realtime_ok",
)


@dataclass(frozen=True)
class StageCostModel:
    cycles_per_mac: int = 1
    cycles_per_compare: int = 1
    cycles_per_insert_step: int = 1
    cycles_per_vote_step: int = 1
    fixed_overhead_cycles: int = 10

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            floor = 0 if f.name == "fixed_overhead_cycles" else 1
            if not isinstance(value, int) or value < floor:
                raise InvalidParams(f"{f.name} must be an integer >= {floor}, got {value!r}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[str]) -> "StageCostModel":
        """Build from ``key=value`` strings, e.g. ``["cycles_per_mac=2"]``."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for pair in pairs:
            key, sep, value = pair.partition("=")
            key = key.strip()
            if not sep or key not in known:
                raise InvalidParams(f"unknown cost entry {pair!r}; known keys: {sorted(known)}")
            try:
                kwargs[key] = int(value)
            except ValueError:
                raise InvalidParams(f"cost {key} must be an integer, got {value!r}") from None
        return cls(**kwargs)

    def compare_cycles(self, d1: int, d2: int) -> int:
        """Cycles charged for one distance comparison. Operands never matter."""
        return self.cycles_per_compare


@dataclass(frozen=True)
class SimReport:
    m: int
    k: int
    n: int
    cycles_per_window: int
    stage_cycles: dict
    clock_hz: float
    latency_us: float
    max_windows_per_second: float
    store_bytes: int
    fits_budget: bool
    realtime_ok: bool

    def csv_row(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "n": self.n,
            "cycles": self.cycles_per_window,
            "latency_us": f"{self.latency_us:.6f}",
            "windows_per_s": f"{self.max_windows_per_second:.6f}",
            "store_bytes": self.store_bytes,
            "fits_budget": str(self.fits_budget).lower(),
            "realtime_ok": str(self.realtime_ok).lower(),
        }

    def to_json(self) -> dict:
        return asdict(self)


def stage_cycles(m: int, n: int, k: int, model: StageCostModel) -> dict[str, int]:
    oh = model.fixed_overhead_cycles
    return {
        "dmcd": m * n * model.cycles_per_mac + oh,
        "su": oh,
        "cu": m * (model.cycles_per_compare + k * model.cycles_per_insert_step) + oh,
        "avu": k * model.cycles_per_vote_step + oh,
        "output": oh,
    }


def _check(m, n, k, clock_hz):
    for name, value in (("m", m), ("n", n), ("k", k)):
        if not isinstance(value, int) or value < 1:
            raise InvalidParams(f"{name} must be a positive integer, got {value!r}")
    if k > m:
        raise InvalidParams(f"k={k} exceeds store entries m={m}")
    if not clock_hz > 0:
        raise InvalidParams(f"clock_hz must be positive, got {clock_hz!r}")


def simulate_classification(
    m: int,
    n: int,
    k: int,
    model: StageCostModel | None = None,
    clock_hz: float = DEFAULT_CLOCK_HZ,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> SimReport:
    """Cost of classifying one window against ``m`` stored exemplars.

    ``realtime_ok`` compares the latency with the window period
    ``n / sample_rate_hz``.
    """
    model = model or StageCostModel()
    _check(m, n, k, clock_hz)
    stages = stage_cycles(m, n, k, model)
    cycles = sum(stages.values())
    latency_us = cycles / clock_hz * 1e6
    store_bytes = footprint_for(m, n).total_bytes
    return SimReport(
        m=m,
        k=k,
        n=n,
        cycles_per_window=cycles,
        stage_cycles=stages,
        clock_hz=clock_hz,
        latency_us=latency_us,
        max_windows_per_second=clock_hz / cycles,
        store_bytes=store_bytes,
        fits_budget=store_bytes <= USER_DATA_BUDGET_BYTES,
        realtime_ok=latency_us <= n / sample_rate_hz * 1e6,
    )


def trace_selection(distances: Sequence[int], k: int, model: StageCostModel | None = None) -> list[int]:
    """Per-candidate control-unit cycles while selecting from real distances.

    Each candidate is charged one compare against the current k-th best and
    a full k-step shift, the worst case of the insertion circuit; the list
    therefore sums to the ``cu`` stage cost minus its overhead.
    """
    model = model or StageCostModel()
    charged = []
    best: list[int] = []
    for d in distances:
        kth = best[-1] if best else 0
        charged.append(model.compare_cycles(d, kth) + k * model.cycles_per_insert_step)
        if len(best) < k or d < kth:
            bisect.insort_right(best, d)
            del best[k:]
    return charged


def sweep_design_space(
    m_values: Sequence[int],
    k_values: Sequence[int],
    n: int,
    model: StageCostModel | None = None,
    clock_hz: float = DEFAULT_CLOCK_HZ,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> list[SimReport]:
    if not m_values or not k_values:
        raise InvalidParams("sweep needs at least one m and one k")
    return [
        simulate_classification(m, n, k, model, clock_hz, sample_rate_hz)
        for m in m_values
        for k in k_values
    ]


def reports_to_csv(reports: Iterable[SimReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()
