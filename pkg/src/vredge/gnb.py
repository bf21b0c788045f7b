"""5G base-station bottleneck model.

Slot-granular TDD service (default DDDSU) over per-flow RLC queues with
packet round-robin polling. Capacity is modeled at transport-block
granularity; one transport block of bits can leave per downlink slot, a
proportional share during the downlink symbols of the special slot, and
nothing during guard or uplink periods.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

SYMBOLS_PER_SLOT = 14

# slot kinds
D = "D"
S_DL = "S_dl"
S_GUARD = "S_guard"
S_UL = "S_ul"
U = "U"


@dataclass
class TddPattern:
    subframes: tuple[str, ...] = ("D", "D", "D", "S", "U")
    s_split: tuple[int, int, int] = (10, 2, 2)  # (dl, guard, ul) symbols of 14

    def __post_init__(self):
        if not self.subframes:
            raise ValueError("pattern must be non-empty")
        for kind in self.subframes:
            if kind not in ("D", "S", "U"):
                raise ValueError(f"bad subframe kind {kind!r}")
        if sum(self.s_split) != SYMBOLS_PER_SLOT:
            raise ValueError("s_split must sum to 14 symbols")


@dataclass
class LinkState:
    """Air-interface parameters; capacity is always derived, never cached."""

    scs_khz: int = 15
    bandwidth_hz: float = 200e6
    mcs_index: int = 20
    tb_size_bits: float = 1_000_000.0

    def __post_init__(self):
        if self.tb_size_bits <= 0:
            raise ValueError("tb_size_bits must be > 0")
        if (1000 * 15) % self.scs_khz != 0:
            raise ValueError("scs_khz must divide 15000 evenly")

    @property
    def slot_us(self) -> int:
        return 1000 * 15 // self.scs_khz


@dataclass
class GnbConfig:
    pattern: TddPattern = field(default_factory=TddPattern)
    link: LinkState = field(default_factory=LinkState)
    capacity_override_bps: Optional[float] = None
    per_queue_limit_bytes: Optional[int] = None
    # RAN pipeline latency (scheduling lead + decode) added after air time.
    ran_processing_delay_us: int = 0

    def __post_init__(self):
        if self.capacity_override_bps is not None:
            # Back-derive the transport block so configured capacity is exact.
            frac = dl_fraction(self.pattern)
            slots_per_s = 1_000_000 / self.link.slot_us
            self.link.tb_size_bits = self.capacity_override_bps / (slots_per_s * frac)


def dl_fraction(pattern: TddPattern) -> float:
    dl_syms, _, _ = pattern.s_split
    full = sum(1 for k in pattern.subframes if k == "D")
    partial = sum(dl_syms / SYMBOLS_PER_SLOT for k in pattern.subframes if k == "S")
    return (full + partial) / len(pattern.subframes)


def slot_kind_at(pattern: TddPattern, link: LinkState, t: int) -> str:
    """Symbol-resolved kind of the TDD position at time t (us)."""
    slot_us = link.slot_us
    idx = (t // slot_us) % len(pattern.subframes)
    kind = pattern.subframes[idx]
    if kind != "S":
        return kind
    offset = t % slot_us
    sym = offset * SYMBOLS_PER_SLOT // slot_us
    dl_syms, guard_syms, _ = pattern.s_split
    if sym < dl_syms:
        return S_DL
    if sym < dl_syms + guard_syms:
        return S_GUARD
    return S_UL


def capacity(link: LinkState, pattern: TddPattern,
             override_bps: Optional[float] = None) -> float:
    """Average deliverable bps: TB size x slot rate x downlink duty fraction."""
    if override_bps is not None:
        return override_bps
    slots_per_s = 1_000_000 / link.slot_us
    return link.tb_size_bits * slots_per_s * dl_fraction(pattern)


def slot_budget_bits(config: GnbConfig, kind: str) -> float:
    if kind == "D":
        return config.link.tb_size_bits
    if kind == "S":
        return config.link.tb_size_bits * config.pattern.s_split[0] / SYMBOLS_PER_SLOT
    return 0.0


def air_done_time(config: GnbConfig, slot_start: int) -> int:
    """Instant the slot's downlink payload is over the air."""
    slot_us = config.link.slot_us
    idx = (slot_start // slot_us) % len(config.pattern.subframes)
    if config.pattern.subframes[idx] == "S":
        dl_syms = config.pattern.s_split[0]
        return slot_start + math.ceil(dl_syms * slot_us / SYMBOLS_PER_SLOT)
    return slot_start + slot_us


def next_uplink_time(config: GnbConfig, t: int) -> int:
    """Earliest instant >= t inside an uplink period (U slot or S uplink symbols)."""
    slot_us = config.link.slot_us
    pattern = config.pattern.subframes
    dl_syms, guard_syms, _ = config.pattern.s_split
    for probe in range(2 * len(pattern) + 1):
        slot_start = (t // slot_us + probe) * slot_us
        idx = (slot_start // slot_us) % len(pattern)
        kind = pattern[idx]
        if kind == "U":
            return max(t, slot_start)
        if kind == "S":
            ul_start = slot_start + math.ceil(
                (dl_syms + guard_syms) * slot_us / SYMBOLS_PER_SLOT)
            slot_end = slot_start + slot_us
            if t < slot_end and max(t, ul_start) < slot_end:
                return max(t, ul_start)
    raise RuntimeError("pattern has no uplink period")


class UnknownFlowError(KeyError):
    pass


@dataclass(slots=True)
class _Queued:
    size_bytes: int
    enqueue_us: int
    payload: object


class Gnb:
    """Per-flow RLC queues served packet round-robin at slot boundaries."""

    def __init__(self, config: GnbConfig):
        self.config = config
        self.queues: dict[int, deque[_Queued]] = {}
        self.byte_counts: dict[int, int] = {}
        self.enqueued_bytes: dict[int, int] = {}
        self.served_bytes: dict[int, int] = {}
        self.dropped_bytes: dict[int, int] = {}
        self.drop_counts: dict[int, int] = {}
        self._rr_order: list[int] = []
        self._rr_pos = 0
        self.service_log: list[tuple[int, str, int, int]] | None = None

    def register_flow(self, flow_id: int) -> None:
        if flow_id in self.queues:
            return
        self.queues[flow_id] = deque()
        self.byte_counts[flow_id] = 0
        self.enqueued_bytes[flow_id] = 0
        self.served_bytes[flow_id] = 0
        self.dropped_bytes[flow_id] = 0
        self.drop_counts[flow_id] = 0
        self._rr_order.append(flow_id)

    def enqueue(self, flow_id: int, size_bytes: int, t: int,
                payload: object = None) -> bool:
        if flow_id not in self.queues:
            raise UnknownFlowError(flow_id)
        limit = self.config.per_queue_limit_bytes
        if limit is not None and self.byte_counts[flow_id] + size_bytes > limit:
            self.drop_counts[flow_id] += 1
            self.dropped_bytes[flow_id] += size_bytes
            return False
        self.queues[flow_id].append(_Queued(size_bytes, t, payload))
        self.byte_counts[flow_id] += size_bytes
        self.enqueued_bytes[flow_id] += size_bytes
        return True

    def snapshot_rbs(self) -> dict[int, int]:
        """Current per-flow queue occupancy in bytes; zero entries included."""
        return dict(self.byte_counts)

    def serve_slot(self, slot_start: int) -> list[tuple[int, object, int]]:
        """Serve one downlink-capable slot starting at `slot_start`.

        Packets enqueued strictly before the slot start share the slot's
        transport-block budget, one packet per queue visit, cycling until the
        budget is exhausted. Returns (flow_id, payload, air_done_us) tuples.
        """
        slot_us = self.config.link.slot_us
        idx = (slot_start // slot_us) % len(self.config.pattern.subframes)
        kind = self.config.pattern.subframes[idx]
        budget = slot_budget_bits(self.config, kind)
        if budget <= 0 or not self._rr_order:
            return []
        done_at = air_done_time(self.config, slot_start)
        delivered: list[tuple[int, object, int]] = []
        n = len(self._rr_order)
        idle_visits = 0
        while idle_visits < n:
            flow_id = self._rr_order[self._rr_pos % n]
            self._rr_pos = (self._rr_pos + 1) % n
            q = self.queues[flow_id]
            if q and q[0].enqueue_us < slot_start and q[0].size_bytes * 8 <= budget:
                pkt = q.popleft()
                budget -= pkt.size_bytes * 8
                self.byte_counts[flow_id] -= pkt.size_bytes
                self.served_bytes[flow_id] += pkt.size_bytes
                delivered.append((flow_id, pkt.payload, done_at))
                if self.service_log is not None:
                    self.service_log.append(
                        (slot_start, kind, flow_id, pkt.size_bytes))
                idle_visits = 0
            else:
                idle_visits += 1
        return delivered


def processing_delay_bounds(config: GnbConfig, burst_bytes: int,
                            mss: int = 1448, step_us: int = 100) -> tuple[int, int]:
    """(min, max) last-byte delay for a burst landing on an idle cell.

    Phase sweep: drop the burst at every `step_us` offset within one pattern
    period and drain it slot by slot under the same budget rules the live
    queue uses.
    """
    if burst_bytes <= 0:
        raise ValueError("burst_bytes must be > 0")
    slot_us = config.link.slot_us
    period = slot_us * len(config.pattern.subframes)
    sizes = [mss] * (burst_bytes // mss)
    if burst_bytes % mss:
        sizes.append(burst_bytes % mss)
    lo, hi = None, None
    for offset in range(0, period, step_us):
        remaining = list(sizes)
        slot_start = (offset // slot_us + 1) * slot_us
        last_done = None
        while remaining:
            idx = (slot_start // slot_us) % len(config.pattern.subframes)
            budget = slot_budget_bits(config, config.pattern.subframes[idx])
            served_any = False
            while remaining and remaining[0] * 8 <= budget:
                budget -= remaining.pop(0) * 8
                served_any = True
            if served_any:
                last_done = air_done_time(config, slot_start)
            slot_start += slot_us
        delay = last_done + config.ran_processing_delay_us - offset
        lo = delay if lo is None else min(lo, delay)
        hi = delay if hi is None else max(hi, delay)
    return lo, hi
