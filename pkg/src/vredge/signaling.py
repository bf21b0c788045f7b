"""Cross-layer reporting channel between base station and user-plane anchor.

Queue occupancies travel every millisecond in a single multi-flow report;
link state travels only on change. A fixed-width little-endian codec exists
for trace dumps and interoperability tests; in-simulation delivery passes
the typed objects themselves.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class GnbReport:
    timestamp_us: int
    entries: tuple[tuple[int, int], ...]  # (flow_id, rbs_bytes), every flow once


@dataclass(frozen=True)
class LinkStateReport:
    timestamp_us: int
    tb_size_bits: float
    scs_khz: int
    bandwidth_hz: float
    mcs_index: int


@dataclass
class WiredPathModel:
    """Fixed aggregation-segment delay between base station and anchor."""

    one_way_delay_us: int = 1000
    symmetric: bool = True

    def __post_init__(self):
        if self.one_way_delay_us < 0:
            raise ValueError("one_way_delay_us must be >= 0")


class ClockViolationError(Exception):
    pass


MSG_RBS = 1
MSG_LINKSTATE = 2

_HEADER = struct.Struct("<BQH")
_RBS_ENTRY = struct.Struct("<II")
_LINKSTATE_BODY = struct.Struct("<IHIB")


def encode_report(report) -> bytes:
    """Fixed-width little-endian encoding; round-trips bit-exactly."""
    if isinstance(report, GnbReport):
        out = [_HEADER.pack(MSG_RBS, report.timestamp_us, len(report.entries))]
        for flow_id, rbs in report.entries:
            out.append(_RBS_ENTRY.pack(flow_id, rbs))
        return b"".join(out)
    if isinstance(report, LinkStateReport):
        head = _HEADER.pack(MSG_LINKSTATE, report.timestamp_us, 0)
        body = _LINKSTATE_BODY.pack(round(report.tb_size_bits), report.scs_khz,
                                    round(report.bandwidth_hz), report.mcs_index)
        return head + body
    raise TypeError(f"cannot encode {type(report).__name__}")


def decode_report(data: bytes):
    msg_type, ts, flow_count = _HEADER.unpack_from(data, 0)
    if msg_type == MSG_RBS:
        entries = []
        off = _HEADER.size
        for _ in range(flow_count):
            entries.append(_RBS_ENTRY.unpack_from(data, off))
            off += _RBS_ENTRY.size
        return GnbReport(ts, tuple(entries))
    if msg_type == MSG_LINKSTATE:
        tb, scs, bw, mcs = _LINKSTATE_BODY.unpack_from(data, _HEADER.size)
        return LinkStateReport(ts, float(tb), scs, float(bw), mcs)
    raise ValueError(f"unknown message type {msg_type}")


class GnbReporter:
    """Base-station side: periodic occupancy reports, change-only link state."""

    def __init__(self, snapshot_rbs, interval_us: int = 1000):
        self.snapshot_rbs = snapshot_rbs
        self.interval_us = interval_us
        self._last_ts: Optional[int] = None
        self._last_link: Optional[LinkStateReport] = None

    def emit_rbs_report(self, t: int) -> GnbReport:
        if self._last_ts is not None and t <= self._last_ts:
            raise ClockViolationError("report timestamps must strictly increase")
        self._last_ts = t
        entries = tuple(sorted(self.snapshot_rbs().items()))
        return GnbReport(t, entries)

    def emit_link_state_if_changed(self, t: int, tb_size_bits: float,
                                   scs_khz: int, bandwidth_hz: float,
                                   mcs_index: int) -> Optional[LinkStateReport]:
        report = LinkStateReport(t, tb_size_bits, scs_khz, bandwidth_hz, mcs_index)
        prev = self._last_link
        if prev is not None and (prev.tb_size_bits, prev.scs_khz,
                                 prev.bandwidth_hz, prev.mcs_index) == (
                report.tb_size_bits, report.scs_khz,
                report.bandwidth_hz, report.mcs_index):
            return None
        self._last_link = report
        return report


class WiredDelayEstimator:
    """EWMA (alpha=1/8) of report transit time; exact after the first sample
    on a fixed symmetric wire."""

    ALPHA = 0.125

    def __init__(self):
        self.estimate_us: Optional[float] = None

    def measure(self, report_timestamp_us: int, receive_time_us: int) -> int:
        delta = receive_time_us - report_timestamp_us
        if delta < 0:
            raise ClockViolationError(
                f"receive time {receive_time_us} before report {report_timestamp_us}")
        if self.estimate_us is None:
            self.estimate_us = float(delta)
        else:
            self.estimate_us += self.ALPHA * (delta - self.estimate_us)
        return delta


def measure_wired_delay(report: GnbReport, receive_time_us: int,
                        estimator: Optional[WiredDelayEstimator] = None) -> int:
    """One-way wired delay from the report's embedded timestamp."""
    if estimator is not None:
        return estimator.measure(report.timestamp_us, receive_time_us)
    delta = receive_time_us - report.timestamp_us
    if delta < 0:
        raise ClockViolationError("receive time before report emission")
    return delta
