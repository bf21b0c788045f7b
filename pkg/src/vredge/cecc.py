"""Early congestion control at the user-plane anchor.

The anchor sits inline on both directions of every flow. Downlink it logs
egress traffic and estimates frame sizes; uplink it intercepts the ACK
stream. Each control cycle it predicts the near-term delay of every
candidate flow from the base station's queue reports, evicts low-priority
flows while any prediction exceeds the delay standard, and gates the
admitted senders with a two-ACK release: a window large enough for one
frame, immediately followed by a zero window.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import Engine
from .gnb import Gnb, GnbConfig, capacity, processing_delay_bounds
from .signaling import GnbReport, LinkStateReport, WiredDelayEstimator
from .transport import AckSegment, Connection, Segment


class PredictionError(Exception):
    pass


class TxLog:
    """Append-only per-flow egress log supporting 'bytes since t' queries."""

    def __init__(self):
        self._ts: dict[int, list[int]] = {}
        self._cum: dict[int, list[int]] = {}

    def register(self, flow_id: int) -> None:
        self._ts.setdefault(flow_id, [])
        self._cum.setdefault(flow_id, [])

    def record(self, flow_id: int, t: int, nbytes: int) -> None:
        ts = self._ts.setdefault(flow_id, [])
        cum = self._cum.setdefault(flow_id, [])
        if ts and t < ts[-1]:
            raise ValueError("egress log timestamps must be non-decreasing")
        ts.append(t)
        cum.append((cum[-1] if cum else 0) + nbytes)

    def bytes_after(self, flow_id: int, boundary_us: float) -> int:
        """Sum of entries with timestamp strictly greater than the boundary."""
        if flow_id not in self._ts:
            raise KeyError(flow_id)
        ts = self._ts[flow_id]
        cum = self._cum[flow_id]
        if not ts:
            return 0
        idx = bisect_right(ts, boundary_us)
        if idx >= len(ts):
            return 0
        return cum[-1] - (cum[idx - 1] if idx > 0 else 0)

    def total(self, flow_id: int) -> int:
        cum = self._cum.get(flow_id)
        return cum[-1] if cum else 0

    def entries(self, flow_id: int) -> list[tuple[int, int]]:
        ts = self._ts.get(flow_id, [])
        cum = self._cum.get(flow_id, [])
        out = []
        prev = 0
        for t, c in zip(ts, cum):
            out.append((t, c - prev))
            prev = c
        return out

    def flows(self) -> list[int]:
        return sorted(self._ts)


class FlowEstimate:
    """Largest frame observed over a trailing window; config hint until then."""

    def __init__(self, bootstrap_bytes: int, window_s: float = 2.0):
        self.bootstrap_bytes = bootstrap_bytes
        self.window_us = int(window_s * 1e6)
        self._frames: deque[tuple[int, int]] = deque()

    def observe(self, t: int, frame_bytes: int) -> None:
        self._frames.append((t, frame_bytes))
        self._prune(t)

    def _prune(self, t: int) -> None:
        while self._frames and self._frames[0][0] < t - self.window_us:
            self._frames.popleft()

    def frame_size_max(self, t: int) -> int:
        self._prune(t)
        if not self._frames:
            return self.bootstrap_bytes
        return max(size for _, size in self._frames)


@dataclass
class DelayPrediction:
    flow_id: int
    wired_d_us: float
    queue_d_us: float
    processing_d_us: float

    @property
    def total_us(self) -> float:
        return self.wired_d_us + self.queue_d_us + self.processing_d_us


@dataclass
class CeccConfig:
    enabled: bool = False
    cycle_us: int = 1000
    delay_standard_us: int = 10_000
    rwnd_headroom: float = 1.2
    frame_window_s: float = 2.0


def synthesize_acks(last_returned_seq: int, max_received_seq: int, mss: int,
                    template: AckSegment) -> list[AckSegment]:
    """Fill the gap between what the sender has seen and what the client
    acknowledged with evenly spaced cumulative ACKs, one per segment size.

    Every generated ACK copies the stored real ACK except for its sequence
    number; the final one lands exactly on the client's maximum.
    """
    if max_received_seq < last_returned_seq:
        raise ValueError("max_received_seq below last_returned_seq")
    acks = []
    seq = last_returned_seq + mss
    while seq < max_received_seq:
        acks.append(AckSegment(template.flow_id, seq, template.rwnd_bytes,
                               template.ts_us))
        seq += mss
    if max_received_seq > last_returned_seq:
        acks.append(AckSegment(template.flow_id, max_received_seq,
                               template.rwnd_bytes, template.ts_us))
    return acks


def schedule_flows(candidates: list[int], priorities: dict[int, int],
                   standard_us: float,
                   predict: Callable[[int, int], float],
                   ) -> tuple[list[int], list[int]]:
    """Eviction loop: while any predicted delay exceeds the standard, drop the
    minimal-priority flow and re-predict with the shrunk set size.

    `predict(flow_id, n)` returns the predicted total delay with n flows
    sharing the bottleneck. Ties on priority evict the larger predicted
    delay, then the lower flow id. Returns (admitted, evicted_in_order).
    """
    working = sorted(candidates)
    evicted: list[int] = []
    while working:
        n = len(working)
        preds = {f: predict(f, n) for f in working}
        if max(preds.values()) <= standard_us:
            break
        victim = min(working,
                     key=lambda f: (priorities.get(f, 0), -preds[f], f))
        working.remove(victim)
        evicted.append(victim)
    return working, evicted


@dataclass
class _AckStore:
    """Per-flow ACK state held at the anchor."""

    template: Optional[AckSegment] = None   # highest-sequence real ACK
    max_received_seq: int = 0
    last_returned_seq: int = 0


@dataclass
class DecisionRecord:
    cycle_ts_us: int
    flow_id: int
    predicted_total_us: float
    priority: int
    admitted: bool
    rotation_count: int = 0  # frame passes seen so far; not part of the CSV


class Upf:
    """User-plane anchor: forwards data, intercepts ACKs, runs the control loop."""

    def __init__(self, engine: Engine, gnb_config: GnbConfig,
                 cecc: CeccConfig, wire_delay_us: int, mss: int = 1448):
        self.engine = engine
        self.gnb_config = gnb_config
        self.cecc = cecc
        self.wire_delay_us = wire_delay_us
        self.mss = mss

        self.txlog = TxLog()
        self.wired_estimator = WiredDelayEstimator()
        self.link: Optional[LinkStateReport] = None
        self.last_report: Optional[GnbReport] = None
        self._report_rbs: dict[int, int] = {}
        self._tx_boundary_us: float = -1.0

        self.priorities: dict[int, int] = {}
        self.estimates: dict[int, FlowEstimate] = {}
        self.ack_stores: dict[int, _AckStore] = {}
        self.admitted_last_cycle: list[int] = []
        self.n_active: int = 0

        self.connections: dict[int, Connection] = {}
        self.reliable_flows: list[int] = []
        self.deliver_to_gnb: Optional[Callable[[int, list[Segment], int], None]] = None

        self.decision_log: list[DecisionRecord] = []
        self.admission_history: dict[int, list[int]] = {}
        self.admission_rotations: dict[int, list[int]] = {}
        self.release_log: dict[int, list[tuple[int, int]]] = {}
        self.cycle_count = 0
        self.rotation_count = 0
        self._frame_bytes_seen: dict[int, int] = {}
        self._bounds_cache: dict[int, tuple[int, int]] = {}

    # -- registration --------------------------------------------------------

    def register_flow(self, flow_id: int, conn: Optional[Connection],
                      bootstrap_frame_bytes: int) -> None:
        self.priorities[flow_id] = 0
        self.estimates[flow_id] = FlowEstimate(bootstrap_frame_bytes,
                                               self.cecc.frame_window_s)
        self.admission_history[flow_id] = []
        self.admission_rotations[flow_id] = []
        self.txlog.register(flow_id)
        if conn is not None and conn.cc_kind != "udp":
            self.connections[flow_id] = conn
            self.reliable_flows.append(flow_id)
            self.ack_stores[flow_id] = _AckStore()

    # -- downlink data path ----------------------------------------------------

    def forward_downlink(self, flow_id: int, segments: list[Segment], t: int) -> None:
        """Record egress and relay the batch toward the base station."""
        total = sum(s.len_bytes for s in segments)
        self.txlog.record(flow_id, t, total)
        for seg in segments:
            self._frame_bytes_seen[flow_id] = (
                self._frame_bytes_seen.get(flow_id, 0) + seg.len_bytes)
            if seg.frame_end:
                size = self._frame_bytes_seen.pop(flow_id, seg.len_bytes)
                self.estimates[flow_id].observe(t, size)
                self.flow_monitor(flow_id)
        if self.deliver_to_gnb is not None:
            self.deliver_to_gnb(flow_id, segments, t)

    # -- uplink ACK path ----------------------------------------------------------

    def on_ue_ack(self, ack: AckSegment, t: int) -> None:
        if not self.cecc.enabled or ack.flow_id not in self.ack_stores:
            conn = self.connections.get(ack.flow_id)
            if conn is not None:
                conn.deliver_acks([ack], t)
            return
        store = self.ack_stores[ack.flow_id]
        if ack.cum_ack_seq >= store.max_received_seq:
            store.max_received_seq = ack.cum_ack_seq
            store.template = ack

    # -- signaling ingestion ---------------------------------------------------------

    def on_link_state(self, report: LinkStateReport, t: int) -> None:
        self.link = report
        self._bounds_cache.clear()

    def on_gnb_report(self, report: GnbReport, receive_time: int) -> None:
        """Ingest a queue report; stale (out of order) reports are dropped."""
        if (self.last_report is not None
                and report.timestamp_us <= self.last_report.timestamp_us):
            return
        self.last_report = report
        self._report_rbs = dict(report.entries)
        self.wired_estimator.measure(report.timestamp_us, receive_time)
        # Egress sent before (report emission - wire transit) was already
        # visible to the base station when it snapshotted its queues.
        self._tx_boundary_us = report.timestamp_us - (
            self.wired_estimator.estimate_us or 0.0)
        if self.cecc.enabled:
            self.run_control_cycle(receive_time)

    # -- prediction ---------------------------------------------------------------------

    def capacity_bps(self) -> float:
        if self.gnb_config.capacity_override_bps is not None:
            return self.gnb_config.capacity_override_bps
        if self.link is None:
            raise PredictionError("link state unknown")
        slots_per_s = 1_000_000 / self.gnb_config.link.slot_us
        from .gnb import dl_fraction
        return self.link.tb_size_bits * slots_per_s * dl_fraction(self.gnb_config.pattern)

    def tx_size_since_report(self, flow_id: int) -> int:
        if self.last_report is None:
            return 0
        return self.txlog.bytes_after(flow_id, self._tx_boundary_us)

    def frame_size_estimate(self, flow_id: int, t: Optional[int] = None) -> int:
        return self.estimates[flow_id].frame_size_max(
            self.engine.now if t is None else t)

    def _processing_upper_us(self, frame_bytes: int) -> int:
        frame_bytes = max(frame_bytes, 1)  # idle flow still crosses the air once
        if frame_bytes not in self._bounds_cache:
            self._bounds_cache[frame_bytes] = processing_delay_bounds(
                self.gnb_config, frame_bytes, mss=self.mss)
        return self._bounds_cache[frame_bytes][1]

    def predict_delay(self, flow_id: int, n_flows: Optional[int] = None,
                      ) -> DelayPrediction:
        """Near-term delay if this flow's next frame joins n flows at the cell."""
        if self.last_report is None:
            raise PredictionError("no base-station report received yet")
        n = self.n_active if n_flows is None else n_flows
        if n <= 0:
            raise PredictionError("flow count must be positive")
        th = self.capacity_bps()
        frame_est = self.frame_size_estimate(flow_id)
        numerator_bytes = (self._report_rbs.get(flow_id, 0)
                           + self.tx_size_since_report(flow_id)
                           + frame_est)
        queue_d_us = numerator_bytes * 8 / (th / n) * 1e6
        wired = self.wired_estimator.estimate_us or 0.0
        return DelayPrediction(
            flow_id=flow_id,
            wired_d_us=wired,
            queue_d_us=queue_d_us,
            processing_d_us=self._processing_upper_us(frame_est),
        )

    # -- scheduling -----------------------------------------------------------------------

    def flow_monitor(self, passed_flow_id: int) -> dict[int, int]:
        """A frame passed: everyone's priority rises, the sender drops to zero."""
        self.rotation_count += 1
        for fid in self.priorities:
            self.priorities[fid] += 1
        self.priorities[passed_flow_id] = 0
        return self.priorities

    def flow_schedule(self, candidates: list[int], standard_us: float,
                      predict: Optional[Callable[[int, int], float]] = None,
                      ) -> list[int]:
        if predict is None:
            def predict(flow_id: int, n: int) -> float:
                self.n_active = n
                return self.predict_delay(flow_id, n).total_us
        admitted, _ = schedule_flows(candidates, self.priorities, standard_us,
                                     predict)
        return admitted

    def release_acks(self, flow_id: int, frame_size_est: int,
                     t: int) -> list[AckSegment]:
        """Two-ACK gate: open the window for about one frame, then slam it shut."""
        store = self.ack_stores[flow_id]
        if store.template is None:
            return []
        open_rwnd = math.ceil(self.cecc.rwnd_headroom * frame_size_est)
        first = AckSegment(flow_id, store.max_received_seq, open_rwnd,
                           store.template.ts_us)
        second = AckSegment(flow_id, store.max_received_seq, 0,
                            store.template.ts_us)
        store.last_returned_seq = store.max_received_seq
        return [first, second]

    def _segment_tx_time_us(self) -> int:
        try:
            th = self.capacity_bps()
        except PredictionError:
            return 13
        return max(1, math.ceil(self.mss * 8e6 / th))

    def run_control_cycle(self, t: int) -> list[int]:
        """One decision round: schedule candidates, release ACKs for survivors."""
        self.cycle_count += 1
        candidates = [f for f in self.reliable_flows
                      if self.ack_stores[f].template is not None]
        if not candidates:
            self.admitted_last_cycle = []
            return []
        self.n_active = len(candidates)
        preds_at_decision: dict[int, float] = {}

        def predict(flow_id: int, n: int) -> float:
            self.n_active = n
            total = self.predict_delay(flow_id, n).total_us
            preds_at_decision[flow_id] = total
            return total

        admitted, evicted = schedule_flows(
            candidates, self.priorities, self.cecc.delay_standard_us, predict)
        for fid in candidates:
            self.decision_log.append(DecisionRecord(
                cycle_ts_us=t,
                flow_id=fid,
                predicted_total_us=preds_at_decision.get(fid, float("nan")),
                priority=self.priorities.get(fid, 0),
                admitted=fid in admitted,
                rotation_count=self.rotation_count,
            ))
        gap = self._segment_tx_time_us()
        for fid in admitted:
            self.admission_history[fid].append(self.cycle_count)
            self.admission_rotations[fid].append(self.rotation_count)
            self.release_log.setdefault(fid, []).append((t, gap))
            store = self.ack_stores[fid]
            conn = self.connections[fid]
            intermediates = synthesize_acks(
                store.last_returned_seq, store.max_received_seq, self.mss,
                store.template)
            pair = self.release_acks(fid, self.frame_size_estimate(fid, t), t)
            batch = intermediates + pair[:1]
            closing = pair[1:]
            self.engine.schedule(
                t, lambda now, c=conn, b=batch: c.deliver_acks(b, now),
                label=f"ackrel/{fid}")
            if closing:
                self.engine.schedule(
                    t + gap, lambda now, c=conn, b=closing: c.deliver_acks(b, now),
                    label=f"ackgate/{fid}")
        self.admitted_last_cycle = admitted
        return admitted
