"""Endpoint transport models.

One connection per flow: a reliable byte stream with cumulative ACKs and
receive-window flow control, driven by a pluggable congestion controller
(loss-based cubic-style, rate-based pacing, or best-effort datagrams), plus
the per-frame delay instrumentation that distinguishes buffer wait from
network traversal.
"""

from __future__ import annotations

import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import Engine

MSS = 1448
INITIAL_WINDOW_SEGMENTS = 10
NATIVE_RWND = 1_048_576  # receiver-advertised window; never binds on its own
CUBIC_C = 0.4
CUBIC_BETA = 0.7
RTO_FLOOR_US = 200_000
BBR_STARTUP_GAIN = 2.89
BBR_STEADY_GAIN = 1.0
BBR_INITIAL_RTT_US = 10_000

UDP_BEST_EFFORT = "udp"
CUBIC_LIKE = "cubic"
BBR_LIKE = "bbr"


@dataclass(slots=True)
class Segment:
    flow_id: int
    seq: int
    len_bytes: int
    send_time_us: int          # emission instant of this copy
    frame_index: int
    frame_end: bool = False
    first_egress_us: int = 0   # original emission; equals send_time unless retx


@dataclass(slots=True)
class AckSegment:
    flow_id: int
    cum_ack_seq: int
    rwnd_bytes: int
    ts_us: int


@dataclass
class DelaySample:
    flow_id: int
    frame_index: int
    frame_delay_us: int
    network_delay_us: int
    max_pkt_one_way_us: int
    gen_time_us: int
    n_segments: int


def cubic_window(t_since_epoch_s: float, w_max_bytes: float, mss: int = MSS) -> float:
    """Cubic growth target in bytes, t seconds after the loss epoch started.

    W(t) = C*(t-K)^3 + w_max in segment units, K = cbrt(w_max*(1-beta)/C),
    so W(0) = beta*w_max and W(K) = w_max.
    """
    w_max_seg = w_max_bytes / mss
    k = (w_max_seg * (1.0 - CUBIC_BETA) / CUBIC_C) ** (1.0 / 3.0)
    w_seg = CUBIC_C * (t_since_epoch_s - k) ** 3 + w_max_seg
    return w_seg * mss


@dataclass(slots=True)
class _Outstanding:
    seq: int
    len_bytes: int
    frame_index: int
    frame_end: bool
    first_egress_us: int
    retransmitted: bool = False


@dataclass(slots=True)
class _BufferedFrame:
    frame_index: int
    entry_time_us: int
    remaining: int
    size: int


class Connection:
    """Server-side sender for one flow."""

    def __init__(self, engine: Engine, flow_id: int, cc_kind: str,
                 egress: Callable[[int, list[Segment], int], None],
                 collector=None, mss: int = MSS,
                 iw_segments: int = INITIAL_WINDOW_SEGMENTS,
                 bbr_initial_rtt_us: int = BBR_INITIAL_RTT_US):
        if cc_kind not in (UDP_BEST_EFFORT, CUBIC_LIKE, BBR_LIKE):
            raise ValueError(f"unknown cc kind {cc_kind!r}")
        self.engine = engine
        self.flow_id = flow_id
        self.cc_kind = cc_kind
        self.egress = egress
        self.collector = collector
        self.mss = mss

        self.cwnd = iw_segments * mss
        self.ssthresh = float("inf")
        self.rwnd = NATIVE_RWND
        self.snd_una = 0
        self.snd_nxt = 0
        self.srtt_us: Optional[float] = None
        self.rttvar_us: float = 0.0

        self.send_buffer: deque[_BufferedFrame] = deque()
        self.buffered_bytes = 0
        self.outstanding: OrderedDict[int, _Outstanding] = OrderedDict()

        self._dup_acks = 0
        self._in_cubic_avoidance = False
        self._w_max_bytes = 0.0
        self._epoch_start_us = 0
        self._rto_event: Optional[int] = None
        self._rto_backoff = 1

        # rate-based controller state
        self._pace_queue: deque[tuple[int, int, int, bool]] = deque()
        self._pacer_busy = False
        self._pacer_next_us = 0
        self.delivered_bytes = 0
        self._delivered_log: deque[tuple[int, int]] = deque()
        self._bw_samples: deque[tuple[int, float]] = deque()
        self._bbr_initial_rate = iw_segments * mss * 8e6 / bbr_initial_rtt_us
        self._bbr_startup = True
        self._bbr_stall_rounds = 0
        self._bbr_round_base_bw = 0.0
        self._round_end_seq = 0
        self._min_rtt_us: Optional[float] = None

        self._max_frame_seen = 0
        self.slowstart_end_us: Optional[int] = 0 if cc_kind == UDP_BEST_EFFORT else None
        self.bytes_emitted = 0
        self.max_cum_ack_received = 0

    # -- application side ---------------------------------------------------

    def on_app_frame(self, frame, t: int) -> None:
        """Queue frame bytes; the frame-delay clock starts now."""
        self.send_buffer.append(
            _BufferedFrame(frame.index, t, frame.size_bytes, frame.size_bytes))
        self.buffered_bytes += frame.size_bytes
        self._max_frame_seen = max(self._max_frame_seen, frame.size_bytes)
        if self.collector is not None:
            self.collector.frame_entered(self.flow_id, frame.index, t,
                                         frame.size_bytes)
        self.pump(t)

    # -- ACK ingestion --------------------------------------------------------

    def on_ack(self, ack: AckSegment, t: int) -> None:
        self.deliver_acks([ack], t)

    def deliver_acks(self, acks: list[AckSegment], t: int) -> None:
        """Process a batch arriving at the same instant, then pump once."""
        for ack in acks:
            self._process_ack(ack, t)
        self.pump(t)

    def _process_ack(self, ack: AckSegment, t: int) -> None:
        if ack.cum_ack_seq < self.snd_una:
            return  # stale
        self.max_cum_ack_received = max(self.max_cum_ack_received, ack.cum_ack_seq)
        if ack.cum_ack_seq == self.snd_una:
            if (ack.rwnd_bytes == self.rwnd and self.outstanding
                    and self.cc_kind == CUBIC_LIKE):
                self._dup_acks += 1
                if self._dup_acks == 3:
                    self._fast_retransmit(t)
            else:
                self.rwnd = ack.rwnd_bytes  # window update
            return
        acked = ack.cum_ack_seq - self.snd_una
        self.snd_una = ack.cum_ack_seq
        self.rwnd = ack.rwnd_bytes
        self._dup_acks = 0
        self._rto_backoff = 1
        self._take_rtt_sample(t)
        self._pop_acked()
        self.delivered_bytes += acked
        if self.cc_kind == CUBIC_LIKE:
            self._cubic_on_ack(acked, t)
        elif self.cc_kind == BBR_LIKE:
            self._bbr_on_ack(t)
        self._restart_rto(t)

    def _take_rtt_sample(self, t: int) -> None:
        newest: Optional[_Outstanding] = None
        for rec in self.outstanding.values():
            if rec.seq + rec.len_bytes <= self.snd_una and not rec.retransmitted:
                newest = rec
            elif rec.seq + rec.len_bytes > self.snd_una:
                break
        if newest is None:
            return
        sample = t - newest.first_egress_us
        if sample < 0:
            return
        if self.srtt_us is None:
            self.srtt_us = float(sample)
            self.rttvar_us = sample / 2.0
        else:
            self.rttvar_us += 0.25 * (abs(self.srtt_us - sample) - self.rttvar_us)
            self.srtt_us += 0.125 * (sample - self.srtt_us)

    def _pop_acked(self) -> None:
        while self.outstanding:
            seq, rec = next(iter(self.outstanding.items()))
            if rec.seq + rec.len_bytes <= self.snd_una:
                del self.outstanding[seq]
            else:
                break

    def _cubic_on_ack(self, acked_bytes: int, t: int) -> None:
        if not self._in_cubic_avoidance and self.cwnd < self.ssthresh:
            self.cwnd += acked_bytes  # slow start: one extra segment per ACKed segment
            if self.cwnd >= self.ssthresh and math.isfinite(self.ssthresh):
                self._enter_cubic_avoidance(t)
        elif self._in_cubic_avoidance:
            elapsed_s = (t - self._epoch_start_us) / 1e6
            target = cubic_window(elapsed_s, self._w_max_bytes, self.mss)
            self.cwnd = max(int(target), 2 * self.mss)
        else:
            self._enter_cubic_avoidance(t)

    def _enter_cubic_avoidance(self, t: int) -> None:
        self._in_cubic_avoidance = True
        if self._w_max_bytes <= 0:
            self._w_max_bytes = float(self.cwnd)
        self._epoch_start_us = t

    def _fast_retransmit(self, t: int) -> None:
        """Third duplicate cumulative ACK: resend the hole, shrink the window."""
        self._w_max_bytes = float(self.cwnd)
        self.ssthresh = max(self.cwnd * CUBIC_BETA, 2 * self.mss)
        self.cwnd = max(int(self.cwnd * CUBIC_BETA), 2 * self.mss)
        self._in_cubic_avoidance = True
        self._epoch_start_us = t
        self._retransmit_outstanding(t)

    def _retransmit_outstanding(self, t: int) -> None:
        """Go-back-N: with only cumulative ACKs the sender cannot see which
        later segments survived, so it resends everything in flight; the
        receiver discards duplicates."""
        batch = []
        for rec in self.outstanding.values():
            rec.retransmitted = True
            batch.append(Segment(self.flow_id, rec.seq, rec.len_bytes, t,
                                 rec.frame_index, rec.frame_end,
                                 first_egress_us=rec.first_egress_us))
        if batch:
            self.egress(self.flow_id, batch, t)

    # -- retransmission timer -------------------------------------------------

    def _rto_us(self) -> int:
        if self.srtt_us is None:
            base = RTO_FLOOR_US
        else:
            base = self.srtt_us + 4.0 * self.rttvar_us
        return int(max(base, RTO_FLOOR_US)) * self._rto_backoff

    def _restart_rto(self, t: int) -> None:
        if self._rto_event is not None:
            self.engine.cancel(self._rto_event)
            self._rto_event = None
        if self.outstanding:
            self._rto_event = self.engine.schedule(
                t + self._rto_us(), self._on_rto, label=f"rto/{self.flow_id}")

    def _on_rto(self, t: int) -> None:
        self._rto_event = None
        if not self.outstanding:
            return
        self.ssthresh = max(self.cwnd * CUBIC_BETA, 2 * self.mss)
        self.cwnd = self.mss
        self._in_cubic_avoidance = False
        self._rto_backoff = min(self._rto_backoff * 2, 64)
        self._retransmit_outstanding(t)
        self._restart_rto(t)

    # -- sending ----------------------------------------------------------------

    def window_bytes(self) -> float:
        if self.cc_kind == UDP_BEST_EFFORT:
            return float("inf")
        return min(self.cwnd, self.rwnd)

    def in_flight(self) -> int:
        return self.snd_nxt - self.snd_una

    def pump(self, t: int) -> None:
        """Move buffered bytes to the wire within min(cwnd, rwnd)."""
        if self.cc_kind == BBR_LIKE:
            self._pump_paced(t)
            return
        limit = self.window_bytes()
        batch: list[Segment] = []
        while self.send_buffer and self.in_flight() < limit:
            head = self.send_buffer[0]
            room = limit - self.in_flight()
            n = int(min(self.mss, head.remaining, room))
            if n <= 0:
                break
            is_end = n == head.remaining
            seg = Segment(self.flow_id, self.snd_nxt, n, t, head.frame_index,
                          frame_end=is_end, first_egress_us=t)
            self._register_emission(seg)
            batch.append(seg)
            head.remaining -= n
            self.buffered_bytes -= n
            if head.remaining == 0:
                self.send_buffer.popleft()
        if batch:
            self.egress(self.flow_id, batch, t)
            self._restart_rto(t)
        self._check_slowstart_end(t)

    def _register_emission(self, seg: Segment) -> None:
        self.snd_nxt = seg.seq + seg.len_bytes
        self.bytes_emitted += seg.len_bytes
        if self.cc_kind != UDP_BEST_EFFORT:
            self.outstanding[seg.seq] = _Outstanding(
                seg.seq, seg.len_bytes, seg.frame_index, seg.frame_end,
                seg.first_egress_us)
        if self.collector is not None and seg.frame_end:
            self.collector.frame_last_byte_egress(
                self.flow_id, seg.frame_index, seg.first_egress_us)

    # -- rate-based (pacing) path ------------------------------------------------

    def bbr_pacing_rate(self) -> float:
        """Current pacing rate in bps."""
        bw = self._bw_estimate()
        gain = BBR_STARTUP_GAIN if self._bbr_startup else BBR_STEADY_GAIN
        return gain * bw

    def _bw_estimate(self) -> float:
        if not self._bw_samples:
            return self._bbr_initial_rate
        return max(rate for _, rate in self._bw_samples)

    def _bbr_on_ack(self, t: int) -> None:
        self._delivered_log.append((t, self.delivered_bytes))
        # Window spans several burst periods so the estimate tracks the
        # sustained delivery rate, not the drain rate of one burst. Kept
        # short enough that the max filter rides slightly above a bursty
        # source's average, which is what keeps the send buffer from
        # accumulating (there is no probe phase to recover from an
        # underestimate).
        window_us = max(80_000, int(4 * (self.srtt_us or BBR_INITIAL_RTT_US)))
        while (len(self._delivered_log) > 2
               and self._delivered_log[0][0] < t - window_us):
            self._delivered_log.popleft()
        t0, d0 = self._delivered_log[0]
        if t > t0 and t - t0 >= window_us // 2:
            rate_bps = (self.delivered_bytes - d0) * 8e6 / (t - t0)
            self._bw_samples.append((t, rate_bps))
        keep_us = 10 * max(int(self.srtt_us or BBR_INITIAL_RTT_US), 10_000)
        while self._bw_samples and self._bw_samples[0][0] < t - keep_us:
            self._bw_samples.popleft()
        if self.srtt_us is not None:
            self._min_rtt_us = min(self._min_rtt_us or self.srtt_us, self.srtt_us)
        # round accounting for the startup-exit (plateau) check
        if self.snd_una >= self._round_end_seq:
            self._round_end_seq = self.snd_nxt
            if self._bbr_startup:
                bw = self._bw_estimate()
                if bw >= 1.25 * max(self._bbr_round_base_bw, 1e-9):
                    self._bbr_round_base_bw = bw
                    self._bbr_stall_rounds = 0
                else:
                    self._bbr_stall_rounds += 1
                    if self._bbr_stall_rounds >= 3:
                        self._bbr_startup = False
                        if self.slowstart_end_us is None:
                            self.slowstart_end_us = t
        # inflight cap tracks twice the estimated pipe
        bw = self._bw_estimate()
        rtt = self._min_rtt_us or self.srtt_us or BBR_INITIAL_RTT_US
        bdp_bytes = bw * rtt / 8e6
        self.cwnd = max(int(2.0 * bdp_bytes), INITIAL_WINDOW_SEGMENTS * self.mss)

    def _pump_paced(self, t: int) -> None:
        limit = self.window_bytes()
        queued = sum(n for _, n, _, _ in self._pace_queue)
        while self.send_buffer and self.in_flight() + queued < limit:
            head = self.send_buffer[0]
            room = limit - self.in_flight() - queued
            n = int(min(self.mss, head.remaining, room))
            if n <= 0:
                break
            is_end = n == head.remaining
            self._pace_queue.append((head.frame_index, n, head.entry_time_us, is_end))
            queued += n
            head.remaining -= n
            self.buffered_bytes -= n
            if head.remaining == 0:
                self.send_buffer.popleft()
        if self._pace_queue and not self._pacer_busy:
            self._pacer_busy = True
            fire = max(t, self._pacer_next_us)
            self.engine.schedule(fire, self._emit_paced,
                                 label=f"pace/{self.flow_id}")

    def _emit_paced(self, t: int) -> None:
        self._pacer_busy = False
        if not self._pace_queue:
            return
        frame_index, n, _, is_end = self._pace_queue.popleft()
        seg = Segment(self.flow_id, self.snd_nxt, n, t, frame_index,
                      frame_end=is_end, first_egress_us=t)
        self._register_emission(seg)
        self.egress(self.flow_id, [seg], t)
        self._restart_rto(t)
        rate = max(self.bbr_pacing_rate(), 1e4)
        self._pacer_next_us = t + max(1, int(n * 8e6 / rate))
        if self._pace_queue:
            self._pacer_busy = True
            self.engine.schedule(self._pacer_next_us, self._emit_paced,
                                 label=f"pace/{self.flow_id}")

    # -- bookkeeping ---------------------------------------------------------------

    def _check_slowstart_end(self, t: int) -> None:
        # Stabilization starts once the window covers a whole frame AND the
        # backlog that built up while it did not has been flushed; the flush
        # burst itself is slow start's final act.
        if (self.slowstart_end_us is None and self.cc_kind == CUBIC_LIKE
                and self._max_frame_seen > 0
                and self.cwnd >= self._max_frame_seen
                and self.buffered_bytes == 0):
            self.slowstart_end_us = t


def bbr_pacing_rate(conn: Connection) -> float:
    if conn.cc_kind != BBR_LIKE:
        raise ValueError("pacing rate is defined for rate-based connections only")
    return conn.bbr_pacing_rate()


class UeReceiver:
    """Client-side reassembly with delayed cumulative ACKs.

    ACKs coalesce over two segments or 1 ms, whichever comes first, which
    keeps the return stream sparse enough that a middlebox must synthesize
    intermediate ACKs if it wants a fine-grained clock.
    """

    DELACK_SEGMENTS = 2
    DELACK_TIMEOUT_US = 1000

    def __init__(self, engine: Engine, flow_id: int,
                 ack_out: Optional[Callable[[AckSegment, int], None]],
                 collector=None, rwnd_bytes: int = NATIVE_RWND):
        self.engine = engine
        self.flow_id = flow_id
        self.ack_out = ack_out
        self.collector = collector
        self.rwnd_bytes = rwnd_bytes
        self.rcv_nxt = 0
        self._ooo: dict[int, Segment] = {}
        self._unacked_segments = 0
        self._delack_event: Optional[int] = None
        self._frame_ends: dict[int, int] = {}
        self.bytes_received = 0
        self.max_acked_seq = 0

    def deliver(self, segments: list[Segment], t: int) -> None:
        advanced = False
        for seg in segments:
            if seg.seq + seg.len_bytes <= self.rcv_nxt or seg.seq in self._ooo:
                continue  # duplicate copy; original already counted
            if seg.frame_end:
                self._frame_ends[seg.frame_index] = seg.seq + seg.len_bytes
            if self.collector is not None:
                self.collector.packet_arrived(self.flow_id, seg, t)
            if seg.seq == self.rcv_nxt:
                self.rcv_nxt = seg.seq + seg.len_bytes
                self.bytes_received += seg.len_bytes
                self._unacked_segments += 1
                advanced = True
                while self.rcv_nxt in self._ooo:
                    nxt = self._ooo.pop(self.rcv_nxt)
                    self.rcv_nxt = nxt.seq + nxt.len_bytes
                    self.bytes_received += nxt.len_bytes
                    self._unacked_segments += 1
            elif seg.seq > self.rcv_nxt:
                self._ooo.setdefault(seg.seq, seg)
                self._send_ack(t)  # immediate duplicate ACK for a gap
        if advanced:
            self._complete_frames(t)
            if self._unacked_segments >= self.DELACK_SEGMENTS:
                self._send_ack(t)
            elif self._delack_event is None and self.ack_out is not None:
                self._delack_event = self.engine.schedule(
                    t + self.DELACK_TIMEOUT_US, self._on_delack_timer,
                    label=f"delack/{self.flow_id}")

    def _complete_frames(self, t: int) -> None:
        if self.collector is None:
            return
        done = [idx for idx, end in self._frame_ends.items() if end <= self.rcv_nxt]
        for idx in sorted(done):
            self.collector.frame_completed(self.flow_id, idx, t)
            del self._frame_ends[idx]

    def _on_delack_timer(self, t: int) -> None:
        self._delack_event = None
        if self._unacked_segments > 0:
            self._send_ack(t)

    def _send_ack(self, t: int) -> None:
        if self.ack_out is None:
            return
        if self._delack_event is not None:
            self.engine.cancel(self._delack_event)
            self._delack_event = None
        self._unacked_segments = 0
        self.max_acked_seq = max(self.max_acked_seq, self.rcv_nxt)
        self.ack_out(AckSegment(self.flow_id, self.rcv_nxt, self.rwnd_bytes, t), t)


class DelayCollector:
    """Assembles per-frame and per-packet delay records as the run progresses."""

    def __init__(self):
        self._entries: dict[tuple[int, int], tuple[int, int]] = {}
        self._last_egress: dict[tuple[int, int], int] = {}
        self._frame_pkt_max: dict[tuple[int, int], int] = {}
        self._frame_pkt_count: dict[tuple[int, int], int] = {}
        self.samples: list[DelaySample] = []
        self.packet_delays: dict[int, list[tuple[int, int]]] = {}

    def frame_entered(self, flow_id: int, index: int, t: int, size: int) -> None:
        self._entries[(flow_id, index)] = (t, size)

    def frame_last_byte_egress(self, flow_id: int, index: int, t: int) -> None:
        self._last_egress[(flow_id, index)] = t

    def packet_arrived(self, flow_id: int, seg: Segment, t: int) -> None:
        delay = t - seg.first_egress_us
        self.packet_delays.setdefault(flow_id, []).append((seg.first_egress_us, delay))
        key = (flow_id, seg.frame_index)
        self._frame_pkt_max[key] = max(self._frame_pkt_max.get(key, 0), delay)
        self._frame_pkt_count[key] = self._frame_pkt_count.get(key, 0) + 1

    def frame_completed(self, flow_id: int, index: int, t: int) -> None:
        key = (flow_id, index)
        entry = self._entries.pop(key, None)
        if entry is None:
            return
        entry_t, _ = entry
        egress_t = self._last_egress.pop(key, entry_t)
        self.samples.append(DelaySample(
            flow_id=flow_id,
            frame_index=index,
            frame_delay_us=t - entry_t,
            network_delay_us=t - egress_t,
            max_pkt_one_way_us=self._frame_pkt_max.pop(key, 0),
            gen_time_us=entry_t,
            n_segments=self._frame_pkt_count.pop(key, 0),
        ))
