import numpy as np
import pytest

from vredge.scenario import paper_default
from vredge.simulation import Simulation, simulate


def small_scenario(n=2, cc="cubic", cecc=False, seconds=3.0, seed=5):
    cfg = paper_default(n_flows=n, cc=cc, cecc_enabled=cecc,
                        duration_s=seconds, seed=seed)
    # keep module-level integration runs loss-free
    cfg.gnb.per_queue_limit_bytes = None
    return cfg


def test_smoke_run_delivers_frames():
    res = simulate(small_scenario())
    expected = 2 * 3 * 60
    assert len(res.frame_samples) >= expected - 6
    for s in res.frame_samples:
        assert s.frame_delay_us >= s.network_delay_us >= 0


def test_event_trace_is_bit_identical_across_runs():
    def trace_once():
        sim = Simulation(small_scenario(seconds=2.0))
        sim.engine.trace_enabled = True
        sim.run()
        return sim.engine.dump_trace()

    t1, t2 = trace_once(), trace_once()
    assert t1 == t2
    assert len(t1.splitlines()) > 5_000


def test_different_seeds_diverge():
    a = simulate(small_scenario(seed=1))
    b = simulate(small_scenario(seed=2))
    ga = [s.gen_time_us for s in a.frame_samples]
    gb = [s.gen_time_us for s in b.frame_samples]
    assert ga != gb


def test_gnb_conservation_and_blackout():
    res = simulate(small_scenario(n=3))
    g = res.gnb
    for fid in (0, 1, 2):
        assert (g.enqueued_bytes[fid]
                == g.served_bytes[fid] + g.byte_counts[fid]
                + g.dropped_bytes[fid])
    assert res.blackout_violations == 0
    assert res.air_deliveries > 0


def test_wired_delay_estimate_is_exact_after_first_report():
    res = simulate(small_scenario(seconds=2.0))
    assert res.upf.wired_estimator.estimate_us == 1000.0


def test_exactly_one_rbs_report_per_millisecond():
    res = simulate(small_scenario(seconds=2.0))
    assert res.rbs_report_count == 2000


def test_rwnd_never_binds_without_anchor_control():
    res = simulate(small_scenario(n=1, seconds=2.0))
    conn = res.conns[0]
    assert conn.rwnd == 1_048_576


@pytest.fixture(scope="module")
def anchor_result():
    return simulate(small_scenario(n=4, cecc=True, seconds=5.0, seed=11))


class TestAnchorControl:
    @pytest.fixture()
    def result(self, anchor_result):
        return anchor_result

    def test_all_flows_keep_flowing(self, result):
        per_flow = {fid: 0 for fid in range(4)}
        for s in result.frame_samples:
            per_flow[s.flow_id] += 1
        expected = 5 * 60
        for fid, count in per_flow.items():
            assert count >= expected - 6, (fid, count)

    def test_ack_conservation(self, result):
        for fid, conn in result.conns.items():
            store = result.upf.ack_stores[fid]
            assert conn.max_cum_ack_received <= store.max_received_seq
            assert conn.max_cum_ack_received == store.last_returned_seq

    def test_admission_soundness(self, result):
        standard = result.cfg.cecc.delay_standard_us
        admitted = [r for r in result.upf.decision_log if r.admitted]
        assert admitted
        for rec in admitted:
            assert rec.predicted_total_us <= standard + 1e-6

    def test_gating_no_egress_between_gate_and_next_admission(self, result):
        for fid, releases in result.upf.release_log.items():
            entries = result.txlog.entries(fid)
            for (t_rel, gap), nxt in zip(releases, releases[1:]):
                lo, hi = t_rel + gap, nxt[0]
                leaked = [t for t, _ in entries if lo < t < hi]
                assert leaked == [], (fid, t_rel, leaked[:3])

    def test_starvation_bound(self, result):
        # Priority rotation bounds how long an ADMISSIBLE flow (own predicted
        # delay within the standard) can be passed over while others are
        # admitted: at most K frame passes, after which it outranks every
        # flow that sent meanwhile. A flow whose own backlog keeps its
        # prediction above the standard is excluded by admission soundness,
        # not starved.
        from collections import defaultdict

        k = len(result.conns)
        std = result.cfg.cecc.delay_standard_us
        by_cycle = defaultdict(dict)
        for rec in result.upf.decision_log:
            by_cycle[rec.cycle_ts_us][rec.flow_id] = rec
        for fid in result.conns:
            wait_start = None
            for t in sorted(by_cycle):
                rec = by_cycle[t].get(fid)
                if rec is None:
                    continue
                if rec.admitted:
                    wait_start = None
                elif (rec.predicted_total_us <= std
                      and any(r.admitted for r in by_cycle[t].values())):
                    if wait_start is None:
                        wait_start = rec.rotation_count
                    assert rec.rotation_count - wait_start <= k, (fid, t)

    def test_monotone_ack_stream_at_sender(self, result):
        # cumulative sequence numbers never regress by construction; the
        # recorded high-water mark equals the final snd_una
        for fid, conn in result.conns.items():
            assert conn.snd_una == conn.max_cum_ack_received


def test_udp_bypasses_anchor_control():
    cfg = small_scenario(n=2, cc="udp", cecc=True, seconds=2.0)
    res = simulate(cfg)
    assert res.upf.admitted_last_cycle == []
    assert len(res.frame_samples) >= 2 * 2 * 60 - 4


def test_satisfaction_consistent_with_raw_samples():
    res = simulate(small_scenario(n=2, seconds=3.0))
    flags, rate = res.satisfaction()
    for fid, flag in flags.items():
        delays = np.array([d for _, d in res.collector.packet_delays[fid]])
        frac = float((delays > 10_000).mean())
        assert flag.violation_fraction == pytest.approx(frac)
