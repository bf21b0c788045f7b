"""Acceptance gate: one test per criterion, each printing a PASS line with
the measured values. Shared sweep results are computed once per session.

Run with `pytest tests/test_acceptance.py -v -s` to see every line.
"""

import math
from collections import defaultdict

import numpy as np
import pytest

import vredge
from vredge.cecc import schedule_flows
from vredge.engine import Engine
from vredge.gnb import GnbConfig, LinkState, TddPattern, processing_delay_bounds
from vredge.metrics import QoeStandard, satisfaction
from vredge.scenario import derive_cell_config, paper_default
from vredge.signaling import GnbReport, LinkStateReport, decode_report, encode_report
from vredge.traffic import (CollisionModel, VrSourceProfile,
                            collision_probability_closed_form,
                            collision_probability_mc, instantaneous_throughput,
                            mean_frame_size)
from vredge.transport import MSS

STAGGER_US = 500  # documented start offsets for the concurrency experiments


def _report(name, detail):
    print(f"\nACCEPTANCE {name}: PASS — {detail}")


# -- shared heavy runs ---------------------------------------------------------


class CellStats:
    def __init__(self, result):
        flags_incl, self.rate_incl = result.satisfaction(include_slow_start=True)
        flags_excl, self.rate_excl = result.satisfaction(include_slow_start=False)
        self.viol_incl = {f: v.violation_fraction for f, v in flags_incl.items()}
        self.viol_excl = {f: v.violation_fraction for f, v in flags_excl.items()}
        hist = result.load_histogram()
        self.max_bin_bytes = int(hist.bins.max())
        self.total_bytes = hist.total_bytes
        self.frames_delivered = len(result.frame_samples)
        self.drops = sum(result.gnb.drop_counts.values())


@pytest.fixture(scope="session")
def sweep_stats():
    """cc x flow-count grid at the baseline scenario, 30 s per cell."""
    grid = {}
    base = paper_default(n_flows=1, duration_s=30.0, seed=1,
                         start_stagger_us=STAGGER_US)
    base.flows[0].start_time_us = 0
    for cc in ("cecc", "cubic"):
        for n in range(2, 8):
            cfg = derive_cell_config(base, cc, n)
            for i, f in enumerate(cfg.flows):
                f.start_time_us = i * STAGGER_US
            grid[(cc, n)] = CellStats(vredge.simulate(cfg))
    for cc in ("bbr",):
        cfg = derive_cell_config(base, cc, 5)
        for i, f in enumerate(cfg.flows):
            f.start_time_us = i * STAGGER_US
        grid[(cc, 5)] = CellStats(vredge.simulate(cfg))
    return grid


# -- criteria -------------------------------------------------------------------


def test_01_burst_throughput_formula():
    th = instantaneous_throughput(VrSourceProfile(50e6, 60))
    assert th == pytest.approx(833.33e6, abs=0.01e6)
    _report("1 (burst throughput)", f"50 Mbps / 60 fps -> {th / 1e6:.2f} Mbps")


def test_02_queue_delay_formula():
    engine = Engine()
    gnb_cfg = GnbConfig(pattern=TddPattern(), link=LinkState(),
                        capacity_override_bps=880e6)
    from vredge.cecc import CeccConfig, Upf
    from vredge.transport import Connection

    upf = Upf(engine, gnb_cfg, CeccConfig(enabled=True), wire_delay_us=0)
    conn = Connection(engine, 1, "cubic", egress=lambda f, s, t: None)
    upf.register_flow(1, conn, bootstrap_frame_bytes=100_000)
    upf.on_gnb_report(GnbReport(1000, ((1, 50_000),)), 1000)
    upf.txlog.record(1, 2000, 30_000)
    engine.now = 2500
    pred = upf.predict_delay(1, n_flows=2)
    assert pred.queue_d_us == pytest.approx(3272.7, abs=1.0)
    _report("2 (queue delay prediction)",
            f"(50K+30K+100K)B over 880/2 Mbps -> {pred.queue_d_us:.1f} us")


def test_03_schedule_loop_oracle():
    base = {"a": 3000.0, "b": 4000.0, "c": 6000.0}
    priorities = {"a": 2, "b": 1, "c": 0}
    admitted, evicted = schedule_flows(["a", "b", "c"], priorities, 10_000.0,
                                       lambda f, n: base[f] * n)
    assert sorted(admitted) == ["a", "b"] and evicted == ["c"]

    rng = np.random.default_rng(2024)
    for trial in range(20):
        n = int(rng.integers(2, 6))
        flows = list(range(n))
        bases = {f: float(rng.integers(500, 9000)) for f in flows}
        prios = {f: int(rng.integers(0, 4)) for f in flows}

        def predict(f, size):
            return bases[f] * size / n

        got, _ = schedule_flows(flows, prios, 10_000.0, predict)
        # independent brute-force eviction loop
        work = sorted(flows)
        while work:
            preds = {f: predict(f, len(work)) for f in work}
            if max(preds.values()) <= 10_000.0:
                break
            work.remove(min(work, key=lambda x: (prios[x], -preds[x], x)))
        assert got == work, f"trial {trial}"
    _report("3 (schedule loop)", "hand trace + 20 randomized instances match "
            "brute force")


def test_04_collision_probabilities():
    mu = 16_667.0
    for horizon, expected in ((1, 0.5205), (4, 0.2763)):
        closed = collision_probability_closed_form(1000.0, horizon, 1000.0)
        assert closed == pytest.approx(expected, abs=2e-4)
        est, err = collision_probability_mc(
            CollisionModel(2, mu, 1000.0, horizon), 1_000_000, seed=7)
        assert abs(est - closed) <= 3 * err
    _report("4 (collision math)",
            "Monte Carlo (1e6 trials) within 3 sigma of 0.5205 / 0.2763")


def test_05_tdd_delay_envelope():
    cfg = paper_default(n_flows=1, duration_s=60.0)
    gnb_cfg = cfg.gnb.build()
    lo, hi = processing_delay_bounds(gnb_cfg, 1448)
    spread = hi - lo
    assert spread >= 1286
    res = vredge.simulate(cfg)
    assert res.blackout_violations == 0
    assert res.air_deliveries > 100_000
    _report("5 (TDD envelope)",
            f"single-packet spread {spread} us >= 1286; "
            f"0 of {res.air_deliveries} deliveries inside guard/uplink")


def test_06_slow_start_rtts():
    frame = mean_frame_size(VrSourceProfile(50e6, 60))
    assert frame == 104_167
    cwnd = 10 * MSS
    rtts = 0
    while cwnd < frame:
        cwnd *= 2
        rtts += 1
    assert rtts == 3
    _report("6 (slow start)", f"10 segments double 3 times to cover {frame} B")


def test_07_cca_taxonomy():
    bbr_cfg = paper_default(n_flows=1, cc="bbr", duration_s=30.0, seed=1)
    bbr = vredge.simulate(bbr_cfg)
    steady = [s for s in bbr.frame_samples
              if s.gen_time_us > max(bbr.ss_boundary[0], 8_000_000)]
    fd = float(np.median([s.frame_delay_us for s in steady]))
    nd = float(np.median([s.network_delay_us for s in steady]))
    bbr_ratio = fd / nd
    assert bbr_ratio >= 5.0

    cubic_cfg = paper_default(n_flows=1, cc="cubic", duration_s=30.0, seed=1)
    cubic = vredge.simulate(cubic_cfg)
    csteady = [s for s in cubic.frame_samples
               if s.gen_time_us > max(cubic.ss_boundary[0], 8_000_000)]
    ratios = [s.frame_delay_us / s.network_delay_us for s in csteady]
    cubic_ratio = float(np.median(ratios))
    assert cubic_ratio == pytest.approx(1.0, abs=0.1)
    _report("7 (CCA taxonomy)",
            f"paced: frame {fd / 1000:.1f} ms >= 5x network {nd / 1000:.1f} ms "
            f"(x{bbr_ratio:.1f}); large-window: frame/network = {cubic_ratio:.3f}")


def test_08_concurrency_benefit(sweep_stats):
    budget = 0.0001
    # loss-based transport alone: every client violates, within the band
    for n in range(2, 8):
        cell = sweep_stats[("cubic", n)]
        assert cell.rate_incl == 0.0, (n, cell.viol_incl)
        for fid, frac in cell.viol_incl.items():
            assert 0.0001 <= frac <= 0.01, (n, fid, frac)
    # anchor-controlled: full satisfaction through 5 and at least 80% at 6
    for n in range(2, 6):
        assert sweep_stats[("cecc", n)].rate_incl == 1.0, n
    assert sweep_stats[("cecc", 6)].rate_incl >= 0.8
    cecc_max = max(n for n in range(2, 8)
                   if sweep_stats[("cecc", n)].rate_incl == 1.0)
    cubic_excl_max = max(n for n in range(2, 8)
                         if sweep_stats[("cubic", n)].rate_excl == 1.0)
    ratio = cecc_max / cubic_excl_max
    assert 1.5 <= ratio <= 2.5, (cecc_max, cubic_excl_max)
    _report("8 (concurrency benefit)",
            f"loss-based unsatisfied at 2..7 (fractions in band); "
            f"controlled 100% through {cecc_max}; "
            f"ratio {cecc_max}/{cubic_excl_max} = {ratio:.2f} in [1.5, 2.5]")


def test_09_load_smoothing(sweep_stats):
    bbr = sweep_stats[("bbr", 5)]
    cecc = sweep_stats[("cecc", 5)]
    cubic = sweep_stats[("cubic", 5)]
    assert bbr.max_bin_bytes < cecc.max_bin_bytes < cubic.max_bin_bytes
    totals = [bbr.total_bytes, cecc.total_bytes, cubic.total_bytes]
    assert max(totals) / min(totals) <= 1.05
    frames = [bbr.frames_delivered, cecc.frames_delivered,
              cubic.frames_delivered]
    assert max(frames) - min(frames) <= 0.01 * max(frames)
    _report("9 (load smoothing)",
            f"max 5 ms bin: paced {bbr.max_bin_bytes} < controlled "
            f"{cecc.max_bin_bytes} < loss-based {cubic.max_bin_bytes}; "
            f"totals within {100 * (max(totals) / min(totals) - 1):.2f}%")


def _random_scenario(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    cfg = paper_default(n_flows=n, cc="cubic", cecc_enabled=True,
                        duration_s=2.5, seed=seed)
    cfg.gnb.per_queue_limit_bytes = None
    for i, f in enumerate(cfg.flows):
        f.bitrate_bps = float(rng.integers(15, 51)) * 1e6
        f.frame_rate_fps = float(rng.choice([60.0, 90.0]))
        f.jitter_sigma_us = float(rng.integers(200, 1500))
        f.start_time_us = int(rng.integers(0, 2000))
    return cfg


def test_10_control_safety_invariants():
    seeds = range(100, 150)
    determinism_checked = 0
    for seed in seeds:
        cfg = _random_scenario(seed)
        res = vredge.simulate(cfg)
        k = len(res.conns)
        std = cfg.cecc.delay_standard_us

        # admission soundness
        for rec in res.upf.decision_log:
            if rec.admitted:
                assert rec.predicted_total_us <= std + 1e-6, seed

        # ACK conservation: forwarded sequence never exceeds what the client
        # acknowledged, and everything released was delivered to the sender
        for fid, conn in res.conns.items():
            store = res.upf.ack_stores[fid]
            assert conn.max_cum_ack_received <= store.max_received_seq, seed
            assert conn.max_cum_ack_received == store.last_returned_seq, seed

        # gating: zero payload between the closing window and re-admission
        for fid, releases in res.upf.release_log.items():
            entries = res.txlog.entries(fid)
            for (t_rel, gap), nxt in zip(releases, releases[1:]):
                leaked = [t for t, _ in entries if t_rel + gap < t < nxt[0]]
                assert leaked == [], (seed, fid, leaked[:3])

        # starvation: an admissible flow waits at most K priority rotations
        # (frame passes) before re-admission; rotation is what lifts it past
        # the flows that sent meanwhile
        by_cycle = defaultdict(dict)
        for rec in res.upf.decision_log:
            by_cycle[rec.cycle_ts_us][rec.flow_id] = rec
        for fid in res.conns:
            wait_start_rotation = None
            for t in sorted(by_cycle):
                rec = by_cycle[t].get(fid)
                if rec is None:
                    continue
                if rec.admitted:
                    wait_start_rotation = None
                elif (rec.predicted_total_us <= std
                      and any(r.admitted for r in by_cycle[t].values())):
                    if wait_start_rotation is None:
                        wait_start_rotation = rec.rotation_count
                    assert rec.rotation_count - wait_start_rotation <= k, (
                        seed, fid, t)

        # determinism: full event trace is byte-identical on a re-run
        if seed % 10 == 0:
            from vredge.simulation import Simulation

            def traced():
                sim = Simulation(_random_scenario(seed))
                sim.engine.trace_enabled = True
                sim.run()
                return sim.engine.dump_trace()

            assert traced() == traced(), seed
            determinism_checked += 1
    _report("10 (control safety)",
            f"50 randomized scenarios clean; determinism re-verified on "
            f"{determinism_checked} of them")


def test_11_signaling_protocol():
    cfg = paper_default(n_flows=3, duration_s=5.0)
    res = vredge.simulate(cfg)
    assert res.rbs_report_count == 5000  # exactly one per millisecond
    assert res.upf.wired_estimator.estimate_us == cfg.wired.one_way_delay_us

    rng = np.random.default_rng(99)
    for _ in range(1000):
        if rng.integers(0, 2):
            entries = tuple((int(f), int(rng.integers(0, 2**32)))
                            for f in range(rng.integers(0, 12)))
            rep = GnbReport(int(rng.integers(0, 2**63)), entries)
        else:
            rep = LinkStateReport(int(rng.integers(0, 2**63)),
                                  float(rng.integers(1, 2**32)),
                                  int(rng.integers(0, 2**16)),
                                  float(rng.integers(0, 2**32)),
                                  int(rng.integers(0, 2**8)))
        assert decode_report(encode_report(rep)) == rep
    _report("11 (signaling)",
            "one report per ms; 1000 codec round-trips identical; "
            "wire delay estimate exact after first report")
