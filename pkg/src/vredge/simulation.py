"""Topology assembly and run orchestration.

Wires one scenario into a live simulation: per-flow sources and senders at
the data center, the user-plane anchor inline on both directions, a wired
aggregation hop, the TDD cell with per-flow queues, and client receivers
whose ACKs ride the next uplink opportunity back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cecc import CeccConfig, Upf
from .engine import Engine
from .gnb import Gnb, GnbConfig, next_uplink_time, slot_kind_at
from .metrics import (LoadHistogram, QoeStandard, bin_egress, delay_distribution,
                      load_cdf, satisfaction)
from .scenario import ScenarioConfig, config_digest, config_to_dict
from .signaling import GnbReporter
from .traffic import FrameSource, mean_frame_size
from .transport import Connection, DelayCollector, Segment, UeReceiver


class Simulation:
    """One fully wired scenario instance; single use."""

    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.engine = Engine(seed=cfg.seed)
        self.gnb_config: GnbConfig = cfg.gnb.build()
        self.gnb = Gnb(self.gnb_config)
        self.wire_us = cfg.wired.one_way_delay_us
        self.collector = DelayCollector()
        self.upf = Upf(self.engine, self.gnb_config, cfg.cecc.build(),
                       self.wire_us, mss=cfg.transport.mss_bytes)
        self.upf.deliver_to_gnb = self._wire_downlink
        self.conns: dict[int, Connection] = {}
        self.ues: dict[int, UeReceiver] = {}
        self.sources: dict[int, FrameSource] = {}
        self.blackout_violations = 0
        self.air_deliveries = 0
        self.rbs_report_count = 0

        for flow_id, flow_cfg in enumerate(cfg.flows):
            profile = flow_cfg.profile()
            conn = Connection(
                self.engine, flow_id, flow_cfg.cc, egress=self._server_egress,
                collector=self.collector, mss=cfg.transport.mss_bytes,
                iw_segments=cfg.transport.initial_window_segments,
                bbr_initial_rtt_us=cfg.transport.bbr_initial_rtt_us)
            ack_out = self._ue_ack_out if flow_cfg.cc != "udp" else None
            ue = UeReceiver(self.engine, flow_id, ack_out, self.collector)
            self.conns[flow_id] = conn
            self.ues[flow_id] = ue
            self.gnb.register_flow(flow_id)
            self.upf.register_flow(flow_id, conn, mean_frame_size(profile))
            source = FrameSource(self.engine, profile, flow_id, sink=conn)
            source.stop_at = cfg.duration_us
            self.sources[flow_id] = source
            source.start()

        self.reporter = GnbReporter(self.gnb.snapshot_rbs)
        self.engine.schedule(0, self._on_report_timer, label="rbs-timer")
        self.engine.schedule(0, self._on_slot_boundary, label="slot")
        if cfg.cecc.enabled and cfg.cecc.cycle_us != 1000:
            self.engine.schedule(self.wire_us + cfg.cecc.cycle_us,
                                 self._on_cycle_timer, label="cecc-cycle")

    # -- data path -------------------------------------------------------

    def _server_egress(self, flow_id: int, segments: list[Segment], t: int) -> None:
        # Server and anchor share the data center: zero-delay hop.
        self.upf.forward_downlink(flow_id, segments, t)

    def _wire_downlink(self, flow_id: int, segments: list[Segment], t: int) -> None:
        arrive = t + self.wire_us

        def deliver(now: int, fid=flow_id, segs=segments):
            for seg in segs:
                self.gnb.enqueue(fid, seg.len_bytes, now, payload=seg)

        self.engine.schedule(arrive, deliver, label=f"wire-dl/{flow_id}")

    def _on_slot_boundary(self, t: int) -> None:
        delivered = self.gnb.serve_slot(t)
        if delivered:
            by_flow: dict[int, list[Segment]] = {}
            done_at = delivered[0][2]
            for flow_id, payload, _ in delivered:
                by_flow.setdefault(flow_id, []).append(payload)
            self.air_deliveries += len(delivered)
            if slot_kind_at(self.gnb_config.pattern, self.gnb_config.link,
                            done_at - 1) not in ("D", "S_dl"):
                self.blackout_violations += 1
            ue_at = done_at + self.gnb_config.ran_processing_delay_us
            for flow_id in sorted(by_flow):
                segs = by_flow[flow_id]
                self.engine.schedule(
                    ue_at,
                    lambda now, f=flow_id, s=segs: self.ues[f].deliver(s, now),
                    label=f"air/{flow_id}")
        self.engine.schedule(t + self.gnb_config.link.slot_us,
                             self._on_slot_boundary, label="slot")

    # -- uplink / signaling -----------------------------------------------

    def _ue_ack_out(self, ack, t: int) -> None:
        ready = t + self.cfg.transport.ue_ack_delay_us
        ul_at = next_uplink_time(self.gnb_config, ready)
        arrive = ul_at + self.wire_us
        self.engine.schedule(arrive,
                             lambda now, a=ack: self.upf.on_ue_ack(a, now),
                             label=f"ack-ul/{ack.flow_id}")

    def _on_report_timer(self, t: int) -> None:
        link = self.gnb_config.link
        link_report = self.reporter.emit_link_state_if_changed(
            t, link.tb_size_bits, link.scs_khz, link.bandwidth_hz, link.mcs_index)
        if link_report is not None:
            self.engine.schedule(
                t + self.wire_us,
                lambda now, r=link_report: self.upf.on_link_state(r, now),
                label="wire-linkstate")
        report = self.reporter.emit_rbs_report(t)
        self.rbs_report_count += 1
        self.engine.schedule(
            t + self.wire_us,
            lambda now, r=report: self.upf.on_gnb_report(r, now),
            label="wire-rbs")
        if t + 1000 < self.cfg.duration_us:
            self.engine.schedule(t + 1000, self._on_report_timer, label="rbs-timer")

    def _on_cycle_timer(self, t: int) -> None:
        if self.upf.last_report is not None:
            self.upf.run_control_cycle(t)
        if t + self.cfg.cecc.cycle_us < self.cfg.duration_us:
            self.engine.schedule(t + self.cfg.cecc.cycle_us,
                                 self._on_cycle_timer, label="cecc-cycle")

    # -- execution ----------------------------------------------------------

    def run(self) -> "RunResult":
        self.engine.run_until(self.cfg.duration_us)
        return RunResult(self)


class RunResult:
    """Immutable view over one finished run."""

    def __init__(self, sim: Simulation):
        self.cfg = sim.cfg
        self.digest = config_digest(sim.cfg)
        self.collector = sim.collector
        self.frame_samples = sim.collector.samples
        self.txlog = sim.upf.txlog
        self.gnb = sim.gnb
        self.upf = sim.upf
        self.conns = sim.conns
        self.ues = sim.ues
        self.blackout_violations = sim.blackout_violations
        self.air_deliveries = sim.air_deliveries
        self.rbs_report_count = sim.rbs_report_count
        self.ss_boundary = {
            fid: (conn.slowstart_end_us if conn.slowstart_end_us is not None
                  else sim.cfg.duration_us + 1)
            for fid, conn in sim.conns.items()}

    # -- sample views ---------------------------------------------------------

    def packet_samples(self, flow_id: int) -> list[tuple[float, bool]]:
        """(one_way_delay_us, in_slow_start) per delivered packet.

        The boundary instant itself counts as slow start: the burst released
        by the window-crossing ACK is the backlog slow start accumulated.
        """
        boundary = self.ss_boundary[flow_id]
        return [(delay, egress_t <= boundary)
                for egress_t, delay in self.collector.packet_delays.get(flow_id, [])]

    def all_packet_samples(self) -> dict[int, list[tuple[float, bool]]]:
        return {fid: self.packet_samples(fid) for fid in sorted(self.conns)}

    def satisfaction(self, include_slow_start: Optional[bool] = None):
        std = self.cfg.metrics.standard()
        if include_slow_start is not None:
            std.include_slow_start = include_slow_start
        return satisfaction(self.all_packet_samples(), std)

    def delay_boxes(self):
        per_flow = {fid: [d for _, d in self.collector.packet_delays.get(fid, [])]
                    for fid in sorted(self.conns)}
        return delay_distribution(per_flow)

    def load_histogram(self) -> LoadHistogram:
        entries = {fid: self.txlog.entries(fid) for fid in self.txlog.flows()}
        return bin_egress(entries, self.cfg.duration_us,
                          self.cfg.metrics.load_bin_width_us)

    def per_flow_p9999_us(self) -> dict[int, float]:
        out = {}
        for fid in sorted(self.conns):
            delays = [d for _, d in self.collector.packet_delays.get(fid, [])]
            out[fid] = float(np.percentile(delays, 99.99)) if delays else float("nan")
        return out

    def summary(self) -> dict:
        flags, rate = self.satisfaction()
        hist = self.load_histogram()
        p9999 = self.per_flow_p9999_us()
        finite = [v for v in p9999.values() if not np.isnan(v)]
        return {
            "satisfaction_rate": rate,
            "max_bin_bytes": int(hist.bins.max()) if hist.bins.size else 0,
            "median_p9999_delay_us": float(np.median(finite)) if finite else None,
            "per_flow_p9999_us": {str(k): v for k, v in p9999.items()},
            "per_flow_violation_fraction": {
                str(k): f.violation_fraction for k, f in flags.items()},
            "blackout_violations": self.blackout_violations,
            "rbs_reports": self.rbs_report_count,
        }


def simulate(cfg: ScenarioConfig) -> RunResult:
    return Simulation(cfg).run()


# -- file outputs -----------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def write_satisfaction_csv(result: RunResult, path: Path) -> None:
    flags, _ = result.satisfaction()
    lines = ["flow_id,violation_fraction,satisfied"]
    for fid in sorted(flags):
        f = flags[fid]
        lines.append(f"{fid},{f.violation_fraction:.8f},{int(f.satisfied)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_delay_boxes_csv(result: RunResult, path: Path) -> None:
    lines = ["flow_id,min_us,q1_us,median_us,q3_us,max_us,outliers_us"]
    for box in result.delay_boxes():
        row = [str(box.flow_id), _fmt(box.minimum), _fmt(box.q1),
               _fmt(box.median), _fmt(box.q3), _fmt(box.maximum)]
        row.extend(_fmt(o) for o in box.outliers)
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_load_cdf_csv(result: RunResult, path: Path) -> None:
    points = load_cdf(result.load_histogram())
    lines = ["bin_bytes,cum_fraction"]
    for nbytes, frac in points:
        lines.append(f"{nbytes},{frac:.8f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_frame_delays_csv(result: RunResult, path: Path) -> None:
    lines = ["flow_id,frame_index,gen_time_us,frame_delay_us,"
             "network_delay_us,max_pkt_one_way_us"]
    for s in result.frame_samples:
        lines.append(f"{s.flow_id},{s.frame_index},{s.gen_time_us},"
                     f"{s.frame_delay_us},{s.network_delay_us},"
                     f"{s.max_pkt_one_way_us}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_decisions_csv(result: RunResult, path: Path) -> None:
    lines = ["cycle_ts_us,flow_id,predicted_total_us,priority,admitted"]
    for rec in result.upf.decision_log:
        lines.append(f"{rec.cycle_ts_us},{rec.flow_id},"
                     f"{rec.predicted_total_us:.3f},{rec.priority},"
                     f"{int(rec.admitted)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_scenario(cfg: ScenarioConfig, out_dir: Path) -> dict:
    """Run one scenario and write every metrics artifact under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = simulate(cfg)
    files = {}
    try:
        cfg_path = out_dir / "config.normalized.json"
        cfg_path.write_text(
            json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        files["config"] = cfg_path.name
        for name, writer in (("satisfaction.csv", write_satisfaction_csv),
                             ("delay_boxes.csv", write_delay_boxes_csv),
                             ("load_cdf.csv", write_load_cdf_csv),
                             ("frame_delays.csv", write_frame_delays_csv)):
            writer(result, out_dir / name)
            files[name.split(".")[0]] = name
        if cfg.cecc.enabled:
            write_decisions_csv(result, out_dir / "cecc_decisions.csv")
            files["decisions"] = "cecc_decisions.csv"
        report = {
            "digest": result.digest,
            "seed": cfg.seed,
            "files": files,
            "summary": result.summary(),
        }
        report_path = out_dir / "run_report.json"
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
        return report
    except OSError:
        (out_dir / "_PARTIAL").write_text("run aborted mid-write\n",
                                          encoding="utf-8")
        raise


def run_sweep(base: ScenarioConfig, flow_counts: list[int], ccs: list[str],
              out_dir: Path) -> list[dict]:
    """Cross product of flow counts and congestion-control choices."""
    from .scenario import derive_cell_config

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for cc in ccs:
        for n in flow_counts:
            cell_dir = out_dir / f"{cc}_{n}flows"
            try:
                cell_cfg = derive_cell_config(base, cc, n)
                report = run_scenario(cell_cfg, cell_dir)
                s = report["summary"]
                rows.append({
                    "cc": cc, "flows": n,
                    "satisfaction_rate": s["satisfaction_rate"],
                    "max_bin_bytes": s["max_bin_bytes"],
                    "median_p9999_delay_us": s["median_p9999_delay_us"],
                })
            except Exception as exc:  # keep sweeping; record the failure
                rows.append({"cc": cc, "flows": n, "error": str(exc)})
    lines = ["cc,flows,satisfaction_rate,max_bin_bytes,median_p9999_delay_us"]
    for row in rows:
        if "error" in row:
            lines.append(f"{row['cc']},{row['flows']},,,")
        else:
            med = row["median_p9999_delay_us"]
            med_txt = f"{med:.1f}" if med is not None else ""
            lines.append(f"{row['cc']},{row['flows']},"
                         f"{row['satisfaction_rate']:.4f},"
                         f"{row['max_bin_bytes']},{med_txt}")
    (out_dir / "sweep_summary.csv").write_text("\n".join(lines) + "\n",
                                               encoding="utf-8")
    errors = [r for r in rows if "error" in r]
    if errors:
        (out_dir / "sweep_errors.log").write_text(
            "\n".join(f"{r['cc']},{r['flows']}: {r['error']}" for r in errors)
            + "\n", encoding="utf-8")
    return rows
