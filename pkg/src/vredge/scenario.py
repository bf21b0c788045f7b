"""Scenario configuration: parsing, validation, normalization, digests.

One structured JSON file describes a run. Field names carry explicit units;
unknown fields are errors rather than warnings, since silent config drift is
the main reproducibility hazard.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .cecc import CeccConfig
from .gnb import GnbConfig, LinkState, TddPattern
from .metrics import QoeStandard
from .signaling import WiredPathModel
from .traffic import VrSourceProfile

CC_KINDS = ("udp", "cubic", "bbr")


class ConfigError(Exception):
    """Invalid scenario configuration; message names the offending field."""


@dataclass
class FlowConfig:
    bitrate_bps: float = 50e6
    frame_rate_fps: float = 60.0
    jitter_sigma_us: float = 1000.0
    start_time_us: int = 0
    cc: str = "cubic"

    def profile(self) -> VrSourceProfile:
        return VrSourceProfile(self.bitrate_bps, self.frame_rate_fps,
                               self.jitter_sigma_us, self.start_time_us)


@dataclass
class TransportConfig:
    mss_bytes: int = 1448
    initial_window_segments: int = 10
    ue_ack_delay_us: int = 0
    bbr_initial_rtt_us: int = 10_000


@dataclass
class GnbSection:
    tdd_pattern: list[str] = field(default_factory=lambda: ["D", "D", "D", "S", "U"])
    s_split_symbols: list[int] = field(default_factory=lambda: [10, 2, 2])
    scs_khz: int = 15
    bandwidth_hz: float = 200e6
    mcs_index: int = 20
    tb_size_bits: float = 1_000_000.0
    capacity_override_bps: Optional[float] = 880e6
    per_queue_limit_bytes: Optional[int] = None
    ran_processing_delay_us: int = 0

    def build(self) -> GnbConfig:
        return GnbConfig(
            pattern=TddPattern(tuple(self.tdd_pattern), tuple(self.s_split_symbols)),
            link=LinkState(self.scs_khz, self.bandwidth_hz, self.mcs_index,
                           self.tb_size_bits),
            capacity_override_bps=self.capacity_override_bps,
            per_queue_limit_bytes=self.per_queue_limit_bytes,
            ran_processing_delay_us=self.ran_processing_delay_us,
        )


@dataclass
class CeccSection:
    enabled: bool = False
    cycle_us: int = 1000
    delay_standard_us: int = 10_000
    rwnd_headroom: float = 1.2
    frame_estimate_window_s: float = 2.0

    def build(self) -> CeccConfig:
        return CeccConfig(self.enabled, self.cycle_us, self.delay_standard_us,
                          self.rwnd_headroom, self.frame_estimate_window_s)


@dataclass
class MetricsSection:
    delay_threshold_us: float = 10_000.0
    violation_budget: float = 0.0001
    include_slow_start: bool = True
    load_bin_width_us: int = 5000

    def standard(self) -> QoeStandard:
        return QoeStandard(self.delay_threshold_us, self.violation_budget,
                           self.include_slow_start)


@dataclass
class WiredSection:
    one_way_delay_us: int = 1000
    symmetric: bool = True

    def build(self) -> WiredPathModel:
        return WiredPathModel(self.one_way_delay_us, self.symmetric)


@dataclass
class ScenarioConfig:
    duration_s: float = 30.0
    seed: int = 1
    wired: WiredSection = field(default_factory=WiredSection)
    gnb: GnbSection = field(default_factory=GnbSection)
    flows: list[FlowConfig] = field(default_factory=lambda: [FlowConfig()])
    transport: TransportConfig = field(default_factory=TransportConfig)
    cecc: CeccSection = field(default_factory=CeccSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    @property
    def duration_us(self) -> int:
        return int(self.duration_s * 1e6)

    def validate(self) -> None:
        if self.duration_s < 1:
            raise ConfigError("duration_s: must be at least 1 second")
        if not self.flows:
            raise ConfigError("flows: at least one flow is required")
        for i, flow in enumerate(self.flows):
            if flow.cc not in CC_KINDS:
                raise ConfigError(f"flows[{i}].cc: unknown kind {flow.cc!r}")
            try:
                flow.profile()
            except ValueError as exc:
                raise ConfigError(f"flows[{i}]: {exc}") from exc
        try:
            self.gnb.build()
        except ValueError as exc:
            raise ConfigError(f"gnb: {exc}") from exc
        try:
            self.wired.build()
        except ValueError as exc:
            raise ConfigError(f"wired: {exc}") from exc
        if self.cecc.cycle_us <= 0:
            raise ConfigError("cecc.cycle_us: must be positive")
        try:
            self.metrics.standard()
        except ValueError as exc:
            raise ConfigError(f"metrics: {exc}") from exc


_SECTION_TYPES = {
    "wired": WiredSection,
    "gnb": GnbSection,
    "transport": TransportConfig,
    "cecc": CeccSection,
    "metrics": MetricsSection,
}


def _build_section(cls, data: dict, where: str):
    known = cls().__dict__.keys()
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected an object")
    top_known = {"duration_s", "seed", "wired", "gnb", "flows", "transport",
                 "cecc", "metrics"}
    unknown = set(data) - top_known
    if unknown:
        raise ConfigError(f"top level: unknown field(s) {sorted(unknown)}")
    cfg = ScenarioConfig()
    if "duration_s" in data:
        cfg.duration_s = float(data["duration_s"])
    if "seed" in data:
        cfg.seed = int(data["seed"])
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            setattr(cfg, name, _build_section(cls, dict(data[name]), name))
    if "flows" in data:
        flows = []
        for i, entry in enumerate(data["flows"]):
            flows.append(_build_section(FlowConfig, dict(entry), f"flows[{i}]"))
        cfg.flows = flows
    cfg.validate()
    return cfg


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Normalized form: every default explicit, key order canonical."""
    return json.loads(json.dumps(asdict(cfg), sort_keys=True))


def normalize(data: dict) -> dict:
    return config_to_dict(config_from_dict(data))


def config_digest(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def paper_default(n_flows: int = 1, cc: str = "cubic",
                  cecc_enabled: bool = False, duration_s: float = 30.0,
                  seed: int = 1, start_stagger_us: int = 0) -> ScenarioConfig:
    """Built-in baseline scenario: DDDSU at 15 kHz, capacity forced to
    880 Mbps, 50 Mbps / 60 fps sources.

    `start_stagger_us` offsets flow k's first frame by k steps; zero keeps
    the fully synchronized worst case.
    """
    cfg = ScenarioConfig(
        duration_s=duration_s,
        seed=seed,
        wired=WiredSection(one_way_delay_us=1000),
        gnb=GnbSection(capacity_override_bps=880e6,
                       ran_processing_delay_us=1000,
                       per_queue_limit_bytes=126_000),
        flows=[FlowConfig(cc=cc, start_time_us=i * start_stagger_us)
               for i in range(n_flows)],
        transport=TransportConfig(ue_ack_delay_us=9000),
        cecc=CeccSection(enabled=cecc_enabled),
    )
    cfg.validate()
    return cfg


def load_config(path_or_preset: str | Path) -> ScenarioConfig:
    """Load a JSON scenario; the literal name 'paper-default' is built in."""
    if str(path_or_preset) == "paper-default":
        return paper_default()
    path = Path(path_or_preset)
    if not path.exists():
        raise ConfigError(f"config path {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: ScenarioConfig, path: Path) -> None:
    path.write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)
                    + "\n", encoding="utf-8")


def derive_cell_config(base: ScenarioConfig, cc: str, n_flows: int,
                       ) -> ScenarioConfig:
    """Sweep cell: replicate the first flow profile n times under one CCA.

    The name 'cecc' selects reliable cubic-style senders with the anchor's
    control loop enabled; plain names run with the loop off.
    """
    cell = copy.deepcopy(base)
    template = copy.deepcopy(base.flows[0])
    if cc == "cecc":
        template.cc = "cubic"
        cell.cecc.enabled = True
    elif cc in CC_KINDS:
        template.cc = cc
        cell.cecc.enabled = False
    else:
        raise ConfigError(f"cc: unknown kind {cc!r}")
    cell.flows = [copy.deepcopy(template) for _ in range(n_flows)]
    cell.validate()
    return cell
