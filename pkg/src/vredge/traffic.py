"""Cloud-VR source model and burst-collision analysis.

A VR source emits one whole frame per tick with normally distributed
inter-frame spacing. The analysis helpers quantify the millisecond-scale
burst throughput of a single flow and the probability that several flows'
bursts land inside the same collision window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .engine import Engine, RngStream

US_PER_S = 1_000_000


@dataclass
class VrSourceProfile:
    """Bitrate/frame-rate/jitter parameters of one cloud-VR flow."""

    bitrate_bps: float
    frame_rate_fps: float
    jitter_sigma_us: float = 0.0
    start_time_us: int = 0

    def __post_init__(self):
        if self.bitrate_bps <= 0:
            raise ValueError("bitrate_bps must be > 0")
        if self.frame_rate_fps <= 0:
            raise ValueError("frame_rate_fps must be > 0")
        if self.jitter_sigma_us < 0:
            raise ValueError("jitter_sigma_us must be >= 0")
        # mu is the nominal frame interval; keep the truncated mass tiny.
        if self.jitter_sigma_us > 0 and self.jitter_sigma_us >= self.jitter_mu_us / 3:
            raise ValueError("jitter_sigma_us must be < jitter_mu_us / 3")

    @property
    def jitter_mu_us(self) -> float:
        return US_PER_S / self.frame_rate_fps


@dataclass
class VrFrame:
    flow_id: int
    index: int
    size_bytes: int
    gen_time_us: int


def mean_frame_size(profile: VrSourceProfile) -> int:
    """Average frame payload in bytes (bits per frame, rounded up)."""
    return math.ceil(profile.bitrate_bps / profile.frame_rate_fps / 8)


def instantaneous_throughput(profile: VrSourceProfile) -> float:
    """Millisecond-scale burst throughput in bps: one frame squeezed into 1 ms."""
    return profile.bitrate_bps * 1000.0 / profile.frame_rate_fps


def next_frame_interval(profile: VrSourceProfile, rng: RngStream) -> int:
    """Draw the next inter-frame gap in us.

    Normal(mu, sigma^2), truncated below at mu - 3*sigma and at 1 us so
    generation times strictly increase.
    """
    mu = profile.jitter_mu_us
    sigma = profile.jitter_sigma_us
    if sigma == 0:
        return max(1, round(mu))
    draw = rng.normal(mu, sigma)
    floor = max(mu - 3.0 * sigma, 1.0)
    return max(1, round(max(draw, floor)))


class FrameSource:
    """Per-flow generator: hands whole frames to a sink at each tick."""

    def __init__(self, engine: Engine, profile: VrSourceProfile, flow_id: int,
                 sink, frame_size_bytes: int | None = None):
        self.engine = engine
        self.profile = profile
        self.flow_id = flow_id
        self.sink = sink
        self.frame_size = frame_size_bytes or mean_frame_size(profile)
        self.rng = engine.stream(f"vr-jitter/{flow_id}")
        self.next_index = 0
        self.stop_at: int | None = None

    def start(self) -> None:
        self.engine.schedule(self.profile.start_time_us, self._emit,
                             label=f"frame/{self.flow_id}")

    def _emit(self, t: int) -> None:
        frame = VrFrame(self.flow_id, self.next_index, self.frame_size, t)
        self.next_index += 1
        self.sink.on_app_frame(frame, t)
        gap = next_frame_interval(self.profile, self.rng)
        if self.stop_at is None or t + gap < self.stop_at:
            self.engine.schedule(t + gap, self._emit,
                                 label=f"frame/{self.flow_id}")


@dataclass
class CollisionModel:
    """N flows with per-frame gaps ~ N(mu, sigma^2); bursts collide when the
    accumulated send times after `horizon_frames` gaps fall within `window_us`."""

    n_flows: int
    mu_us: float
    sigma_us: float
    horizon_frames: int
    window_us: float = 1000.0

    def __post_init__(self):
        if self.n_flows < 2:
            raise ValueError("n_flows must be >= 2")
        if self.horizon_frames < 1:
            raise ValueError("horizon_frames must be >= 1")


def collision_probability_closed_form(sigma_us: float, horizon_frames: int,
                                      window_us: float = 1000.0) -> float:
    """P(|Y2 - Y1| < window) for two flows, Y_i the sum of `horizon_frames`
    i.i.d. N(mu, sigma^2) gaps; the difference is N(0, 2 sigma^2 T)."""
    if sigma_us <= 0:
        raise ValueError("sigma_us must be > 0 (degenerate otherwise)")
    if horizon_frames < 1:
        raise ValueError("horizon_frames must be >= 1")
    z = window_us / (sigma_us * math.sqrt(2.0 * horizon_frames))
    return float(2.0 * norm.cdf(z) - 1.0)


def collision_probability_mc(model: CollisionModel, trials: int,
                             seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of P(max_i Y_iT - min_i Y_iT < window).

    Returns (estimate, binomial standard error); deterministic per seed.
    """
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    rng = np.random.default_rng(seed)
    # Accumulated send time of the T-th burst per flow, per trial.
    hits = 0
    chunk = 200_000
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        y = rng.normal(model.mu_us, model.sigma_us,
                       size=(n, model.n_flows, model.horizon_frames)).sum(axis=2)
        spread = y.max(axis=1) - y.min(axis=1)
        hits += int((spread < model.window_us).sum())
        done += n
    p = hits / trials
    stderr = math.sqrt(max(p * (1.0 - p), 1e-12) / trials)
    return p, stderr
