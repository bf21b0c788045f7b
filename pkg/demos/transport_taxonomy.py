"""Frame delay vs network delay across transport families.

Rate-based pacing keeps the network path almost empty but parks each
frame's tail in the send buffer, so frame delay dwarfs network delay.
A loss-based sender with a grown window fires the whole frame at once:
both delays collapse to the same number. Best-effort datagrams sit in
between: no buffering at all, but every burst slams the cell queue.

Run: python3 demos/transport_taxonomy.py
"""

import numpy as np

import vredge
from vredge.scenario import paper_default

for cc in ("udp", "cubic", "bbr"):
    cfg = paper_default(n_flows=1, cc=cc, duration_s=15.0)
    res = vredge.simulate(cfg)
    steady = [s for s in res.frame_samples
              if s.gen_time_us > max(res.ss_boundary[0], 5_000_000)]
    fd = np.median([s.frame_delay_us for s in steady]) / 1000
    nd = np.median([s.network_delay_us for s in steady]) / 1000
    extra = ""
    if cc == "bbr":
        extra = (f"  (pacing settled at "
                 f"{res.conns[0].bbr_pacing_rate() / 1e6:.1f} Mbps)")
    print(f"{cc:>6}: frame delay {fd:6.2f} ms | network delay {nd:5.2f} ms "
          f"| ratio {fd / nd:5.2f}{extra}")
