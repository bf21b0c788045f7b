"""Where the base-station delay floor and ceiling come from.

The cell serves downlink data only during D slots and the downlink symbols
of the S slot. A packet that just misses the last downlink opportunity
before the guard + uplink blackout waits ~1.3 ms longer than one that
arrives right before a D slot. The phase sweep below reproduces the whole
envelope, and a 60 s live run confirms nothing is ever delivered inside
the blackout.

Run: python3 demos/tdd_delay_envelope.py
"""

import vredge
from vredge.gnb import processing_delay_bounds, slot_kind_at
from vredge.scenario import paper_default

cfg = paper_default(n_flows=1, duration_s=60.0)
gnb = cfg.gnb.build()

print("pattern:", "".join(cfg.gnb.tdd_pattern),
      f"  special slot split {tuple(cfg.gnb.s_split_symbols)} symbols")
print("slot map over one 5 ms period:")
for t in range(0, 5000, 250):
    print(f"  t={t:>5} us  {slot_kind_at(gnb.pattern, gnb.link, t)}")

for burst, label in ((1448, "single packet"),
                     (104_167, "one 50 Mbps / 60 fps frame"),
                     (296_154, "two transport blocks")):
    lo, hi = processing_delay_bounds(gnb, burst)
    print(f"{label:>28}: delay in [{lo / 1000:.2f}, {hi / 1000:.2f}] ms "
          f"(spread {(hi - lo) / 1000:.2f} ms)")

print("\nrunning 60 s to check the blackout is never violated...")
res = vredge.simulate(cfg)
print(f"air deliveries: {res.air_deliveries:,}; "
      f"inside guard/uplink: {res.blackout_violations}")
