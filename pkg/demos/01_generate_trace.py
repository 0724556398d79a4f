"""Generate a synthetic link trace and look at how its periods are labelled.

A 10 Gbps link is loaded by background transfers plus two bulk transfers
large enough to saturate it.  The generator labels saturation runs, the
throughput drops that follow them (together a psi period), short spikes and
everything else as normal.

    python3 demos/01_generate_trace.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from trafficast.synthgen import generate, paper_like_scenario
from trafficast.trace import LinkSpec, PeriodKind, write_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

link = LinkSpec()
scenario = paper_like_scenario(seed=7, duration=2000)
trace = generate(scenario, link)

th = trace.column("traffic") / link.capacity
print(f"{len(trace)} samples at {link.sample_interval:.0f}s, link capacity {link.capacity / 1e9:.0f} Gbps")
print(f"mean utilisation {th.mean():.2f}, max {th.max():.2f}")

for kind in PeriodKind:
    spans = trace.labels_of(kind)
    total = sum(len(s) for s in spans)
    print(f"{kind.value:>12}: {len(spans):3d} spans, {total:5d} samples")

print("\npsi periods and the utilisation inside them:")
for lab in trace.labels_of(PeriodKind.PSI):
    seg = th[lab.start_index:lab.end_index + 1]
    print(f"  [{lab.start_index:4d}, {lab.end_index:4d}]  mean {seg.mean():.2f}  min {seg.min():.2f}")

# A crude sparkline of the trace, 100 samples per character.
bars = " .:-=+*#%@"
coarse = th[: len(th) // 100 * 100].reshape(-1, 100).mean(axis=1)
print("\n" + "".join(bars[min(int(v * len(bars)), len(bars) - 1)] for v in coarse))

write_csv(trace, out / "trace.csv")
scenario.save(out / "scenario.json")
print(f"\nwrote {out / 'trace.csv'} (labels alongside) and {out / 'scenario.json'}")
print("the same trace comes out of: trafficast generate --scenario", out / "scenario.json", "--out trace.csv")
