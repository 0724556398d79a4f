"""Train the four architectures on a bundled scenario and compare them.

By default this is a short run (5 epochs, 2 repetitions) that finishes in a
couple of minutes.  Pass ``--full`` for the 50-epoch, 10-repetition setting,
which takes about ten minutes per seed on one core.

    python3 demos/02_compare_architectures.py [--seed 1] [--full]
"""

import argparse
import time

from trafficast.evaluate import compare_models
from trafficast.experiments import BUNDLED_SEEDS, bundled_scenarios, compare_architectures
from trafficast.synthgen import generate
from trafficast.trace import LinkSpec

ap = argparse.ArgumentParser()
ap.add_argument("--seed", type=int, default=BUNDLED_SEEDS[0], choices=BUNDLED_SEEDS)
ap.add_argument("--full", action="store_true")
args = ap.parse_args()

epochs, reps = (50, 10) if args.full else (5, 2)
train_sc, test_sc = bundled_scenarios(args.seed)
train_trace, test_trace = generate(train_sc, LinkSpec()), generate(test_sc, LinkSpec())
print(f"seed {args.seed}: train {len(train_trace)} samples, test {len(test_trace)} samples")
print(f"delta=10, gamma=15, {epochs} epochs, {reps} repetitions\n")

t0 = time.perf_counter()
results = compare_architectures(train_trace, test_trace, epochs=epochs, repetitions=reps,
                                progress=lambda m: print(f"  [{time.perf_counter() - t0:6.0f}s] {m}"))

table = compare_models({(a.value, 10): r.test for a, r in results.items()},
                       {(a.value, 10): r.train for a, r in results.items()})
print("\n" + table.to_text())
print("MSE values are on traffic divided by link capacity.")
print("A low MSE_psi,0 means the model gets the first step right inside saturation and drops,")
print("which is where a forecast is most useful to a transfer scheduler.")
