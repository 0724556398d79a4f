"""Look at one-step residuals of a trained Conv-LSTM, split by period kind.

Residuals inside psi periods (saturation plus the following drop) behave
differently from the rest: mostly tiny on the flat plateau, very large at
the drop.  The Levene test asks whether the two groups share a variance,
and the autocorrelation shows how much structure the model leaves behind.

    python3 demos/03_residuals.py [--epochs 20]
"""

import argparse

import numpy as np

from trafficast.evaluate import autocorrelation, levene, residuals
from trafficast.experiments import BUNDLED_SEEDS, bundled_scenarios, paper_setup
from trafficast.models import build, predict, train
from trafficast.pipeline import fit_scaler, prepare
from trafficast.synthgen import generate, psi_mask
from trafficast.trace import LinkSpec

ap = argparse.ArgumentParser()
ap.add_argument("--epochs", type=int, default=20)
args = ap.parse_args()

link = LinkSpec()
train_sc, test_sc = bundled_scenarios(BUNDLED_SEEDS[0])
train_trace, test_trace = generate(train_sc, link), generate(test_sc, link)

window, spec, config = paper_setup("conv_lstm", epochs=args.epochs, repetitions=1)
train_ds = prepare(train_trace, window)
train_ds = train_ds.with_scaler(fit_scaler(train_ds, "standardize", link.capacity))
test_ds = prepare(test_trace, window)

print(f"training conv_lstm for {args.epochs} epochs (batch 1) ...")
ckpt, curve = train(build(spec), train_ds, None, config)
print(f"final train loss {curve.train[-1]:.4f}")

preds = predict(ckpt, test_ds) / link.capacity
res = residuals(preds, test_ds.targets / link.capacity, test_ds.tau_index, test_trace.labels)

groups = {}
for r, lab in zip(res.residual, res.label):
    groups.setdefault(lab or "unlabelled", []).append(r)
print("\nresidual spread by period kind (capacity units):")
for lab, vals in sorted(groups.items()):
    v = np.asarray(vals)
    print(f"  {lab:>12}: n={len(v):5d}  std {v.std():.4f}  mean |r - mean| {np.abs(v - v.mean()).mean():.4f}"
          f"  max |r| {np.abs(v).max():.3f}")

# The test groups: windows whose tau falls in a psi span, against normal windows outside them.
in_psi = psi_mask(test_trace.labels, len(test_trace))[res.tau]
normal = np.array([lab == "normal" for lab in res.label]) & ~in_psi
if in_psi.sum() >= 2:
    w, p = levene([res.residual[normal], res.residual[in_psi]])
    print(f"\npsi windows: {in_psi.sum()}, std {res.residual[in_psi].std():.4f}; "
          f"normal windows: {normal.sum()}, std {res.residual[normal].std():.4f}")
    verdict = "reject" if p < 0.05 else "cannot reject"
    print(f"Levene normal vs psi: W = {w:.2f}, p = {p:.3g} -> {verdict} equal variances at 5%")

acf = autocorrelation(res.residual, 10)
print("\nresidual autocorrelation, lags 1..10:")
print("  " + " ".join(f"{a:+.2f}" for a in acf[1:]))
