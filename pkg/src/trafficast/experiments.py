"""Bundled scenarios and the four-architecture comparison run on them.

Each bundled seed ``s`` comes as a pair of scenario files: a 1500-sample
training scenario generated with seed ``s`` and a 2000-sample test scenario
with seed ``s + 1000`` holding exactly two psi periods.  The seeds are the
first three for which that holds (see :func:`select_bundle_seeds`).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

from .evaluate import MetricsReport, evaluate
from .models import PAPER_DEFAULTS, Arch, ModelSpec, TrainConfig, predict, run_repetitions
from .pipeline import ALL_FEATURES, BASE_FEATURES, FeatureSet, WindowConfig, fit_scaler, prepare
from .synthgen import Scenario, generate, paper_like_scenario
from .trace import LinkSpec, PeriodKind, TrafficTrace

BUNDLED_SEEDS = (1, 3, 4)
TRAIN_LENGTH = 1500
TEST_LENGTH = 2000
TEST_SEED_OFFSET = 1000
PAPER_DELTA = 10
PAPER_GAMMA = 15
PAPER_EPOCHS = 50
PAPER_REPETITIONS = 10


def _n_psi(trace: TrafficTrace) -> int:
    return len(trace.labels_of(PeriodKind.PSI))


def select_bundle_seeds(count: int = 3, link: LinkSpec | None = None) -> list[int]:
    """First ``count`` seeds whose train trace has a psi period and whose test trace has exactly two."""
    link = link or LinkSpec()
    seeds = []
    s = 1
    while len(seeds) < count:
        train = generate(paper_like_scenario(s, TRAIN_LENGTH), link)
        test = generate(paper_like_scenario(s + TEST_SEED_OFFSET, TEST_LENGTH), link)
        if _n_psi(train) >= 1 and _n_psi(test) == 2:
            seeds.append(s)
        s += 1
    return seeds


def scenario_path(seed: int, role: str) -> Path:
    return Path(str(resources.files("trafficast") / "data" / "scenarios" / f"seed_{seed:03d}_{role}.json"))


def bundled_scenarios(seed: int) -> tuple[Scenario, Scenario]:
    """(train, test) scenarios shipped with the package for ``seed``."""
    return Scenario.load(scenario_path(seed, "train")), Scenario.load(scenario_path(seed, "test"))


def write_bundle(directory: str | Path, seeds=BUNDLED_SEEDS) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in seeds:
        paper_like_scenario(s, TRAIN_LENGTH).save(directory / f"seed_{s:03d}_train.json")
        paper_like_scenario(s + TEST_SEED_OFFSET, TEST_LENGTH).save(directory / f"seed_{s:03d}_test.json")


def paper_features(arch: Arch) -> FeatureSet:
    """Conv-LSTM also gets the EMA and size-product features; the others use the four base ones."""
    return FeatureSet(ALL_FEATURES if arch is Arch.CONV_LSTM else BASE_FEATURES)


def paper_setup(arch: Arch | str, delta: int = PAPER_DELTA, gamma: int = PAPER_GAMMA, epochs: int = PAPER_EPOCHS,
                repetitions: int = PAPER_REPETITIONS, seed: int = 0) -> tuple[WindowConfig, ModelSpec, TrainConfig]:
    arch = Arch(arch)
    defaults = PAPER_DEFAULTS[arch]
    window = WindowConfig(delta, gamma, paper_features(arch))
    spec = ModelSpec(arch, delta, gamma, window.features.n_features, defaults["f"], kernel_size=3, seed=seed)
    config = TrainConfig(epochs=epochs, batch_size=defaults["batch_size"], repetitions=repetitions, seed=seed)
    return window, spec, config


@dataclass
class ArchResult:
    arch: Arch
    test: list[MetricsReport]
    train: list[MetricsReport]


def compare_architectures(
    train_trace: TrafficTrace,
    test_trace: TrafficTrace,
    archs=tuple(Arch),
    delta: int = PAPER_DELTA,
    gamma: int = PAPER_GAMMA,
    epochs: int = PAPER_EPOCHS,
    repetitions: int = PAPER_REPETITIONS,
    seed: int = 0,
    progress: Callable[[str], None] | None = None,
) -> dict[Arch, ArchResult]:
    """Train every architecture ``repetitions`` times and evaluate on both traces.

    The scaler is fit on the training windows only; the last 20% of them are
    held out for validation losses.
    """
    results = {}
    for arch in archs:
        arch = Arch(arch)
        window, spec, config = paper_setup(arch, delta, gamma, epochs, repetitions, seed)
        train_ds = prepare(train_trace, window)
        train_ds = train_ds.with_scaler(fit_scaler(train_ds, "standardize", train_trace.link.capacity))
        test_ds = prepare(test_trace, window)
        runs = run_repetitions(spec, train_ds, None, test_ds, config, test_trace.labels, meta={"split": "test"})
        train_reports = []
        for ckpt, rep in runs:
            preds = predict(ckpt, train_ds)
            tr = evaluate(preds, train_ds.targets, train_ds.tau_index, train_trace.labels,
                          scale=train_trace.link.capacity, meta=dict(rep.meta, split="train"))
            train_reports.append(tr)
        results[arch] = ArchResult(arch, [r for _, r in runs], train_reports)
        if progress:
            mean = sum(r.mse_total for _, r in runs) / len(runs)
            progress(f"{arch.value}: {len(runs)} repetition(s), mean test MSE {mean:.4f}")
    return results
