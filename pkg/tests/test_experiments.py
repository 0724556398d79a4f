import numpy as np

from trafficast.experiments import (
    BUNDLED_SEEDS,
    TEST_LENGTH,
    TRAIN_LENGTH,
    bundled_scenarios,
    compare_architectures,
    paper_features,
    paper_setup,
    select_bundle_seeds,
)
from trafficast.models import Arch
from trafficast.pipeline import ALL_FEATURES, BASE_FEATURES
from trafficast.synthgen import generate
from trafficast.trace import LinkSpec, PeriodKind


def test_bundled_seeds_are_the_first_qualifying_ones():
    assert select_bundle_seeds() == list(BUNDLED_SEEDS)


def test_bundled_scenarios_shape():
    for seed in BUNDLED_SEEDS:
        train, test = bundled_scenarios(seed)
        tr, te = generate(train, LinkSpec()), generate(test, LinkSpec())
        assert len(tr) == TRAIN_LENGTH and len(te) == TEST_LENGTH
        assert len(te.labels_of(PeriodKind.PSI)) == 2
        assert len(tr.labels_of(PeriodKind.PSI)) >= 1


def test_paper_setup_defaults():
    window, spec, config = paper_setup("conv_lstm")
    assert (window.delta, window.gamma) == (10, 15)
    assert window.features.names == ALL_FEATURES
    assert (spec.f, config.batch_size, config.epochs, config.repetitions) == (8, 1, 50, 10)
    window, spec, config = paper_setup(Arch.LSTM)
    assert window.features.names == BASE_FEATURES
    assert (spec.f, config.batch_size) == (64, 128)
    assert paper_features(Arch.CNN).names == BASE_FEATURES


def test_compare_architectures_smoke():
    train, test = bundled_scenarios(BUNDLED_SEEDS[0])
    tr, te = generate(train, LinkSpec()), generate(test, LinkSpec())
    msgs = []
    res = compare_architectures(tr, te, archs=("cnn", "lstm"), delta=4, gamma=2, epochs=1, repetitions=2,
                                progress=msgs.append)
    assert set(res) == {Arch.CNN, Arch.LSTM}
    for r in res.values():
        assert len(r.test) == len(r.train) == 2
        assert all(np.isfinite(rep.mse_total) for rep in r.test + r.train)
        assert r.test[0].n_windows == TEST_LENGTH - 2 - 4 + 1
    assert len(msgs) == 2
