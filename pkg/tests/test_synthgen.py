import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficast.synthgen import (
    MAX_DROP_LEN,
    DropEvent,
    InvalidScenario,
    Scenario,
    TransferEvent,
    generate,
    kind_per_sample,
    label_periods,
    paper_like_scenario,
    partition_labels,
    psi_mask,
)
from trafficast.trace import LinkSpec, PeriodKind, PeriodLabel, trace_from_arrays, write_csv

LINK = LinkSpec()
CAP = LINK.capacity
K = PeriodKind


def _trace(fractions):
    return trace_from_arrays(LINK, np.asarray(fractions, dtype=float) * CAP)


def _bulk(n_files=6000, size=2e9, duration=120, **kw):
    return Scenario(seed=5, duration=duration, transfers=(TransferEvent(3, n_files, (size, 0.0)),), **kw)


# ------------------------------------------------------------ label_periods

def test_flat_saturated_trace_is_one_saturation():
    assert label_periods(_trace([0.95] * 8), 0.9, 3) == [PeriodLabel(K.SATURATION, 0, 7)]


def test_saturation_drop_psi():
    labels = label_periods(_trace([0.95, 0.95, 0.95, 0.4, 0.95, 0.95]), 0.9, 3)
    assert PeriodLabel(K.SATURATION, 0, 2) in labels
    assert PeriodLabel(K.DROP, 3, 3) in labels
    assert PeriodLabel(K.PSI, 0, 3) in labels
    # the trailing 2-sample run is too short for saturation
    assert PeriodLabel(K.SHORT_SPIKE, 4, 5) in labels
    assert len(labels) == 4


def test_all_zero_trace_is_normal():
    assert label_periods(_trace([0.0] * 10)) == [PeriodLabel(K.NORMAL, 0, 9)]


def test_long_dip_is_not_a_drop():
    fr = [0.95] * 6 + [0.2] * (MAX_DROP_LEN + 1) + [0.95] * 6
    labels = label_periods(_trace(fr), 0.9, 5)
    assert [lab.kind for lab in labels] == [K.SATURATION, K.NORMAL, K.SATURATION]


def test_dip_at_end_is_not_a_drop():
    labels = label_periods(_trace([0.95] * 6 + [0.1] * 3), 0.9, 5)
    assert [lab.kind for lab in labels] == [K.SATURATION, K.NORMAL]


def test_dip_after_short_spike_is_normal():
    labels = label_periods(_trace([0.1, 0.95, 0.95, 0.1, 0.1, 0.95]), 0.9, 5)
    assert [lab.kind for lab in labels] == [K.NORMAL, K.SHORT_SPIKE, K.NORMAL, K.SHORT_SPIKE]


def test_threshold_validation():
    with pytest.raises(ValueError):
        label_periods(_trace([0.5]), sat_threshold=1.0)


def _brute_kinds(fr, thr, min_len):
    """Independent per-sample classification by scanning run boundaries."""
    n = len(fr)
    hi = [f >= thr for f in fr]
    bounds = [0] + [i for i in range(1, n) if hi[i] != hi[i - 1]] + [n]
    runs = [(bounds[j], bounds[j + 1] - 1) for j in range(len(bounds) - 1)]
    kinds = [None] * n
    prev = None
    for j, (s, e) in enumerate(runs):
        L = e - s + 1
        if hi[s]:
            k = K.SATURATION if L >= min_len else K.SHORT_SPIKE
        elif prev is K.SATURATION and L <= MAX_DROP_LEN and j < len(runs) - 1:
            k = K.DROP
        else:
            k = K.NORMAL
        kinds[s : e + 1] = [k] * L
        prev = k
    return kinds


@given(
    st.lists(st.sampled_from([0.0, 0.3, 0.89, 0.9, 0.95, 1.0]), min_size=1, max_size=80),
    st.integers(1, 8),
)
def test_labels_partition_and_match_brute_force(fr, min_len):
    tr = _trace(fr)
    labels = label_periods(tr, 0.9, min_len)
    kinds = kind_per_sample(labels, len(fr))
    # every index covered exactly once by the partition kinds
    cover = np.zeros(len(fr), dtype=int)
    for lab in partition_labels(labels):
        cover[lab.start_index : lab.end_index + 1] += 1
    assert (cover == 1).all()
    assert kinds == _brute_kinds([f * CAP for f in fr], 0.9 * CAP, min_len)
    # psi = saturation immediately followed by its drop
    for lab in labels:
        if lab.kind is K.PSI:
            sat = [x for x in labels if x.kind is K.SATURATION and x.start_index == lab.start_index]
            drop = [x for x in labels if x.kind is K.DROP and x.end_index == lab.end_index]
            assert len(sat) == 1 and len(drop) == 1
            assert sat[0].end_index + 1 == drop[0].start_index
    assert psi_mask(labels, len(fr)).sum() == sum(len(x) for x in labels if x.kind is K.PSI)
    # idempotent
    assert label_periods(tr.with_labels(labels), 0.9, min_len) == labels


# ----------------------------------------------------------------- generate

def test_generate_is_deterministic(tmp_path):
    sc = paper_like_scenario(11, duration=400, n_psi=1)
    a, b = generate(sc, LINK), generate(sc, LINK)
    assert a == b
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.labels.csv").read_bytes() == (tmp_path / "b.labels.csv").read_bytes()


def test_different_seeds_differ():
    a = generate(paper_like_scenario(1, duration=300, n_psi=1), LINK)
    b = generate(paper_like_scenario(2, duration=300, n_psi=1), LINK)
    assert not np.array_equal(a.column("traffic"), b.column("traffic"))


def test_empty_scenario_gives_zero_traffic():
    tr = generate(Scenario(seed=0, duration=50), LINK)
    assert len(tr) == 50
    assert (tr.column("traffic") == 0).all()
    assert tr.labels == (PeriodLabel(K.NORMAL, 0, 49),)


def test_huge_transfer_saturates_at_plateau():
    tr = generate(_bulk(), LINK)
    sats = tr.labels_of(K.SATURATION)
    assert len(sats) == 1
    assert tr.labels_of(K.DROP) == [] and tr.labels_of(K.PSI) == []
    traffic = tr.column("traffic")
    sat = sats[0]
    plateau = traffic[sat.start_index : sat.end_index + 1]
    assert np.all(np.abs(plateau - 0.98 * CAP) <= 0.02 * CAP)
    # link stays saturated as long as files wait in the queue
    queued = np.flatnonzero(tr.column("submitted_files") > 0)
    assert sat.end_index >= queued[-1]


def test_timestamps_follow_grid():
    tr = generate(Scenario(seed=0, duration=5, start_time=100.0), LinkSpec(sample_interval=60))
    assert tr.column("timestamp").tolist() == [100.0, 160.0, 220.0, 280.0, 340.0]


def test_drop_event_cuts_throughput():
    base = _bulk()
    cut = _bulk(drop_events=(DropEvent(60, 0.5, 4),))
    a, b = generate(base, LINK).column("throughput"), generate(cut, LINK).column("throughput")
    assert b[60] == pytest.approx(0.5 * a[60])
    assert b[61] == pytest.approx(0.625 * a[61])
    tr = generate(cut, LINK)
    assert len(tr.labels_of(K.PSI)) == 1
    psi = tr.labels_of(K.PSI)[0]
    assert 60 in psi


def test_drop_factor_recovers_linearly():
    d = DropEvent(10, 0.8, 4)
    assert [d.factor(t) for t in range(9, 15)] == pytest.approx([1, 0.2, 0.4, 0.6, 0.8, 1])


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_generator_invariants(seed):
    sc = paper_like_scenario(seed, duration=400, n_psi=1)
    tr = generate(sc, LINK)
    traffic = tr.column("traffic")
    thr = tr.column("throughput")
    assert (traffic >= 0).all() and (traffic <= CAP).all()
    # drained volume never exceeds injected volume (upper bound: files at max jitter)
    injected = sum(ev.n_files * ev.file_size[0] * (1 + ev.file_size[1]) for ev in sc.transfers)
    assert (thr * LINK.sample_interval / 8).sum() <= injected * (1 + 1e-9)


def test_ramp_non_decreasing_while_queue_nonempty():
    tr = generate(_bulk(n_files=5000, size=1e9, duration=80), LINK)
    thr = tr.column("throughput")
    queued = tr.column("submitted_files")
    plateau = 0.98 * CAP
    idx = [t for t in range(1, len(thr)) if queued[t] > 0 and thr[t - 1] < plateau]
    assert idx, "scenario should ramp"
    for t in idx:
        assert thr[t] >= thr[t - 1]


def test_drained_equals_injected_when_all_files_finish():
    sc = Scenario(seed=0, duration=200, transfers=(TransferEvent(0, 50, (1e9, 0.0)),))
    tr = generate(sc, LINK)
    moved = (tr.column("throughput") * LINK.sample_interval / 8).sum()
    assert moved == pytest.approx(50 * 1e9, rel=1e-9)
    assert tr.column("active_files")[-1] == 0


# ----------------------------------------------------------------- scenario

def test_scenario_json_round_trip(tmp_path):
    sc = paper_like_scenario(3, duration=500)
    p = tmp_path / "s.json"
    sc.save(p)
    assert Scenario.load(p) == sc
    assert Scenario.from_dict(json.loads(p.read_text())) == sc


@pytest.mark.parametrize(
    "bad",
    [
        {"seed": 0, "duration": -1},
        {"seed": -1, "duration": 5},
        {"seed": 0, "duration": 5, "plateau": 1.5},
        {"seed": 0, "duration": 5, "background_noise": [0.1, -0.1]},
        {"seed": 0, "duration": 5, "concurrency_cap": 0},
        {"seed": 0, "duration": 5, "transfers": [{"start_index": 0, "n_files": 0, "file_size": [1, 0]}]},
        {"seed": 0, "duration": 5, "drop_events": [{"start_index": 0, "depth": 0.5, "recovery": 11}]},
        {"seed": 0, "duration": 5, "bogus": 1},
        {"duration": 5},
    ],
)
def test_invalid_scenarios(bad):
    with pytest.raises(InvalidScenario):
        Scenario.from_dict(bad)


def test_load_rejects_non_object(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("[1, 2]")
    with pytest.raises(InvalidScenario):
        Scenario.load(p)


def test_paper_like_scenario_shape():
    tr = generate(paper_like_scenario(1001, duration=2000), LINK)
    assert len(tr) == 2000
    assert len(tr.labels_of(K.PSI)) == 2
