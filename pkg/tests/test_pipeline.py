import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from trafficast.pipeline import (
    ALL_FEATURES,
    BASE_FEATURES,
    EMA15_SPAN,
    EmptySeries,
    EmptyTrace,
    FeatureSet,
    Scaler,
    ScalerKind,
    SeriesTooShort,
    WindowConfig,
    compute_features,
    ema,
    fit_scaler,
    make_windows,
    prepare,
)
from trafficast.trace import LinkSpec, TrafficTrace, trace_from_arrays

LINK = LinkSpec()


def _tr(n=5, **cols):
    traffic = cols.pop("traffic", np.arange(n, dtype=float))
    return trace_from_arrays(LINK, traffic, **cols)


# ---------------------------------------------------------------- features

def test_af_times_afs():
    tr = _tr(2, active_files=[2, 2], avg_file_size=[5, 5])
    m, y = compute_features(tr, FeatureSet(("af_x_afs",)))
    assert m[:, 0].tolist() == [10, 10]


def test_ql_times_afs():
    tr = _tr(1, submitted_files=[3], avg_file_size=[4])
    m, _ = compute_features(tr, FeatureSet(("ql_x_afs",)))
    assert m.tolist() == [[12]]


def test_base_flags_give_four_columns_in_canonical_order():
    tr = _tr(3, throughput=[1, 2, 3], active_files=[4, 5, 6], submitted_files=[7, 8, 9], avg_file_size=[1, 1, 1])
    m, y = compute_features(tr, FeatureSet(("afs", "th", "sf", "af")))
    assert FeatureSet(("afs", "th")).names == ("th", "afs")
    assert m.shape == (3, 4)
    assert m[:, 0].tolist() == [1, 2, 3] and m[:, 1].tolist() == [4, 5, 6]
    assert y.tolist() == [0, 1, 2]


def test_all_features():
    tr = _tr(4, throughput=[1, 2, 3, 4])
    m, _ = compute_features(tr, FeatureSet(ALL_FEATURES))
    assert m.shape == (4, 7)
    assert np.allclose(m[:, 4], ema([1, 2, 3, 4], EMA15_SPAN))


def test_feature_validation():
    with pytest.raises(ValueError):
        FeatureSet(("nope",))
    with pytest.raises(ValueError):
        FeatureSet(())
    with pytest.raises(EmptyTrace):
        compute_features(TrafficTrace(LINK, ()), FeatureSet())


# --------------------------------------------------------------------- ema

def test_ema_examples():
    assert ema([4.0] * 6, 8).tolist() == [4.0] * 6
    assert ema([0.0, 9.0], 8) == pytest.approx([0.0, 2.0], abs=1e-15)
    x = np.array([3.0, -1.0, 7.5])
    assert ema(x, 1).tolist() == x.tolist()
    assert EMA15_SPAN == 8


def test_ema_errors():
    with pytest.raises(EmptySeries):
        ema([], 3)
    with pytest.raises(ValueError):
        ema([1.0], 0)


@given(hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e6, 1e6)), st.integers(1, 30))
def test_ema_matches_recurrence_and_stays_in_hull(x, span):
    a = 2 / (span + 1)
    ref = [x[0]]
    for v in x[1:]:
        ref.append(a * v + (1 - a) * ref[-1])
    out = ema(x, span)
    assert np.allclose(out, ref, rtol=1e-12, atol=1e-9)
    assert out.min() >= x.min() - 1e-6 and out.max() <= x.max() + 1e-6


# --------------------------------------------------------------- windowing

def test_six_samples_delta2_gamma1():
    m = np.arange(12, dtype=float).reshape(6, 2)
    y = np.arange(10, 16, dtype=float)
    ds = make_windows(m, y, WindowConfig(2, 1))
    assert len(ds) == 4
    assert ds.inputs[0].tolist() == m[0:2].tolist()  # rows 1-2 (1-based)
    assert ds.targets[0].tolist() == [y[1], y[2]]  # [y_2, y_3] (1-based)
    assert ds.tau_index.tolist() == [1, 2, 3, 4]


def test_boundary_single_window():
    ds = make_windows(np.ones((7, 1)), np.arange(7.0), WindowConfig(4, 3))
    assert len(ds) == 1
    assert ds.targets.tolist() == [[3, 4, 5, 6]]


def test_gamma_zero():
    y = np.arange(9.0)
    ds = make_windows(y[:, None], y, WindowConfig(3, 0))
    assert len(ds) == 9 - 3 + 1
    assert ds.targets[:, 0].tolist() == y[2:].tolist()


def test_too_short():
    with pytest.raises(SeriesTooShort) as exc:
        make_windows(np.ones((5, 1)), np.ones(5), WindowConfig(4, 2))
    assert exc.value.required == 6 and "6" in str(exc.value)


def test_window_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        WindowConfig(0, 1)
    with pytest.raises(ValueError):
        WindowConfig(2, -1)
    wc = WindowConfig(10, 15, FeatureSet(ALL_FEATURES))
    assert WindowConfig.from_dict(wc.to_dict()) == wc
    assert wc.min_length == 25


@given(st.integers(1, 60), st.integers(1, 12), st.integers(0, 12), st.integers(1, 4), st.integers(0, 99))
def test_window_algebra(extra, delta, gamma, nf, seed):
    n_time = delta + gamma + extra - 1
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n_time, nf))
    y = rng.standard_normal(n_time)
    ds = make_windows(m, y, WindowConfig(delta, gamma))
    assert len(ds) == len(ds.targets) == n_time - gamma - delta + 1
    assert ds.inputs.shape == (len(ds), delta, nf) and ds.targets.shape == (len(ds), gamma + 1)
    for w in range(len(ds)):
        tau = w + delta  # 1-based
        assert ds.tau_index[w] == tau - 1
        for r in range(1, delta + 1):
            assert np.array_equal(ds.inputs[w, r - 1], m[tau - delta + r - 1])
        for i in range(gamma + 1):
            assert ds.targets[w, i] == y[tau + i - 1]


def test_prepare_from_trace():
    tr = _tr(20, throughput=np.arange(20.0))
    ds = prepare(tr, WindowConfig(4, 2, FeatureSet(("th",))))
    assert len(ds) == 15
    assert ds.inputs[0, :, 0].tolist() == [0, 1, 2, 3]


def test_subset_keeps_alignment():
    y = np.arange(10.0)
    ds = make_windows(y[:, None], y, WindowConfig(2, 1))
    sub = ds.subset(slice(2, 4))
    assert sub.tau_index.tolist() == [3, 4]
    assert sub.targets[:, 0].tolist() == [3, 4]


# ----------------------------------------------------------------- scaling

def _ds(col, n_features=1):
    m = np.asarray(col, dtype=float).reshape(-1, n_features)
    return make_windows(m, np.zeros(len(m)), WindowConfig(1, 0, FeatureSet(BASE_FEATURES[:n_features])))


def test_standardize_example():
    sc = fit_scaler(_ds([1, 2, 3]), "standardize")
    z = sc.transform_inputs(np.array([[1.0], [2.0], [3.0]]))
    assert z[:, 0] == pytest.approx([-1.224744871391589, 0, 1.224744871391589], abs=1e-12)
    assert sc.std[0] == pytest.approx(np.sqrt(2 / 3))


def test_constant_column_gets_unit_std():
    sc = fit_scaler(_ds([5, 5, 5]))
    assert sc.std.tolist() == [1.0]
    assert sc.transform_inputs(np.full((3, 1), 5.0)).tolist() == [[0.0]] * 3


def test_capacity_scaler():
    ds = make_windows(
        np.array([[5e9, 3.0]]), np.array([5e9]), WindowConfig(1, 0, FeatureSet(("th", "af")))
    )
    sc = fit_scaler(ds, ScalerKind.CAPACITY, 10e9)
    assert sc.transform_inputs(np.array([5e9, 3.0])).tolist() == [0.5, 3.0]
    assert sc.transform_targets(np.array([5e9])).tolist() == [0.5]


def test_scaler_round_trip_dict():
    sc = fit_scaler(_ds([1.0, 4.0, 9.0, 2.0]))
    assert Scaler.from_dict(sc.to_dict()).to_dict() == sc.to_dict()


def test_scaled_requires_scaler():
    with pytest.raises(ValueError):
        _ds([1.0, 2.0]).scaled()


@given(
    hnp.arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 4)), elements=st.floats(-1e9, 1e9)),
    st.sampled_from(list(ScalerKind)),
)
def test_scaler_inverse_is_identity(m, kind):
    nf = m.shape[1]
    ds = make_windows(m, np.abs(m[:, 0]), WindowConfig(1, 0, FeatureSet(BASE_FEATURES[:nf])))
    sc = fit_scaler(ds, kind, 10e9)
    back = sc.inverse_inputs(sc.transform_inputs(ds.inputs))
    assert np.allclose(back, ds.inputs, rtol=1e-9, atol=1e-9 * (1 + np.abs(ds.inputs).max()))
    assert np.allclose(sc.inverse_targets(sc.transform_targets(ds.targets)), ds.targets, rtol=1e-12)
    # windowing never alters raw values
    assert np.array_equal(ds.inputs[:, 0, :], m)
