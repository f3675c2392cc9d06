import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcm.features import (
    FEATURE_NAMES,
    LabeledDataset,
    RideTrace,
    SegmentFeatures,
    class_weights,
    extract_features,
    gnb_label_correction,
    read_segments_csv,
    segment,
    trace_features,
    urgency_score,
    write_segments_csv,
)


def make_trace(speed, accel=None, jerk=None, rate=10.0):
    speed = np.asarray(speed, dtype=float)
    n = speed.size
    return RideTrace(
        np.arange(n) / rate,
        speed,
        np.zeros(n) if accel is None else accel,
        np.zeros(n) if jerk is None else jerk,
        rate,
    )


def test_feature_names_canonical():
    assert len(FEATURE_NAMES) == 21
    assert FEATURE_NAMES[:7] == ("speed_mean", "speed_median", "speed_std", "speed_min", "speed_max",
                                 "speed_p25", "speed_p75")
    assert FEATURE_NAMES[7] == "accel_mean" and FEATURE_NAMES[-1] == "jerk_p75"


@pytest.mark.parametrize("n, expected", [(300, [100, 100, 100]), (100, [100]), (149, [100]), (150, [100, 50]),
                                         (0, [])])
def test_segment_lengths(n, expected):
    ranges = segment(make_trace(np.ones(n)), 10.0)
    assert [len(r) for r in ranges] == expected
    if ranges:
        assert ranges[0].start == 0
        assert all(a.stop == b.start for a, b in zip(ranges, ranges[1:]))


def test_segment_rejects_nonpositive_window():
    with pytest.raises(ValueError):
        segment(make_trace(np.ones(10)), 0)


def test_constant_speed_block():
    f = extract_features(make_trace(np.full(100, 5.0)), range(0, 100))
    assert f.block("speed") == dict(mean=5, median=5, std=0, min=5, max=5, p25=5, p75=5)


def test_percentile_convention():
    f = extract_features(make_trace([1.0, 2.0, 3.0, 4.0]), range(0, 4))
    b = f.block("speed")
    assert (b["mean"], b["median"], b["p25"], b["p75"]) == (2.5, 2.5, 1.75, 3.25)
    assert b["std"] == pytest.approx(np.sqrt(1.25))  # population std


def test_single_sample_range():
    f = extract_features(make_trace([3.0, 7.0, 9.0]), range(1, 2))
    b = f.block("speed")
    assert b.pop("std") == 0.0
    assert set(b.values()) == {7.0}


def test_out_of_bounds_range():
    with pytest.raises(IndexError):
        extract_features(make_trace(np.ones(5)), range(3, 8))
    with pytest.raises(ValueError):
        extract_features(make_trace(np.ones(5)), range(2, 2))


@settings(max_examples=40)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60), st.integers(0, 30))
def test_order_stats_and_locality(values, extra):
    n = len(values)
    x = np.array(values)
    t = make_trace(x, accel=x[::-1].copy(), jerk=np.sin(x))
    f = extract_features(t, range(0, n))
    for sig in ("speed", "accel", "jerk"):
        b = f.block(sig)
        assert b["min"] <= b["p25"] <= b["median"] <= b["p75"] <= b["max"]
    padded = np.concatenate([x, np.full(extra, 1e3)])
    t2 = make_trace(padded, accel=np.concatenate([x[::-1], np.zeros(extra)]), jerk=np.sin(padded))
    assert np.array_equal(extract_features(t2, range(0, n)).values, f.values)


def test_segment_features_validation():
    with pytest.raises(ValueError):
        SegmentFeatures(np.zeros(20))
    with pytest.raises(ValueError):
        SegmentFeatures(np.full(21, np.nan))
    with pytest.raises(ValueError):
        SegmentFeatures(np.zeros(21), label=2)


def two_clusters(rng, n=1000, dim=5, sep=4.0, flip=0.05):
    y = (np.arange(n) % 2).astype(int)
    X = rng.standard_normal((n, dim)) + sep * y[:, None]
    flipped = rng.random(n) < flip
    return X, y, np.where(flipped, 1 - y, y), flipped


def test_gnb_restores_flips():
    rng = np.random.default_rng(0)
    X, y_true, y_noisy, flipped = two_clusters(rng, dim=21)
    data = LabeledDataset.from_arrays(X, y_noisy)
    fixed = gnb_label_correction(data).y
    assert np.mean(fixed[flipped] == y_true[flipped]) >= 0.95
    assert np.array_equal(data.y, y_noisy)  # input untouched


def test_gnb_fixed_point_and_idempotence():
    rng = np.random.default_rng(1)
    X, _, y_noisy, _ = two_clusters(rng, dim=21)
    once = gnb_label_correction(LabeledDataset.from_arrays(X, y_noisy))
    twice = gnb_label_correction(once)
    assert np.array_equal(once.y, twice.y)


def test_gnb_tie_keeps_label():
    # mirror-image classes; the two rows at 0 have exactly equal likelihoods
    X = np.zeros((6, 21))
    X[:, 0] = [-2.0, -1.0, 0.0, 2.0, 1.0, 0.0]
    y = np.array([0, 0, 0, 1, 1, 1])
    out = gnb_label_correction(LabeledDataset.from_arrays(X, y)).y
    assert out[2] == 0 and out[5] == 1
    assert np.array_equal(out, y)


def test_gnb_single_class_rejected():
    with pytest.raises(ValueError):
        gnb_label_correction(LabeledDataset.from_arrays(np.zeros((3, 21)), [1, 1, 1]))


@pytest.mark.parametrize("counts, expected", [((50, 50), (1.0, 1.0)), ((90, 10), (100 / 180, 5.0)), ((1, 1), (1.0, 1.0))])
def test_class_weights(counts, expected):
    y = [0] * counts[0] + [1] * counts[1]
    w0, w1 = class_weights(y)
    assert w0 == pytest.approx(expected[0], abs=1e-3) and w1 == pytest.approx(expected[1], abs=1e-3)
    assert w0 * counts[0] == pytest.approx(w1 * counts[1])


def test_class_weights_single_class():
    with pytest.raises(ValueError):
        class_weights([0, 0, 0])


@pytest.mark.parametrize("labels, expected", [([0, 0, 0], 0.0), ([1, 1, 1, 1], 1.0), ([0, 1, 1, 0], 0.5)])
def test_urgency_score(labels, expected):
    assert urgency_score(labels) == expected


def test_urgency_empty():
    with pytest.raises(ValueError):
        urgency_score([])


def test_trace_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    t = make_trace(rng.random(37) * 10, rng.standard_normal(37), rng.standard_normal(37))
    t.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,speed,accel,jerk"
    back = RideTrace.from_csv(tmp_path / "t.csv")
    assert np.array_equal(back.speed, t.speed) and np.array_equal(back.jerk, t.jerk)
    assert back.sample_rate == pytest.approx(10.0)


def test_segments_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    t = make_trace(rng.random(250) * 10, rng.standard_normal(250), rng.standard_normal(250))
    rows = trace_features(t)
    rows = [SegmentFeatures(r.values, k % 2, k) for k, r in enumerate(rows)]
    write_segments_csv(tmp_path / "s.csv", rows)
    header = (tmp_path / "s.csv").read_text().splitlines()[0].split(",")
    assert header == [*FEATURE_NAMES, "label"]
    back = read_segments_csv(tmp_path / "s.csv")
    assert [r.label for r in back] == [r.label for r in rows]
    assert all(np.array_equal(a.values, b.values) for a, b in zip(back, rows))
