import numpy as np
import pytest

from mcloop.channel import ChannelSimConfig, simulate
from mcloop.detect import (DetectorConfig, ThresholdSet, class_means, decode_trace, detect_symbol,
                           detection_sample, init_thresholds, pilot_sequence, update_thresholds)
from mcloop.errors import CalibrationError, DomainError, EndOfTrace
from mcloop.experiment import build_filter
from mcloop.model import ModulationConfig, Trace, build_tx_schedule
from mcloop.sync import ReceiveFilter, build_blind_corr_filter, metric_at


def test_threshold_set_validation():
    assert ThresholdSet(0, [0.1, 0.2]).values == (0.1, 0.2)
    with pytest.raises(DomainError):
        ThresholdSet(0, [0.2, 0.2])
    with pytest.raises(DomainError):
        ThresholdSet(-1, [0.1])


def test_detector_config_validation():
    DetectorConfig(80, 130, 1, 50)
    with pytest.raises(DomainError):
        DetectorConfig(80, 10, 1, 50)
    with pytest.raises(DomainError):
        DetectorConfig(80, 130, 0, 50)
    with pytest.raises(DomainError):
        DetectorConfig(80, 3, 1, 2).check(4)


def test_window_indices():
    det = DetectorConfig(80, 130, 1, 50)
    assert list(det.window_indices(1)) == list(range(161, 211))
    assert list(det.window_indices(7)) == list(range(167, 217))
    det = DetectorConfig(10, 20, 3, 15)
    assert list(det.window_indices(2)) == list(range(21, 36))


def test_detection_sample_equals_metric():
    r = np.random.default_rng(0).normal(1, 0.05, 200)
    tr = Trace(0.1, r)
    f = build_blind_corr_filter(3.0, 5.0, 0.1)
    assert detection_sample(f, tr, 4.2) == metric_at(f, r, 42)
    assert detection_sample(f, Trace(0.1, np.ones(200)), 3.0) == 0.0
    with pytest.raises(EndOfTrace):
        detection_sample(f, tr, 16.0)


def test_init_thresholds_examples():
    assert init_thresholds([0.2, 0.8], [0, 1], 2).values == pytest.approx((0.5,))
    assert init_thresholds([0, 1, 2, 3], [0, 1, 2, 3], 4).values == pytest.approx((0.5, 1.5, 2.5))
    dup = init_thresholds([0, 0, 1, 1, 2, 3], [0, 0, 1, 1, 2, 3], 4)
    assert dup.values == pytest.approx((0.5, 1.5, 2.5)) and dup.set_index == 0
    with pytest.raises(DomainError):
        init_thresholds([0, 1, 2], [0, 1, 2], 4)
    with pytest.raises(CalibrationError):
        init_thresholds([0, 2, 1, 3], [0, 1, 2, 3], 4)


def test_update_translation():
    prev = ThresholdSet(3, [0.5, 1.5, 2.5])
    s = np.array([0, 1, 2, 3, 0.1, 1.1, 2.1, 2.9]) + 0.25
    labels = [0, 1, 2, 3, 0, 1, 2, 3]
    base = update_thresholds(prev, s - 0.25, labels, 4)
    new = update_thresholds(prev, s, labels, 4)
    assert new.set_index == 4
    assert np.allclose(np.subtract(new.values, base.values), 0.25)


def test_update_fallback_mean_shift():
    prev = ThresholdSet(1, [0.5, 1.5, 2.5])
    # class 3 absent; recomputable thresholds both move by -0.1
    new = update_thresholds(prev, [-0.2, 1.0, 1.8], [0, 1, 2], 4)
    assert new.values == pytest.approx((0.4, 1.4, 2.4))


def test_update_nothing_computable():
    prev = ThresholdSet(1, [0.5, 1.5, 2.5])
    assert update_thresholds(prev, [0.0, 2.0], [0, 2], 4).values == prev.values
    assert update_thresholds(prev, [], [], 4).values == prev.values


def test_update_rejects_non_ascending():
    prev = ThresholdSet(1, [0.5, 1.5, 2.5])
    # class means 2, 0, 1 give midpoints 1.0 and 0.5
    new = update_thresholds(prev, [2.0, 0.0, 1.0], [0, 1, 2], 4)
    assert new.values == prev.values and new.set_index == 2


def test_detect_symbol_interval_rule():
    xi = ThresholdSet(0, [0.5, 1.5, 2.5])
    assert detect_symbol(-1.0, xi) == 0
    assert detect_symbol(1.7, xi) == 2
    assert detect_symbol(1.5, xi) == 2
    assert detect_symbol(9.0, xi) == 3


def test_class_means():
    assert class_means([1.0, 3.0, 5.0], [0, 0, 2], 3) == [2.0, None, 5.0]


def test_pilot_sequence():
    assert pilot_sequence(4, 10).tolist() == [0, 1, 2, 3, 0, 1, 2, 3, 0, 1]


@pytest.fixture(scope="module")
def binary_run(testbed):
    det = DetectorConfig(10, 20, 1, 10)
    mod = ModulationConfig(2, 3.0, 2.0)
    rng = np.random.default_rng(9)
    symbols = np.concatenate((rng.integers(0, 2, 10), pilot_sequence(2, 20), rng.integers(0, 2, 170)))
    cfg = ChannelSimConfig(testbed)
    trace = simulate(build_tx_schedule(symbols, mod), cfg).trace
    return det, mod, cfg, symbols, trace


def test_decode_noise_free_binary_round_trip(binary_run):
    det, mod, cfg, symbols, trace = binary_run
    filt = build_filter("SDCF", mod, cfg)
    rep = decode_trace(trace, mod, det, filt, symbol_count=200)
    assert rep.status == "ok"
    assert np.array_equal(rep.detected[10:], symbols[10:])
    assert np.all(np.abs(rep.starts - (20.0 + 5.0 * np.arange(200))) <= 0.4)
    assert len(rep.thresholds) == 170


def test_decode_scaled_filter_same_decisions(binary_run):
    det, mod, cfg, symbols, trace = binary_run
    filt = build_filter("BDCF", mod)
    a = decode_trace(trace, mod, det, filt, symbol_count=200)
    b = decode_trace(trace, mod, det, filt.scaled(3.5), symbol_count=200)
    assert np.array_equal(a.detected, b.detected)
    assert np.allclose(b.samples, 3.5 * a.samples)
    assert np.allclose(b.thresholds[-1].values, 3.5 * np.array(a.thresholds[-1].values))


def test_decode_errors(binary_run):
    det, mod, cfg, symbols, trace = binary_run
    filt = build_filter("BCF", mod)
    with pytest.raises(EndOfTrace):
        decode_trace(trace, mod, det, filt, symbol_count=400)
    with pytest.raises(DomainError):
        decode_trace(trace, mod, det, ReceiveFilter("BCF", filt.coefficients, 0.2))
    with pytest.raises(DomainError):
        decode_trace(trace, mod, det, filt, pilots=[0, 1])
    noise = Trace(0.1, np.random.default_rng(3).normal(1.0, 0.01, 3000))
    assert decode_trace(noise, mod, det, filt).status == "start_not_detected"


def test_decode_open_ended_stops_at_trace_end(binary_run):
    det, mod, cfg, symbols, trace = binary_run
    rep = decode_trace(trace, mod, det, build_filter("BCF", mod))
    assert len(rep.records) >= 200
