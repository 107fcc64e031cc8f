import math
from dataclasses import replace

import numpy as np
import pytest

from mcloop.channel import (ChannelSimConfig, ChannelState, advance, apply_linear_decay, channel_step,
                            fluorescence_readout, init_state, loop_geometry, simulate, single_responses)
from mcloop.errors import ConfigurationError, DomainError
from mcloop.model import ModulationConfig, Trace, build_tx_schedule, loop_time, reservoir_residence_time


@pytest.fixture
def coarse(testbed):
    return ChannelSimConfig(testbed, sim_step=0.05)


def test_geometry(testbed):
    cfg = ChannelSimConfig(testbed)
    g = loop_geometry(cfg)
    plug = (testbed.total_volume - testbed.reservoir_volume) / (testbed.volumetric_flux / 60)
    assert g.n_segments == round(plug / 0.01)
    assert g.tx[0] == g.ex[1]
    assert g.rx[0] - g.tx[1] == round(testbed.tx_rx_distance / g.segment_length)
    assert g.mix_fraction == pytest.approx(0.01 / reservoir_residence_time(testbed))


def test_geometry_errors(testbed):
    with pytest.raises(ConfigurationError):
        loop_geometry(ChannelSimConfig(testbed, sim_step=10.0))
    with pytest.raises(ConfigurationError):
        loop_geometry(ChannelSimConfig(testbed, dispersion_coefficient=1.0))
    with pytest.raises(ConfigurationError):
        loop_geometry(ChannelSimConfig(testbed, ex_start=5.0))
    with pytest.raises(ConfigurationError):
        ChannelSimConfig(testbed, tx_rate_const=-1.0)


def test_kernel_matches_reference_step(coarse):
    cfg = replace(coarse, dispersion_coefficient=1e-4)
    g = loop_geometry(cfg)
    levels = build_tx_schedule([3, 0, 2, 1, 3], ModulationConfig(4, 3.0, 2.0)).step_intensities(0.05, 1.0, 20.0)
    ref = init_state(cfg)
    readout = []
    for lv in levels:
        readout.append(fluorescence_readout(ref, cfg, geometry=g))
        ref = channel_step(ref, cfg, lv, g)
    fast, out = advance(init_state(cfg), cfg, levels, 1, g)
    assert np.allclose(fast.segment_on, ref.segment_on, atol=1e-12)
    assert np.allclose(fast.segment_off, ref.segment_off, atol=1e-12)
    assert np.allclose(fast.segment_bleached, ref.segment_bleached, atol=1e-12)
    assert fast.reservoir_off == pytest.approx(ref.reservoir_off, abs=1e-12)
    assert np.allclose(out, readout, atol=1e-12)
    assert fast.step == ref.step == levels.size


def test_step_rejects_bad_intensity(coarse):
    with pytest.raises(DomainError):
        channel_step(init_state(coarse), coarse, 1.5)
    with pytest.raises(DomainError):
        advance(init_state(coarse), coarse, np.array([0.5, -0.1]))


def test_conservation_and_bleaching_monotone(coarse):
    g = loop_geometry(coarse)
    levels = build_tx_schedule(np.tile([3, 1], 20), ModulationConfig(4, 3.0, 2.0)).step_intensities(0.05)
    state = init_state(coarse)
    bleached = []
    for chunk in np.array_split(levels, 8):
        state, _ = advance(state, coarse, chunk, 1, g)
        assert state.conservation_error() < 1e-12
        bleached.append(state.total("bleached", g, coarse))
    assert np.all(np.diff(bleached) > 0)


def test_relaxation_only_half_life(testbed):
    cfg = ChannelSimConfig(testbed, sim_step=0.05, bleach_rate_rx=0.0, ex_active=False)
    g = loop_geometry(cfg)
    n = g.n_segments
    state = ChannelState(np.zeros(n), np.ones(n), np.zeros(n), 0.0, 1.0, 0.0)
    state, _ = advance(state, cfg, np.zeros(int(600 / 0.05)), 1, g)
    assert state.total("off", g, cfg) == pytest.approx(0.5, rel=1e-9)


def test_recirculation_of_marked_segment(testbed):
    # a tagged OFF slug returns to its start after the plug path plus reservoir mixing
    cfg = ChannelSimConfig(testbed, sim_step=0.05, bleach_rate_rx=0.0, ex_active=False)
    g = loop_geometry(cfg)
    n = g.n_segments
    off = np.zeros(n)
    off[0] = 1.0
    state = ChannelState(1.0 - off, off, np.zeros(n))
    steps = int(3 * loop_time(testbed) / 0.05)
    trace = []
    for _ in range(steps):
        trace.append(state.segment_off[0])
        state = channel_step(state, cfg, 0.0, g)
    trace = np.array(trace[1:])
    t = np.arange(1, steps) * 0.05
    first = t < 1.5 * loop_time(testbed)
    lam = math.log(2) / testbed.relaxation_half_life
    w = trace[first] * np.exp(lam * t[first])
    mean_return = np.sum(w * t[first]) / np.sum(w)
    assert abs(mean_return - loop_time(testbed)) < reservoir_residence_time(testbed)
    plug = (testbed.total_volume - testbed.reservoir_volume) / (testbed.volumetric_flux / 60)
    assert t[np.argmax(trace > 1e-3)] == pytest.approx(plug, abs=0.1)


def test_simulate_deterministic_and_normalized(testbed):
    cfg = ChannelSimConfig(testbed, rx_noise_sigma=0.01, rng_seed=4, lead_out=5.0)
    sched = build_tx_schedule([1, 0, 1], ModulationConfig(2, 3.0, 2.0))
    a = simulate(sched, cfg)
    b = simulate(sched, cfg)
    assert np.array_equal(a.trace.samples, b.trace.samples)
    assert a.trace.samples.max() == 1.0 and a.trace.samples.min() >= 0.0
    c = simulate(sched, replace(cfg, rng_seed=5))
    assert not np.array_equal(a.trace.samples, c.trace.samples)
    assert len(a.trace) == round((20 + 15 + 5) / 0.1)


def test_simulate_sample_interval_must_divide(testbed):
    cfg = ChannelSimConfig(testbed, sim_step=0.03)
    with pytest.raises(ConfigurationError):
        simulate(build_tx_schedule([1], ModulationConfig(2, 3.0, 2.0)), cfg)


def test_larger_symbol_deeper_dip(testbed):
    cfg = ChannelSimConfig(testbed, ex_active=True, lead_out=0.0)
    mod = ModulationConfig(4, 3.0, 27.0)
    depths = []
    for i in range(4):
        tr = simulate(build_tx_schedule([i], mod), cfg, normalize=False).trace
        depths.append(1.0 - tr.samples.min())
    assert np.all(np.diff(depths) > 0)
    assert depths[-1] == pytest.approx(0.5, abs=0.05)


def test_single_responses_shape(testbed):
    cfg = ChannelSimConfig(testbed, lead_in=10.0)
    mod = ModulationConfig(4, 3.0, 2.0)
    srs = single_responses(cfg, mod, count=3, spacing=30.0)
    assert len(srs) == 3
    assert all(len(s) == 300 for s in srs)
    assert srs[1].start_time == pytest.approx(40.0)
    with pytest.raises(DomainError):
        single_responses(cfg, mod, spacing=4.0)


def test_linear_decay():
    tr = Trace(1.0, np.ones(11))
    out = apply_linear_decay(tr, 0.2)
    assert out.samples[0] == 1.0 and out.samples[-1] == pytest.approx(0.8)
    assert np.allclose(np.diff(out.samples), -0.02)
    with pytest.raises(DomainError):
        apply_linear_decay(tr, 0.2, start=5.0, end=5.0)
