import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from mcloop.detect import ThresholdSet, detect_symbol, init_thresholds, update_thresholds
from mcloop.metrics import amed, ber
from mcloop.model import gray_code, gray_decode, gray_encode, gray_inverse
from mcloop.sync import build_blind_corr_filter, build_blind_diff_filter, gaussian_cdf, gaussian_inv_cdf

from oracles import brute_amed, brute_ber

orders = st.sampled_from([2, 4, 8, 16])


@given(st.integers(1, 8))
def test_gray_adjacent_codewords_differ_in_one_bit(bits):
    M = 2 ** bits
    g = gray_code(np.arange(M))
    assert np.all([bin(int(x)).count("1") == 1 for x in g[1:] ^ g[:-1]])
    assert np.array_equal(gray_inverse(g), np.arange(M))


@given(orders, st.data())
def test_gray_bits_round_trip(M, data):
    eta = M.bit_length() - 1
    n = data.draw(st.integers(1, 20))
    bits = data.draw(st.lists(st.integers(0, 1), min_size=n * eta, max_size=n * eta))
    assert gray_decode(gray_encode(bits, M), M).tolist() == bits


@st.composite
def symbol_pairs(draw):
    M = draw(orders)
    n = draw(st.integers(1, 40))
    P = draw(st.integers(0, n - 1))
    a = draw(st.lists(st.integers(0, M - 1), min_size=n, max_size=n))
    b = draw(st.lists(st.integers(0, M - 1), min_size=n, max_size=n))
    return M, P, a, b


@given(symbol_pairs())
def test_ber_matches_brute_force_and_is_symmetric(case):
    M, P, a, b = case
    value = ber(a, b, M, P)
    assert value == pytest.approx(brute_ber(a, b, M, P), abs=1e-12)
    assert value == ber(b, a, M, P)
    assert 0.0 <= value <= 1.0
    assert ber(a, a, M, P) == 0.0


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(st.lists(finite, min_size=1, max_size=6), min_size=2, max_size=8))
def test_amed_matches_brute_force(groups):
    assert amed(groups) == pytest.approx(brute_amed(groups), abs=1e-9)
    assert amed(groups[::-1]) == pytest.approx(amed(groups), abs=1e-9)


@st.composite
def labelled_samples(draw):
    M = draw(st.sampled_from([2, 4, 8]))
    means = sorted(draw(st.lists(st.floats(-10, 10), min_size=M, max_size=M, unique=True)))
    assume(min(np.diff(means)) > 1e-3)
    reps = draw(st.integers(1, 4))
    labels = np.tile(np.arange(M), reps)
    noise = draw(st.lists(st.floats(-1e-4, 1e-4), min_size=labels.size, max_size=labels.size))
    samples = np.asarray(means)[labels] + np.asarray(noise)
    return M, samples, labels


@given(labelled_samples(), st.floats(-100, 100), st.floats(0.01, 100))
def test_thresholds_ascending_and_equivariant(case, shift, scale):
    M, s, lab = case
    xi = init_thresholds(s, lab, M)
    assert np.all(np.diff(xi.values) > 0)
    moved = init_thresholds(s * scale + shift, lab, M)
    assert np.allclose(moved.values, np.asarray(xi.values) * scale + shift, rtol=1e-9, atol=1e-9)
    for d, i in zip(s, lab):
        assert detect_symbol(d * scale + shift, moved) == detect_symbol(d, xi)


@given(labelled_samples(), st.data())
def test_update_keeps_order(case, data):
    M, s, lab = case
    xi = init_thresholds(s, lab, M)
    keep = np.asarray(data.draw(st.lists(st.booleans(), min_size=s.size, max_size=s.size)))
    new = update_thresholds(xi, s[keep], lab[keep], M)
    assert new.set_index == xi.set_index + 1
    assert np.all(np.diff(new.values) > 0)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=7, unique=True), st.floats(-10, 10))
def test_detect_symbol_monotone(values, d):
    xi = ThresholdSet(0, sorted(values))
    i = detect_symbol(d, xi)
    assert i == sum(v <= d for v in xi.values)
    assert detect_symbol(d + 1.0, xi) >= i


@given(st.floats(1e-300, 1 - 1e-16))
def test_inv_cdf_matches_reference_and_round_trips(p):
    z = gaussian_inv_cdf(p)
    assert z == pytest.approx(float(ndtri(p)), rel=1e-9, abs=1e-9)
    assert gaussian_cdf(z) == pytest.approx(p, rel=1e-7)


@given(st.floats(1e-12, 0.5), st.floats(1e-12, 0.5))
def test_inv_cdf_monotone(p, q):
    assume(p < q)
    assert gaussian_inv_cdf(p) <= gaussian_inv_cdf(q)


@given(st.floats(-5, 5), st.floats(1e-4, 100), st.floats(1e-6, 1 - 1e-6))
def test_inv_cdf_location_scale(mean, var, p):
    assert gaussian_inv_cdf(p, mean, var) == pytest.approx(mean + np.sqrt(var) * gaussian_inv_cdf(p), abs=1e-9)


timings = st.tuples(st.integers(1, 40), st.integers(1, 40)).map(lambda ab: (ab[0] / 4, (ab[0] + ab[1]) / 4))


@settings(max_examples=50)
@given(timings, st.sampled_from([0.01, 0.05, 0.1]))
def test_blind_filters_shape(tt, dt):
    T_I, T_S = tt
    corr = build_blind_corr_filter(T_I, T_S, dt).coefficients
    diff = build_blind_diff_filter(T_I, T_S, dt).coefficients
    assert corr[0] == 0.0 and corr.max() == pytest.approx(T_I / 2, abs=dt)
    assert np.all(corr >= 0)
    # continuous: neighbouring samples differ by at most the steepest slope times dt
    slope = max(1.0, T_I / (T_S - T_I))
    assert np.max(np.abs(np.diff(corr))) <= slope * dt * (1 + 1e-9)
    assert diff[0] == -1.0 and np.all(diff >= -1.0) and np.all(diff <= 1.0)
    k = int(np.floor(T_I / dt + 1e-9))
    assert np.all(np.diff(diff[:k + 1]) > 0)
    assert np.all(np.diff(diff[k + 1:]) < 0)
