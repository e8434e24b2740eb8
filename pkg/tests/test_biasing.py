"""Bias extraction, reconstruction and negation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yoas.biasing import (
    BiasSet,
    extract_bias,
    load_bias_set,
    negate,
    reconstruct,
    save_bias_set,
)
from yoas.errors import NotFound, ShapeError
from yoas.montage import RegionalDivision
from yoas.recording import Recording


def _rec(data, names=None):
    data = np.asarray(data, dtype=np.float32)
    names = names or tuple(f"c{i}" for i in range(data.shape[0]))
    return Recording(tuple(names), data, 250.0)


def _div(names):
    return RegionalDivision(id=1, reference=names[0], members=tuple(names))


def test_identical_channels_zero_bias():
    rec = _rec(np.tile(np.arange(5.0), (3, 1)))
    bs = extract_bias(rec, _div(rec.channel_names))
    for v in bs.entries.values():
        assert np.array_equal(v, np.zeros(5))


def test_direct_arithmetic():
    rec = _rec([[1.0, 2.0], [3.0, 5.0]])
    bs = extract_bias(rec, _div(("c0", "c1")))
    assert np.array_equal(bs.entries["c1"], [2.0, 3.0])


def test_round_trip_recovers_exactly():
    rng = np.random.default_rng(0)
    rec = _rec(rng.standard_normal((4, 100)) * 40)
    d = _div(rec.channel_names)
    bs = extract_bias(rec, d)
    ref = rec.channel(d.reference).astype(np.float64)
    for name, bias in bs.entries.items():
        back = reconstruct(bias, ref)
        assert np.array_equal(back, rec.channel(name).astype(np.float64))


def test_missing_member_raises():
    rec = _rec(np.zeros((2, 4)))
    with pytest.raises(NotFound):
        extract_bias(rec, _div(("c0", "nope")))


def test_reference_never_in_entries():
    with pytest.raises(ShapeError):
        BiasSet(division_id=1, reference_name="r", entries={"r": np.zeros(3)})


def test_reconstruct_zero_bias_is_reference():
    ref = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(reconstruct(np.zeros(3), ref), ref)


def test_reconstruct_length_mismatch():
    with pytest.raises(ShapeError):
        reconstruct(np.zeros(3), np.zeros(4))


def test_negate_values_and_involution():
    assert np.array_equal(negate(np.array([1.0, -2.0, 0.0])), [-1.0, 2.0, 0.0])
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(64)
        assert np.array_equal(negate(negate(x)), x)


def test_negation_flips_correlation_to_minus_one():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(500)
    rho = np.corrcoef(x, negate(x))[0, 1]
    assert rho == pytest.approx(-1.0, abs=1e-12)
    assert abs(1 - rho) == pytest.approx(2.0, abs=1e-12)


def test_linearity_of_extraction():
    rng = np.random.default_rng(3)
    data = rng.standard_normal((3, 50)).astype(np.float32)
    rec = _rec(data)
    scaled = _rec(data * 4)
    d = _div(rec.channel_names)
    b1 = extract_bias(rec, d)
    b2 = extract_bias(scaled, d)
    for name in b1.entries:
        assert np.allclose(b2.entries[name], 4.0 * b1.entries[name], rtol=1e-6)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(2, 6),
    st.integers(2, 40),
    st.integers(0, 2**31 - 1),
)
def test_round_trip_property(n_channels, n_samples, seed):
    rng = np.random.default_rng(seed)
    rec = _rec(rng.standard_normal((n_channels, n_samples)) * 100)
    d = _div(rec.channel_names)
    bs = extract_bias(rec, d)
    ref = rec.channel(d.reference).astype(np.float64)
    for name, bias in bs.entries.items():
        back = reconstruct(bias, ref)
        target = rec.channel(name).astype(np.float64)
        scale = max(np.abs(target).max(), 1.0)
        assert np.abs(back - target).max() <= 1e-6 * scale


def test_bias_set_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    rec = _rec(rng.standard_normal((3, 64)) * 10)
    bs = extract_bias(rec, _div(rec.channel_names))
    p = tmp_path / "bias.yeeg"
    save_bias_set(bs, p, rate=250.0)
    back = load_bias_set(p)
    assert back.division_id == bs.division_id
    assert back.reference_name == bs.reference_name
    assert back.channels() == bs.channels()
    for name in bs.entries:
        assert np.allclose(back.entries[name], bs.entries[name], atol=1e-5)
