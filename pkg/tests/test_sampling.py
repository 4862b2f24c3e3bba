import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latticewalk import sampling


def test_metadata_names_generator_and_transform():
    meta = sampling.rng_metadata(42)
    assert meta == {"rng": "pcg64-xsl-rr-128/64", "rng_version": "1", "gaussian": "box-muller-pairs-v1", "seed": 42}


def test_uniform_uses_top_53_bits():
    raw = np.random.PCG64(7).random_raw(5)
    expected = [(int(r) >> 11) / 2.0**53 for r in raw]
    assert sampling.uniform53(7, 5).tolist() == expected


def test_box_muller_pairs_by_hand():
    u = sampling.uniform53(3, 4)
    z = sampling.standard_normal(3, 4)
    for k in range(2):
        r = np.sqrt(-2 * np.log1p(-u[2 * k]))
        assert z[2 * k] == r * np.cos(2 * np.pi * u[2 * k + 1])
        assert z[2 * k + 1] == r * np.sin(2 * np.pi * u[2 * k + 1])


def test_odd_count_is_prefix_of_even():
    assert np.array_equal(sampling.standard_normal(11, 7), sampling.standard_normal(11, 8)[:7])


def test_gaussian_moments():
    z = sampling.gaussian(2024, 200_000, 0.4, np.pi / 2)
    assert z.mean() == pytest.approx(0.4, abs=0.01)
    assert z.var() == pytest.approx(np.pi / 2, rel=0.02)


def test_seed_range_checked():
    with pytest.raises(ValueError):
        sampling.uniform53(-1, 3)
    with pytest.raises(ValueError):
        sampling.uniform53(2**64, 3)
    with pytest.raises(ValueError):
        sampling.gaussian(1, 3, 0.0, -1.0)


@settings(max_examples=25)
@given(st.integers(0, 2**64 - 1))
def test_same_seed_same_stream(seed):
    assert np.array_equal(sampling.gaussian(seed, 9, 0, 1), sampling.gaussian(seed, 9, 0, 1))
