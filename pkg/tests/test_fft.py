import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samplecnn.fft import fft, n_onesided, rfft_magnitude
from oracles import brute_dft


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 9, 12, 27, 30, 81, 243, 729])
def test_fft_matches_brute_force(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    ref = brute_dft(x)
    assert np.max(np.abs(fft(x) - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_fft_batched_axis():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3, 27))
    out = fft(x)
    for i in range(4):
        for j in range(3):
            assert np.allclose(out[i, j], brute_dft(x[i, j]))


def test_onesided_bins():
    assert n_onesided(729) == 365
    assert n_onesided(8) == 5


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    X = fft(x)
    assert np.isclose(np.sum(np.abs(X) ** 2) / n, np.sum(x**2), rtol=1e-10, atol=1e-12)


def test_rfft_magnitude_of_cosine():
    n = 729
    x = np.cos(2 * np.pi * 27 * np.arange(n) / n)
    mag = rfft_magnitude(x)
    assert mag.shape == (365,)
    assert np.isclose(mag[27], n / 2)
    assert np.all(np.delete(mag, 27) < 1e-6 * mag[27])


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        fft(np.zeros(0))
