import numpy as np
import pytest

from wavescatter.fourier import GridFunction


@pytest.fixture
def small_grid():
    return GridFunction.from_samples(np.zeros(256, dtype=complex), 2 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def band_limited(rng, n, length, kmax=40, seed_offset=0):
    """Random band-limited grid function with zero mean."""
    c = np.zeros(n, dtype=complex)
    k = np.rint(np.fft.fftfreq(n) * n).astype(int)
    sel = (np.abs(k) >= 1) & (np.abs(k) <= kmax)
    c[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    return GridFunction.from_coefficients(c, length)


@pytest.fixture
def band_fn(rng):
    def make(n=256, length=2 * np.pi, kmax=40):
        return band_limited(rng, n, length, kmax)

    return make
