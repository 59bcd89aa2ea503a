"""Mixed-radix Cooley-Tukey FFT.

Sizes are factored into primes and the transform recurses one prime at a
time (decimation in time), so 729 = 3**6 runs as six radix-3 passes. A prime
factor that is left over is handled by a direct DFT of that size, which keeps
every positive length supported.

All routines transform along the last axis and are vectorised over any
leading axes, which is how the STFT pushes a whole stack of frames through at
once.
"""

from functools import lru_cache

import numpy as np


def _smallest_factor(n):
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(p):
    k = np.arange(p)
    return np.exp(-2j * np.pi * np.outer(k, k) / p)


@lru_cache(maxsize=None)
def _twiddles(n, p):
    m = n // p
    return np.exp(-2j * np.pi * np.outer(np.arange(p), np.arange(m)) / n)


def _radix2(t):
    return np.stack([t[..., 0, :] + t[..., 1, :], t[..., 0, :] - t[..., 1, :]], axis=-2)


_W3 = np.exp(-2j * np.pi / 3)


def _radix3(t):
    a, b, c = t[..., 0, :], t[..., 1, :], t[..., 2, :]
    s = b + c
    d = (b - c) * (_W3 - _W3.conjugate()) / 2  # = -i*sqrt(3)/2 * (b - c)
    base = a - 0.5 * s
    return np.stack([a + s, base + d, base - d], axis=-2)


def _fft(x):
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_factor(n)
    if p == n:
        return x @ _dft_matrix(n).T
    m = n // p
    # x[..., k*p + r] -> sub[..., r, k]: the p decimated subsequences
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2)
    t = _fft(sub) * _twiddles(n, p)
    if p == 2:
        out = _radix2(t)
    elif p == 3:
        out = _radix3(t)
    else:
        out = np.einsum("qr,...rk->...qk", _dft_matrix(p), t)
    # out[..., q, k] is bin q*m + k
    return out.reshape(x.shape)


def fft(x):
    """Complex DFT of ``x`` along its last axis."""
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[-1] == 0:
        raise ValueError("fft of an empty axis")
    return _fft(x)


def n_onesided(n):
    """Number of non-redundant bins of a real length-``n`` transform."""
    return n // 2 + 1


def rfft_magnitude(x):
    """Magnitudes of the one-sided spectrum of real input along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    return np.abs(fft(x)[..., : n_onesided(x.shape[-1])])
