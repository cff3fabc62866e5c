"""Fourier collocation on a uniform grid over one wave period.

Grid functions are sampled at ``xi_j = j / N``, ``j = 0..N-1``.  Derivatives are
taken with respect to the 2*pi-periodic phase ``theta = 2*pi*xi``, so the
Fourier mode ``exp(2*pi*i*n*xi)`` is an eigenfunction of ``D`` with eigenvalue
``i*n``.  With this normalization the Hopf onset sits at wavenumber one.
"""

from functools import lru_cache

import numpy as np


def grid(n):
    return np.arange(n) / n


def wavenumbers(n):
    """Integer mode numbers in FFT order, Nyquist mode set to zero."""
    m = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0:
        m[n // 2] = 0.0
    return m


def _symbol(n, order, nu=0.0):
    m = np.fft.fftfreq(n, 1.0 / n)
    s = (1j * m + nu) ** order
    if n % 2 == 0 and order % 2 == 1 and nu == 0.0:
        s[n // 2] = 0.0
    return s


def deriv(f, order=1):
    """Spectral derivative of a real periodic grid function."""
    f = np.asarray(f, dtype=float)
    if order == 0:
        return f.copy()
    return np.fft.ifft(_symbol(f.shape[-1], order) * np.fft.fft(f)).real


@lru_cache(maxsize=32)
def _diff_matrix_cached(n, order):
    eye = np.eye(n)
    mat = np.fft.ifft(_symbol(n, order)[:, None] * np.fft.fft(eye, axis=0), axis=0).real
    mat.setflags(write=False)
    return mat


def diff_matrix(n, order=1):
    """Dense N x N differentiation matrix (read-only, cached)."""
    return _diff_matrix_cached(int(n), int(order))


def mean(f):
    return float(np.mean(f))


def inner(f, g):
    """Period average of f*g."""
    return float(np.mean(np.asarray(f) * np.asarray(g)))


def resample(f, n_new):
    """Trigonometric interpolation of a periodic grid function to ``n_new`` points."""
    f = np.asarray(f, dtype=float)
    n = f.size
    if n_new == n:
        return f.copy()
    fh = np.fft.rfft(f)
    if n % 2 == 0:
        # split the Nyquist coefficient symmetrically
        fh[-1] *= 0.5
    out = np.zeros(n_new // 2 + 1, dtype=complex)
    m = min(fh.size, out.size)
    out[:m] = fh[:m]
    if n_new % 2 == 0 and n_new < n:
        out[-1] = 2.0 * out[-1].real
    return np.fft.irfft(out, n_new) * (n_new / n)


def shift(f, s):
    """Return g with g(xi) = f(xi + s) on the unit-period grid."""
    f = np.asarray(f, dtype=float)
    n = f.size
    m = np.fft.fftfreq(n, 1.0 / n)
    fh = np.fft.fft(f)
    if n % 2 == 0:
        fh[n // 2] = 0.0
    return np.fft.ifft(fh * np.exp(2j * np.pi * m * s)).real


def align_shift(f, g):
    """Shift ``s`` such that ``shift(g, s)`` best matches ``f`` (max correlation)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = f.size
    m = np.fft.fftfreq(n, 1.0 / n)
    prod = np.conj(np.fft.fft(f)) * np.fft.fft(g)
    if n % 2 == 0:
        prod[n // 2] = 0.0
    corr = np.fft.ifft(prod).real
    s = int(np.argmax(corr)) / n
    w = 2j * np.pi * m
    for _ in range(50):
        ph = prod * np.exp(w * s)
        d1 = np.sum(w * ph).real
        d2 = np.sum(w * w * ph).real
        if d2 >= 0.0:
            break
        step = d1 / d2
        s -= step
        if abs(step) < 1e-15:
            break
    return (s + 0.5) % 1.0 - 0.5


def shifted_diff_matrix(n, order, nu):
    """Dense matrix of (D + nu)^order; complex unless nu is real."""
    D = diff_matrix(n, 1)
    if nu == 0:
        return diff_matrix(n, order)
    A = D + nu * np.eye(n)
    return np.linalg.matrix_power(A, order)
