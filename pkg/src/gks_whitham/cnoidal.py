"""Closed-form cnoidal waves of the KdV limit and the small-dissipation selection curve.

Profiles are written on the unit-period variable ``xi`` with derivatives taken in
the 2*pi-normalized phase (see :mod:`gks_whitham.fourier`), so the zero-mean,
non-dissipative profile equation reads ``3U^2 - cU + k^2 U'' = qbar``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import fourier
from .special import P_CAP, elliptic_KE, jacobi_dn

# Below this modulus 6N/(7D) is evaluated from its Taylor series (0/0 at p = 0).
P_SERIES = 0.35
# Taylor coefficients of 6N/(7D) in powers p^4, p^6, ..., p^28, times -pi^2.
_ND_SERIES = (
    9 / 128,
    9 / 128,
    1035 / 16384,
    459 / 8192,
    209565 / 4194304,
    188631 / 4194304,
    10970703 / 268435456,
    2514159 / 67108864,
    1189025937 / 34359738368,
    1105566165 / 34359738368,
    529324585515 / 17592186044416,
    248714850177 / 8796093022208,
    240367431403035 / 9007199254740992,
)


class SelectionError(ValueError):
    """Wavenumber outside the range reached by the selection curve."""


@dataclass(frozen=True)
class CnoidalWave:
    p: float
    k: float
    M: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"modulus p must lie in (0, 1), got {self.p}")
        if not self.k > 0.0:
            raise ValueError(f"wavenumber k must be positive, got {self.k}")


@dataclass(frozen=True)
class AveragedQuantities:
    mean_U: float
    mean_U2: float
    mean_U3: float
    mean_dU2: float
    mean_d2U2: float


def _amplitude(p, k):
    K, E = elliptic_KE(p)
    return 2.0 * K * K * k * k / math.pi**2, K, E


def cnoidal_eval(wave, xi):
    """Profile value at unit-period phase ``xi`` (any real, periodic extension).

    The maximum sits at ``xi = 0``.
    """
    A, K, E = _amplitude(wave.p, wave.k)
    xi = np.mod(np.asarray(xi, dtype=float), 1.0)
    dn = jacobi_dn(2.0 * K * xi, wave.p)
    return wave.M + A * (np.asarray(dn) ** 2 - E / K)


def sample(wave, n):
    """Profile sampled on the ``n``-point unit-period grid."""
    return cnoidal_eval(wave, fourier.grid(n))


def zero_mean_speed(p, k):
    """Speed of the zero-mean cnoidal wave."""
    K, E = elliptic_KE(p)
    return 4.0 * K * K * k * k / math.pi**2 * (2.0 - p * p - 3.0 * E / K)


def zero_mean_qbar(p, k):
    K, E = elliptic_KE(p)
    r = E / K
    return 4.0 * (K * k / math.pi) ** 4 * (-3.0 * r * r + 2.0 * (2.0 - p * p) * r + p * p - 1.0)


def cnoidal_speed_qbar(wave):
    """Return ``(c, qbar)`` for the wave with mean ``M``.

    ``c = 6M + c0`` and ``qbar = q0 - c M + 3 M^2`` where (c0, q0) are the
    zero-mean values.
    """
    c = 6.0 * wave.M + zero_mean_speed(wave.p, wave.k)
    q = zero_mean_qbar(wave.p, wave.k) - c * wave.M + 3.0 * wave.M**2
    return c, q


def profile_residual(wave, n=512):
    """Max-norm residual of ``3U^2 - cU + k^2 U'' - qbar`` on an ``n``-point grid."""
    u = sample(wave, n)
    c, q = cnoidal_speed_qbar(wave)
    r = 3.0 * u * u - c * u + wave.k**2 * fourier.deriv(u, 2) - q
    return float(np.max(np.abs(r)))


def _nd_ratio(p, K, E):
    p2 = p * p
    if p < P_SERIES:
        s = 0.0
        for j, a in enumerate(_ND_SERIES):
            s += a * p2 ** (j + 2)
        return -math.pi**2 * s
    p4, p6 = p2 * p2, p2 * p2 * p2
    N = (
        7.0 * (1.0 - p2 + p4) * E * E
        - (10.0 - 15.0 * p2 + 13.0 * p4 - 4.0 * p6) * E * K
        + (3.0 - 6.0 * p2 + 5.0 * p4 - 2.0 * p6) * K * K
    )
    D = 2.0 * (1.0 - p2 + p4) * E / K - (2.0 - 3.0 * p2 + p4)
    return 6.0 * N / (7.0 * D)


def selection_F(p):
    """Selection function F(p) = 3EK + (p^2 - 2)K^2 - 6N/(7D)."""
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"selection_F needs 0 < p < 1, got {p}")
    K, E = elliptic_KE(p)
    return 3.0 * E * K + (p * p - 2.0) * K * K - _nd_ratio(p, K, E)


def selection_k(p):
    """Wavenumber selected at modulus ``p``.

    F is stated for a unit-period phase; in the 2*pi-normalized phase used here
    the criterion reads ``1/k^2 = 4 F(p) / pi^2``.
    """
    return math.pi / (2.0 * math.sqrt(selection_F(p)))


def selection_residual(p, k):
    return 1.0 / (k * k) - 4.0 * selection_F(p) / math.pi**2


def solve_p_for_k(k):
    """Modulus on the selection curve for wavenumber ``k`` (0 < k < 1)."""
    k = float(k)
    lo, hi = 1e-8, P_CAP
    if not (0.0 < k < 1.0):
        raise SelectionError(f"no selected wave for k = {k}: need 0 < k < 1")
    f_lo, f_hi = selection_residual(lo, k), selection_residual(hi, k)
    if f_lo * f_hi > 0.0:
        raise SelectionError(
            f"k = {k} outside selection range [{selection_k(hi):.6g}, {selection_k(lo):.6g}]"
        )
    return brentq(selection_residual, lo, hi, args=(k,), xtol=1e-15, rtol=1e-15, maxiter=200)


def _averages_on_grid(wave, n):
    u = sample(wave, n)
    d1 = fourier.deriv(u, 1)
    d2 = fourier.deriv(u, 2)
    return np.array([u.mean(), (u * u).mean(), (u**3).mean(), (d1 * d1).mean(), (d2 * d2).mean()])


def averaged_quantities(wave, tol=1e-10, n0=64, n_max=1 << 14):
    """Period averages <U>, <U^2>, <U^3>, <U'^2>, <U''^2> by grid doubling."""
    n = n0
    prev = _averages_on_grid(wave, n)
    while True:
        n *= 2
        cur = _averages_on_grid(wave, n)
        if np.max(np.abs(cur - prev)) < tol * max(1.0, np.max(np.abs(cur))) or n >= n_max:
            break
        prev = cur
    return AveragedQuantities(*map(float, cur))


def selection_pairing(wave, n=512):
    """<U'^2> - k^2 <U''^2>; vanishes exactly on the selection curve."""
    u = sample(wave, n)
    d1 = fourier.deriv(u, 1)
    d2 = fourier.deriv(u, 2)
    return float(np.mean(d1 * d1) - wave.k**2 * np.mean(d2 * d2))


def dp_profile(wave, n, h=2e-3):
    """d/dp of the sampled profile at fixed (k, M), Richardson-extrapolated differences."""
    def central(step):
        up = sample(CnoidalWave(wave.p + step, wave.k, wave.M), n)
        um = sample(CnoidalWave(wave.p - step, wave.k, wave.M), n)
        return (up - um) / (2.0 * step)

    # the profile varies on the scale 1 - p near the solitary limit
    h = min(h, 0.25 * wave.p, 0.05 * (1.0 - wave.p))
    d1, d2, d3 = central(h), central(h / 2), central(h / 4)
    r1 = (4.0 * d2 - d1) / 3.0
    r2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * r2 - r1) / 15.0


def dp_speed(p, k):
    """d c0 / dp at fixed k from the closed form."""
    K, E = elliptic_KE(p)
    q = 1.0 - p * p
    dK = (E - q * K) / (p * q)
    dE = (E - K) / p
    s = 4.0 * k * k / math.pi**2
    # c0 = s (K^2 (2 - p^2) - 3 E K)
    return s * (2.0 * K * dK * (2.0 - p * p) - 2.0 * p * K * K - 3.0 * (dE * K + E * dK))


@dataclass(frozen=True, eq=False)
class FamilyTangents:
    """Samples of a cnoidal wave and its derivatives along the (k, M, p) family."""

    wave: CnoidalWave
    U: np.ndarray
    c: float
    dU_dk: np.ndarray
    dU_dp: np.ndarray
    dc_dk: float
    dc_dp: float

    def dU(self, dk, dM, dp):
        return dk * self.dU_dk + dM + dp * self.dU_dp

    def dc(self, dk, dM, dp):
        return dk * self.dc_dk + 6.0 * dM + dp * self.dc_dp


def family_tangents(wave, n=512):
    """Tangent vectors of the family at ``wave``.

    The zero-mean profile scales as k^2 at fixed p, so the k-derivatives are
    exact; p-derivatives use Richardson-extrapolated differences.
    """
    U = sample(wave, n)
    c, _ = cnoidal_speed_qbar(wave)
    c0 = c - 6.0 * wave.M
    return FamilyTangents(
        wave=wave,
        U=U,
        c=c,
        dU_dk=2.0 * (U - wave.M) / wave.k,
        dU_dp=dp_profile(wave, n),
        dc_dk=2.0 * c0 / wave.k,
        dc_dp=dp_speed(wave.p, wave.k),
    )
