"""Complete elliptic integrals and the Jacobi ``dn`` function.

All routines take the elliptic *modulus* ``p`` (not the parameter ``m = p**2``).
K and E are evaluated with the arithmetic-geometric mean, ``dn`` with the
descending Landen (AGM) recursion.
"""

import math

import numpy as np

# K diverges at p = 1; the wave solver only approaches the soliton limit.
P_CAP = 1.0 - 1e-12

_AGM_TOL = 1e-16
_AGM_MAXITER = 64


def _check_modulus(p, upper_inclusive):
    p = float(p)
    if not math.isfinite(p) or p < 0.0:
        raise ValueError(f"elliptic modulus must be >= 0, got {p!r}")
    if p > 1.0 or (p == 1.0 and not upper_inclusive):
        raise ValueError(f"elliptic modulus out of range: {p!r}")
    return p


def _agm_sequences(p):
    """Return the lists (a_n, c_n) of the AGM started at (1, sqrt(1 - p^2))."""
    a, b = 1.0, math.sqrt((1.0 - p) * (1.0 + p))
    c = p
    a_seq, c_seq = [a], [c]
    for _ in range(_AGM_MAXITER):
        if abs(c) <= _AGM_TOL * a:
            break
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        a_seq.append(a)
        c_seq.append(c)
    return a_seq, c_seq


def elliptic_K(p):
    """Complete elliptic integral of the first kind K(p), 0 <= p < 1.

    Moduli within 1e-12 of one are clamped to ``P_CAP``.
    """
    p = _check_modulus(p, upper_inclusive=False)
    p = min(p, P_CAP)
    a_seq, _ = _agm_sequences(p)
    return math.pi / (2.0 * a_seq[-1])


def elliptic_E(p):
    """Complete elliptic integral of the second kind E(p), 0 <= p <= 1."""
    p = _check_modulus(p, upper_inclusive=True)
    if p == 1.0:
        return 1.0
    a_seq, c_seq = _agm_sequences(p)
    # E = K (1 - sum 2^(n-1) c_n^2)
    s = 0.5 * c_seq[0] ** 2
    for n in range(1, len(c_seq)):
        s += 2.0 ** (n - 1) * c_seq[n] ** 2
    return math.pi / (2.0 * a_seq[-1]) * (1.0 - s)


def elliptic_KE(p):
    """Both complete integrals from one AGM run, returned as ``(K, E)``."""
    p = _check_modulus(p, upper_inclusive=False)
    p = min(p, P_CAP)
    a_seq, c_seq = _agm_sequences(p)
    K = math.pi / (2.0 * a_seq[-1])
    s = 0.5 * c_seq[0] ** 2
    for n in range(1, len(c_seq)):
        s += 2.0 ** (n - 1) * c_seq[n] ** 2
    return K, K * (1.0 - s)


def jacobi_dn(u, p):
    """Jacobi delta amplitude dn(u; p) for real ``u`` (scalar or array).

    ``p = 1`` returns sech(u); ``p = 0`` returns ones.
    """
    p = _check_modulus(p, upper_inclusive=True)
    u_arr = np.asarray(u, dtype=float)
    if p == 0.0:
        out = np.ones_like(u_arr)
    elif p == 1.0:
        out = 1.0 / np.cosh(u_arr)
    else:
        a_seq, c_seq = _agm_sequences(p)
        n = len(a_seq) - 1
        phi = (2.0 ** n) * a_seq[n] * u_arr
        for j in range(n, 0, -1):
            phi = 0.5 * (phi + np.arcsin(c_seq[j] / a_seq[j] * np.sin(phi)))
        # dn^2 = cos^2(phi) + p'^2 sin^2(phi), free of cancellation
        pc2 = (1.0 - p) * (1.0 + p)
        out = np.sqrt(np.cos(phi) ** 2 + pc2 * np.sin(phi) ** 2)
    if np.ndim(u) == 0:
        return float(out)
    return out
