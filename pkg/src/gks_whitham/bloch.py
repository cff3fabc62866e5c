"""Bloch spectra of the linearization about a wave, and their low-frequency expansions.

Floquet exponents ``xi`` are given on the unit-period scale, ``xi in [-pi, pi]``.
Internally derivatives act on the 2*pi-normalized phase, where the shift is
``nu = i xi / (2 pi)``. Low-frequency coefficients are reported against this
``nu``: ``lambda(nu) = nu lambda0 + nu^2 lambda1 + ...`` with
``lambda0 = k Lambda`` and ``lambda1 = k lambda1_tilde``.
"""

import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from . import cnoidal, fourier
from .operators import build_operator, constrained_solve, kdv_corrections, GKS
from .profile import WaveParams, initial_profile, param_derivatives
from .whitham import DegenerateBranch, first_order

log = logging.getLogger(__name__)

DEFAULT_MODES = 64
MIN_OVERLAP = 0.9
# bounds on the largest |nu| used by the low-frequency fits, and the polynomial degree
FIT_NU_MAX = 4e-3
FIT_NU_MIN = 1e-3
FIT_DEGREE = 6
# fraction of the distance to the nearest non-critical eigenvalue the fit may span
FIT_GAP_FRACTION = 0.06


class BranchTrackingError(RuntimeError):
    """Adjacent eigenvectors of a tracked branch stopped overlapping."""


def xi_to_nu(xi):
    return 1j * np.asarray(xi, dtype=float) / (2.0 * np.pi)


def nu_to_xi(nu):
    return 2.0 * np.pi * np.imag(nu)


def hill_matrix(base, nu, n_modes=DEFAULT_MODES):
    """Fourier matrix of the nu-shifted linear operator on modes -n_modes..n_modes."""
    U, c = base.values, base.c
    k, d = base.params.k, base.params.delta
    N = U.size
    if N < 4 * n_modes + 1:
        U = fourier.resample(U, 4 * n_modes + 4)
        N = U.size
    ah = np.fft.fft(6.0 * U - c) / N
    m = np.arange(-n_modes, n_modes + 1)
    s = 1j * m + nu
    H = k * s[:, None] * ah[(m[:, None] - m[None, :]) % N]
    H[np.diag_indices_from(H)] += k**3 * s**3 + d * (k * k * s**2 + k**4 * s**4)
    return H


def _sorted(ev, vec=None):
    order = np.lexsort((ev.imag, -ev.real))
    return (ev[order], vec[:, order]) if vec is not None else ev[order]


def hill_eigenvalues(base, nu, n_modes=DEFAULT_MODES):
    """Eigenvalues of minus the shifted operator (Re > 0 is growth), sorted by real part descending."""
    return _sorted(np.linalg.eigvals(-hill_matrix(base, nu, n_modes)))


def hill_spectrum(base, xi, n_modes=DEFAULT_MODES):
    if n_modes < 32:
        raise ValueError("n_modes must be at least 32")
    return hill_eigenvalues(base, complex(xi_to_nu(xi)), n_modes)


def _near_zero(base, nu, count, n_modes):
    ev, vec = np.linalg.eig(-hill_matrix(base, nu, n_modes))
    idx = np.argsort(np.abs(ev))[:count]
    ev, vec = ev[idx], vec[:, idx]
    # label by lambda / nu, which tends to the low-frequency slope on both sides of 0
    ratio = ev / nu if nu else ev
    order = np.lexsort((ratio.imag, ratio.real))
    return ev[order], vec[:, order] / np.linalg.norm(vec[:, order], axis=0)


def _mac(a, b):
    return np.abs(a.conj().T @ b)


@dataclass(frozen=True, eq=False)
class BlochSweep:
    base: object
    xi_grid: np.ndarray
    eigenvalues: list
    n_modes: int
    branches: np.ndarray = field(default=None, repr=False)
    min_overlap: float = 1.0

    def to_csv(self, count=None):
        count = count or min(len(e) for e in self.eigenvalues)
        out = io.StringIO()
        cols = ["xi"] + [f"{p}_lambda_{j}" for j in range(1, count + 1) for p in ("re", "im")]
        out.write(",".join(cols) + "\n")
        for xi, ev in zip(self.xi_grid, self.eigenvalues):
            vals = [f"{xi:.12e}"]
            for z in ev[:count]:
                vals += [f"{z.real:.12e}", f"{z.imag:.12e}"]
            out.write(",".join(vals) + "\n")
        return out.getvalue()


def sweep(base, xi_grid, n_modes=DEFAULT_MODES, keep=None, track=0):
    """Spectra over ``xi_grid``; optionally track the ``track`` branches nearest 0.

    Tracking starts from the grid point of smallest nonzero |xi| on each side
    and proceeds outward, matching eigenvectors by maximal overlap (assignment
    over the candidates nearest 0).
    """
    xi_grid = np.asarray(sorted(xi_grid), dtype=float)
    spectra = [hill_spectrum(base, xi, n_modes) for xi in xi_grid]
    if keep:
        spectra = [s[:keep] for s in spectra]
    if not track:
        return BlochSweep(base, xi_grid, spectra, n_modes)
    branches = np.full((xi_grid.size, track), np.nan, dtype=complex)
    worst = 1.0
    for side in (xi_grid > 0, xi_grid < 0):
        idx = np.flatnonzero(side)
        idx = idx[np.argsort(np.abs(xi_grid[idx]))]
        prev = None
        for i in idx:
            nu = complex(xi_to_nu(xi_grid[i]))
            ev, vec = _near_zero(base, nu, track + 2, n_modes)
            if prev is None:
                ev0, vec0 = _near_zero(base, nu, track, n_modes)
                branches[i], prev = ev0, vec0
                continue
            mac = _mac(prev, vec)
            rows, cols = linear_sum_assignment(-mac)
            best = mac[rows, cols]
            worst = min(worst, float(best.min()))
            if best.min() < MIN_OVERLAP:
                raise BranchTrackingError(
                    f"eigenvector overlap {best.min():.3f} < {MIN_OVERLAP} at xi = {xi_grid[i]:.4g}"
                )
            branches[i] = ev[cols]
            prev = vec[:, cols]
    zero = np.flatnonzero(xi_grid == 0.0)
    for i in zero:
        branches[i] = 0.0
    return BlochSweep(base, xi_grid, spectra, n_modes, branches, worst)


def low_freq_grid(nu_max=FIT_NU_MAX, points=6):
    """Symmetric xi grid (unit-period scale) with |nu| up to ``nu_max``."""
    xi_max = 2.0 * np.pi * nu_max
    pos = xi_max * np.arange(1, points + 1) / points
    return np.concatenate([-pos[::-1], pos])


@dataclass(frozen=True)
class LowFreqFit:
    branch_id: int
    k: float
    lambda0: complex
    lambda1: complex
    fit_residual: float
    window_change: float

    @property
    def lambda0_tilde(self):
        return self.lambda0 / self.k

    @property
    def lambda1_tilde(self):
        return self.lambda1 / self.k


def _poly_fit(nu, lam, degree):
    V = np.column_stack([nu**j for j in range(1, degree + 1)])
    coef, *_ = np.linalg.lstsq(V, lam, rcond=None)
    res = lam - V @ coef
    return coef, float(np.linalg.norm(res) / max(np.linalg.norm(lam), 1e-300))


def _match(ref, cand):
    """Permutation of ``cand`` closest to ``ref`` (Hungarian on distance)."""
    _, cols = linear_sum_assignment(np.abs(ref[:, None] - cand[None, :]))
    return cols


def fit_window(base, branches=2, n_modes=DEFAULT_MODES):
    """Largest |nu| for the fits: a fixed fraction of the spectral gap over the critical slope."""
    at0 = np.sort(np.abs(np.linalg.eigvals(-hill_matrix(base, 0.0, n_modes))))
    gap = at0[branches]
    probe = FIT_NU_MIN * 1j
    slope = np.max(np.abs(_near_zero(base, probe, branches, n_modes)[0])) / FIT_NU_MIN
    return float(np.clip(FIT_GAP_FRACTION * gap / slope, FIT_NU_MIN, FIT_NU_MAX))


def low_freq_sweep(base, branches=2, n_modes=DEFAULT_MODES, nu_max=None, points=6):
    """Sweep of the ``branches`` eigenvalues nearest 0 on a symmetric small-xi grid.

    The critical eigenvectors are nearly parallel near xi = 0, so branches are
    followed through the slopes lambda / nu, which vary by O(nu) along a branch;
    eigenvector overlap between neighbouring points is required on top of that.
    """
    if nu_max is None:
        nu_max = fit_window(base, branches, n_modes)
    xi_grid = low_freq_grid(nu_max, points)
    vals = np.empty((xi_grid.size, branches), complex)
    ref = None
    worst = 1.0
    for side in (xi_grid > 0, xi_grid < 0):
        idx = np.flatnonzero(side)
        idx = idx[np.argsort(np.abs(xi_grid[idx]))]
        prev = None
        for i in idx:
            nu = complex(xi_to_nu(xi_grid[i]))
            ev, vec = _near_zero(base, nu, branches, n_modes)
            ratio = ev / nu
            if ref is None:
                ref = ratio
            cols = _match(ref, ratio)
            ev, vec, ref = ev[cols], vec[:, cols], ratio[cols]
            if prev is not None:
                mac = np.abs(np.sum(prev.conj() * vec, axis=0))
                worst = min(worst, float(mac.min()))
                if mac.min() < MIN_OVERLAP:
                    raise BranchTrackingError(
                        f"eigenvector overlap {mac.min():.3f} < {MIN_OVERLAP} at xi = {xi_grid[i]:.4g}"
                    )
            vals[i], prev = ev, vec
        ref = vals[idx[0]] / complex(xi_to_nu(xi_grid[idx[0]]))
    spectra = [hill_spectrum(base, xi, n_modes) for xi in xi_grid]
    return BlochSweep(base, xi_grid, spectra, n_modes, vals, worst)


def low_freq_fit(sweep_or_base, branches=2, n_modes=DEFAULT_MODES, degree=FIT_DEGREE):
    """Fit lambda(nu) = sum_j a_j nu^j on the tracked branches of a symmetric sweep.

    ``window_change`` is the relative change of lambda1 when the window is halved.
    """
    sw = sweep_or_base
    if not isinstance(sw, BlochSweep) or sw.branches is None or sw.branches.shape[1] != branches:
        base = sw.base if isinstance(sw, BlochSweep) else sw
        sw = low_freq_sweep(base, branches, n_modes)
    k = sw.base.params.k
    mask = sw.xi_grid != 0.0
    nu = xi_to_nu(sw.xi_grid[mask])
    if mask.sum() < 6:
        raise ValueError("low-frequency fit needs at least 6 nonzero xi points")
    fits = []
    half = np.abs(nu) <= 0.5 * np.max(np.abs(nu)) + 1e-15
    for b in range(branches):
        lam = sw.branches[mask, b]
        coef, res = _poly_fit(nu, lam, min(degree, nu.size - 1))
        change = np.nan
        if half.sum() >= 6:
            c2, _ = _poly_fit(nu[half], lam[half], min(degree, int(half.sum()) - 1))
            change = float(abs(c2[1] - coef[1]) / max(abs(coef[1]), 1e-300))
        fits.append(LowFreqFit(b, k, complex(coef[0]), complex(coef[1]), res, change))
    key = [(round(f.lambda0.real, 6), f.lambda0.imag) for f in fits]
    order = sorted(range(branches), key=key.__getitem__)
    return [replace(fits[i], branch_id=j) for j, i in enumerate(order)]


# ---------------------------------------------------------------------------
# low-frequency hierarchy at fixed dissipation


@dataclass(frozen=True, eq=False)
class PerturbationBranch:
    lambda0_tilde: complex
    lambda1_tilde: complex
    eigvec: np.ndarray
    mean_u2: complex


def _cderiv(u, m):
    return fourier.deriv(u.real, m) + 1j * fourier.deriv(u.imag, m) if np.iscomplexobj(u) else fourier.deriv(u, m)


def perturbation_dispersion_fixed_delta(base, derivs=None):
    """Low-frequency eigenvalue expansion by direct expansion of the Bloch problem.

    u0 = (k0/k) U', u1 = k0 dU/dk + M0, u2 solves L u2 = -(lambda0 u1 + L1 u1 +
    L2 u0) up to the lambda1 u0 forcing, whose response is the constant
    k0/(6k^2); lambda1 then follows from the mean of the next order.
    """
    d = derivs or param_derivatives(base)
    first = first_order(base, d)
    lam, vec = first.characteristics, first.eigenvectors
    if abs(lam[0] - lam[1]) < 1e-10 * max(1.0, abs(lam[0])):
        raise DegenerateBranch("characteristics coalesce (discriminant ~ 0)")
    U, c = base.values, base.c
    k, M, delta = base.params.k, base.params.M, base.params.delta
    a = 6.0 * U - c
    op = build_operator(GKS, base)
    Ux = fourier.deriv(U, 1)
    D = _cderiv

    def L1(u):
        return k * a * u + 3 * k**3 * D(u, 2) + delta * (2 * k * k * D(u, 1) + 4 * k**4 * D(u, 3))

    def L2(u):
        return 3 * k**3 * D(u, 1) + delta * (k * k * u + 6 * k**4 * D(u, 2))

    out = []
    for j in range(2):
        k0, M0 = vec[:, j]
        lam0 = k * lam[j]
        u0 = (k0 / k) * Ux
        u1 = k0 * d.dU_dk + M0
        rhs = -(lam0 * u1 + L1(u1) + L2(u0))
        u2 = constrained_solve(op, rhs)
        num = np.mean((lam0 + k * a) * u2) + delta * k * k * M0
        den = k0 * (lam0 + k * (6.0 * M - c)) / (6.0 * k * k) - M0
        lam1 = num / den
        out.append(PerturbationBranch(complex(lam[j]), complex(lam1 / k), vec[:, j], complex(np.mean(u2) - lam1 * k0 / (6 * k * k))))
    return out


# ---------------------------------------------------------------------------
# small-dissipation limit


@dataclass(frozen=True, eq=False)
class KdVLimitDispersion:
    wave: cnoidal.CnoidalWave
    deltabar: float
    nubar: complex
    path: str
    P: np.ndarray
    Q: np.ndarray
    c: float
    roots: np.ndarray
    eigvecs: np.ndarray

    @property
    def cubic(self):
        """Coefficients of det(L P + Q), highest degree first."""
        return np.linalg.det(self.P) * np.poly(self.roots)

    @property
    def lab_speeds(self):
        return self.c - self.roots

    @property
    def multiplicities(self):
        r = self.roots
        return [int(np.sum(np.abs(r - z) < 1e-8 * max(1.0, abs(z)))) for z in r]


KDV_LIMIT_GRID = 512


def _kdv_limit_data(wave, n):
    t = cnoidal.family_tangents(wave, n)
    corr = kdv_corrections(cnoidal.CnoidalWave(wave.p, wave.k, 0.0), n)
    return t, corr.U1


def _check_leading_solvability(t, U1, deltabar, nubar, tol=1e-8):
    """Both pairings of the order-one forcing must vanish for the translation mode."""
    k, U, c = t.wave.k, t.U, t.c
    D = fourier.deriv
    Ux = D(U, 1)
    rhs = (
        k * deltabar * D(6.0 * U1 * Ux, 1)
        + deltabar * (k * k * D(U, 3) + k**4 * D(U, 5))
        + nubar * (3 * k**3 * D(U, 3) + k * (6.0 * U - c) * Ux)
    )
    pairs = [np.mean(rhs), np.mean(U * rhs)]
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if max(abs(p) for p in pairs) > tol * scale:
        raise AssertionError(f"order-one solvability pairings do not vanish: {pairs}")
    return pairs


def _lin_system(t, U1, deltabar, nubar):
    """Rows of (L P + Q) v = 0 from the Bloch hierarchy, v = (k1, M1, p1)."""
    k, M, U, c = t.wave.k, t.wave.M, t.U, t.c
    D = fourier.deriv
    Ux, Uxx, Uxxxx = D(U, 1), D(U, 2), D(U, 4)
    W = [t.dU_dk, np.ones_like(U), t.dU_dp]
    I = lambda *fs: complex(np.mean(np.prod(fs, axis=0)))  # noqa: E731
    P = np.zeros((3, 3), complex)
    Q = np.zeros((3, 3), complex)
    P[0, 0] = 1.0
    Q[0] = [k * t.dc_dk, 6.0 * k, k * t.dc_dp]
    P[1, 1] = 1.0
    Q[1] = [6.0 * I(U, W[0]), 6.0 * M - c, 6.0 * I(U, W[2])]
    g_u1 = I(U, D(U1, 1))
    g_b = 6.0 * I(U1, U, Ux) + 3.0 * k * k * I(D(U1, 2), Ux)
    dU2, ddU2 = I(Ux, Ux), I(Uxx, Uxx)
    for j, w in enumerate(W):
        al = 1.0 if j == 0 else 0.0
        P[2, j] += nubar * k * I(U, w) + deltabar * al * g_u1
        E = -c * I(U, w) + 6.0 * I(U, U, w) + 3.0 * k * k * I(Uxx, w) - 3.0 * k * al * dU2
        A = k * k * I(Uxx, w) + k**4 * I(Uxxxx, w)
        B = -6.0 * k * I(Ux, U1, w) - al * (c * g_u1 + g_b)
        C = al * (-2.0 * k * dU2 + 4.0 * k**3 * ddU2)
        Q[2, j] += nubar * k * E + deltabar * (A + B + C)
    return P, Q


def _mod_lin_system(t, U1, deltabar, nubar):
    """Plane-wave form of the linearized three-equation modulation system.

    Built from differentials of the averaged fluxes: the co-moving system is
    nubar k (L A_T + A_X - c A_T) v + deltabar R v = 0.
    """
    k, M, U, c = t.wave.k, t.wave.M, t.U, t.c
    D = fourier.deriv
    Ux, Uxx = D(U, 1), D(U, 2)
    dU2, ddU2 = np.mean(Ux * Ux), np.mean(Uxx * Uxx)
    basis = np.eye(3)
    AT = np.zeros((3, 3))
    AX = np.zeros((3, 3))
    R = np.zeros((3, 3))
    g_u1 = np.mean(U * D(U1, 1))
    g_b = 6.0 * np.mean(U1 * U * Ux) + 3.0 * k * k * np.mean(D(U1, 2) * Ux)
    for j, e in enumerate(basis):
        al = e[0]
        w = t.dU(*e)
        wx, wxx = D(w, 1), D(w, 2)
        d_kc = c * al + k * t.dc(*e)
        d_half_U2 = np.mean(U * w)
        d_energy_flux = 6.0 * np.mean(U * U * w) - 3.0 * k * al * dU2 - 3.0 * k * k * np.mean(Ux * wx)
        d_source = 2 * k * al * dU2 + 2 * k * k * np.mean(Ux * wx) - 4 * k**3 * al * ddU2 - 2 * k**4 * np.mean(Uxx * wxx)
        AT[:, j] = [al, e[1], d_half_U2]
        AX[:, j] = [d_kc, 6.0 * np.mean(U * w), d_energy_flux]
        R[2, j] = (
            -0.5 * d_source
            - k * al * (dU2 - 2.0 * k * k * ddU2)
            - 6.0 * k * np.mean(Ux * U1 * w)
            - g_u1 * d_kc
            - al * g_b
        )
    P = nubar * k * AT
    Q = nubar * k * (AX - c * AT) + deltabar * R
    return P.astype(complex), Q.astype(complex)


def kdv_limit_dispersion(wave, deltabar, nubar=1j, path="lin", n=KDV_LIMIT_GRID):
    """Cubic low-frequency dispersion relation in the small-dissipation limit.

    The Floquet exponent and the dissipation are both O(eps): nu = eps nubar,
    delta = eps deltabar. ``path="lin"`` assembles the system from pairings of
    the Bloch hierarchy; ``path="mod_lin"`` from the linearized modulation
    equations. Roots are Lambda values: lambda ~ eps nubar k Lambda.
    """
    if path not in ("lin", "mod_lin"):
        raise ValueError(f"unknown path {path!r}")
    t, U1 = _kdv_limit_data(wave, n)
    _check_leading_solvability(t, U1, deltabar, nubar)
    build = _lin_system if path == "lin" else _mod_lin_system
    P, Q = build(t, U1, deltabar, nubar)
    ev, vec = scipy.linalg.eig(-Q, P)
    order = np.lexsort((ev.imag, ev.real))
    return KdVLimitDispersion(wave, deltabar, complex(nubar), path, P, Q, t.c, ev[order], vec[:, order])


def distinguished_limit_eigenvalues(wave, deltabar, nubar, eps, n_modes=48):
    """Hill eigenvalues nearest 0 at delta = eps deltabar, nu = eps nubar, scaled to Lambda units."""
    prof = initial_profile(WaveParams(wave.k, wave.M, eps * deltabar))
    nu = eps * nubar
    ev = hill_eigenvalues(prof, nu, n_modes)
    ev = ev[np.argsort(np.abs(ev))][:3]
    lam = ev / (nu * wave.k)
    return lam[np.lexsort((lam.imag, lam.real))]


def fit_record(fits):
    return [
        {
            "branch_id": f.branch_id,
            "lambda0": [f.lambda0.real, f.lambda0.imag],
            "lambda1": [f.lambda1.real, f.lambda1.imag],
            "lambda0_tilde": [f.lambda0_tilde.real, f.lambda0_tilde.imag],
            "lambda1_tilde": [f.lambda1_tilde.real, f.lambda1_tilde.imag],
            "fit_residual": f.fit_residual,
            "window_change": f.window_change,
        }
        for f in fits
    ]
