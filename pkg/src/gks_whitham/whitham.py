"""Modulation systems for slowly varying wave trains.

Three systems are assembled:

* the first-order (inviscid) system in (k, M) at fixed dissipation,
* its second-order viscous corrections, through the low-frequency Bloch
  cell problems,
* the three-equation system in (k, M, p) of the small-dissipation limit,
  together with its relaxed two-equation form.

``characteristics`` are the roots Lambda of the low-frequency dispersion
relation det(Lambda I + A) = 0, where A is the co-moving flux Jacobian. A
modulation with root Lambda travels at lab speed c - Lambda (co-moving speed
-Lambda), and the Bloch eigenvalue near the origin is lambda ~ nu k Lambda.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import cnoidal, fourier
from .operators import GKS, build_operator, constrained_solve
from .profile import WaveParams, param_derivatives

SCHEMA = "whitham-v1"


class DegenerateBranch(ValueError):
    """The two characteristics coalesce, so branch data are undefined."""


@dataclass(frozen=True, eq=False)
class FirstOrderWhitham:
    at: WaveParams
    c: float
    flux_jacobian: np.ndarray
    characteristics: np.ndarray
    discriminant: float
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def comoving_jacobian(self):
        return self.flux_jacobian - self.c * np.eye(2)

    @property
    def hyperbolic(self):
        return self.discriminant > 0.0

    def speeds(self, frame="comoving"):
        if frame == "comoving":
            return -self.characteristics
        if frame == "lab":
            return self.c - self.characteristics
        raise ValueError(f"unknown frame {frame!r}")


def _characteristics(A):
    """Roots of det(L I + A) = 0 and the null vectors of (L I + A), ordered by (Re, Im)."""
    ev, vec = np.linalg.eig(-A)
    order = np.lexsort((ev.imag, ev.real))
    return ev[order].astype(complex), vec[:, order].astype(complex)


def _quadratic_discriminant(c0, dc_dk, dq0_dk, k):
    return (c0 + k * dc_dk) ** 2 + 24.0 * k * dq0_dk


def first_order(profile, derivs=None):
    """First-order system at a converged dissipative profile."""
    d = derivs or param_derivatives(profile)
    k, M = profile.params.k, profile.params.M
    c = profile.c
    d3U2_dk = d.dqbar_dk + M * d.dc_dk
    J = np.array([[c + k * d.dc_dk, 6.0 * k], [d3U2_dk, 6.0 * M]])
    A = J - c * np.eye(2)
    lam, vec = _characteristics(A)
    disc = _quadratic_discriminant(c - 6.0 * M, d.dc_dk, d.dqbar0_dk, k)
    return FirstOrderWhitham(profile.params, c, J, lam, float(disc), vec)


def dispersion_quadratic(first, derivs):
    """Coefficients (1, b, c) of Lambda^2 + b Lambda + c in the zero-mean variables."""
    k = first.at.k
    c0 = first.c - 6.0 * first.at.M
    return np.array([1.0, k * derivs.dc_dk - c0, -(k * c0 * derivs.dc_dk + 6.0 * k * derivs.dqbar0_dk)])


@dataclass(frozen=True, eq=False)
class BranchViscosity:
    lambda0: complex
    lambda1: complex
    eigvec: np.ndarray
    correction: np.ndarray
    mean_fk: complex
    mean_fM: complex
    weighted_fk: complex
    weighted_fM: complex
    removed_mean_vM: complex


@dataclass(frozen=True, eq=False)
class SecondOrderWhitham:
    at: WaveParams
    first: FirstOrderWhitham
    branches: tuple
    laplacian_coeff: float

    @property
    def lambda1(self):
        return np.array([b.lambda1 for b in self.branches])

    @property
    def viscous_coeffs(self):
        return [(b.mean_fk, b.mean_fM, b.weighted_fk, b.weighted_fM) for b in self.branches]


def _left_null(Am):
    u, s, vh = np.linalg.svd(Am.T)
    return vh[-1].conj()


def second_order(profile, first=None, derivs=None):
    """Viscous corrections lambda1 per characteristic branch.

    For each root Lambda with null vector (k0, M0) of (Lambda I + A), the cell
    problems L f^k = k v^k and L f^M = k v^M are solved with <f, U'> = 0. The
    mean Lambda - c of the M-forcing is outside the range of L and is
    removed (and recorded). lambda1 then follows from the Fredholm
    alternative on (Lambda I + A)(k1, M1) = -lambda1 (k0, M0) + r.
    """
    d = derivs or param_derivatives(profile)
    first = first or first_order(profile, d)
    k, M, delta = profile.params.k, profile.params.M, profile.params.delta
    U, c = profile.values, profile.c
    D = fourier.deriv
    dkU = d.dU_dk
    op = build_operator(GKS, profile)
    A = first.comoving_jacobian
    lam, vec = first.characteristics, first.eigenvectors
    if abs(lam[0] - lam[1]) < 1e-10 * max(1.0, abs(lam[0])):
        raise DegenerateBranch("characteristics coalesce (discriminant ~ 0)")
    branches = []
    for j in range(2):
        L0 = lam[j]
        vk = (
            (L0 - c) * dkU
            + 6.0 * U * dkU
            - 6.0 * np.mean(U * dkU)
            + 3.0 * k * D(U + k * dkU, 2)
            + delta * (D(U, 1) + 6.0 * k * k * D(U, 3) + 2.0 * k * D(dkU, 1) + 4.0 * k**3 * D(dkU, 3))
        )
        vM = (L0 - c) * np.ones_like(U) + 6.0 * (U - M)
        removed = complex(np.mean(vM))
        vM = vM - removed
        fk = constrained_solve(op, k * vk)
        fM = constrained_solve(op, k * vM)
        mk, mM = np.mean(fk), np.mean(fM)
        wk, wM = np.mean(6.0 * U * (fk - mk)), np.mean(6.0 * U * (fM - mM))
        v = vec[:, j]
        k0, M0 = v
        r = np.array([-6.0 * k * (k0 * mk + M0 * mM), -delta * k * M0 + wk * k0 + wM * M0])
        Am = L0 * np.eye(2) + A
        w = _left_null(Am)
        lam1 = (w @ r) / (w @ v)
        rhs = -lam1 * v + r
        corr, *_ = np.linalg.lstsq(Am, rhs, rcond=None)
        corr = corr - (np.vdot(v, corr) / np.vdot(v, v)) * v
        branches.append(
            BranchViscosity(complex(L0), complex(lam1), v, corr, complex(mk), complex(mM), complex(wk), complex(wM), removed)
        )
    return SecondOrderWhitham(profile.params, first, tuple(branches), float(-delta * k))


# ---------------------------------------------------------------------------
# small-dissipation limit


@dataclass(frozen=True, eq=False)
class KdVModulation:
    state: tuple
    deltabar: float
    conserved: np.ndarray
    flux: np.ndarray
    source: np.ndarray
    jac_conserved: np.ndarray
    jac_flux: np.ndarray
    jac_source: np.ndarray
    c: float

    def speeds(self, frame="lab"):
        """Characteristic speeds of the homogeneous part, sorted ascending by (Re, Im)."""
        ev = scipy.linalg.eigvals(self.jac_flux, self.jac_conserved)
        ev = ev[np.lexsort((ev.imag, ev.real))]
        if frame == "lab":
            return ev
        if frame == "comoving":
            return ev - self.c
        raise ValueError(f"unknown frame {frame!r}")


KDV_GRID = 512
# Richardson-extrapolated central differences; smaller steps lose to roundoff near p = 1
FD_STEP = 1e-5


def _kdv_vectors(k, M, p, deltabar, n):
    wave = cnoidal.CnoidalWave(p, k, M)
    U = cnoidal.sample(wave, n)
    c, _ = cnoidal.cnoidal_speed_qbar(wave)
    d1, d2 = fourier.deriv(U, 1), fourier.deriv(U, 2)
    u2, u3 = np.mean(U * U), np.mean(U**3)
    du2, dd2 = np.mean(d1 * d1), np.mean(d2 * d2)
    conserved = np.array([k, M, 0.5 * u2])
    flux = np.array([k * c, 3.0 * u2, 2.0 * u3 - 1.5 * k * k * du2])
    source = np.array([0.0, 0.0, deltabar * k * k * (du2 - k * k * dd2)])
    return conserved, flux, source, c


def _richardson_jacobian(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1.0

        def central(step):
            return (fun(x + step * e) - fun(x - step * e)) / (2.0 * step)

        cols.append((4.0 * central(h / 2) - central(h)) / 3.0)
    return np.column_stack(cols)


def kdv_modulation(k, M, p, deltabar=0.0, n=KDV_GRID):
    """Three balance laws (waves, mass, energy) of the small-dissipation limit at (k, M, p)."""
    conserved, flux, source, c = _kdv_vectors(k, M, p, deltabar, n)
    x = np.array([k, M, p])
    h = min(FD_STEP, 0.5 * p, 0.5 * (1.0 - p))
    jc = _richardson_jacobian(lambda y: _kdv_vectors(*y, deltabar, n)[0], x, h)
    jf = _richardson_jacobian(lambda y: _kdv_vectors(*y, deltabar, n)[1], x, h)
    js = _richardson_jacobian(lambda y: _kdv_vectors(*y, deltabar, n)[2], x, h)
    return KdVModulation((k, M, p), deltabar, conserved, flux, source, jc, jf, js, c)


def _relaxed_flux(k, M, n):
    p = cnoidal.solve_p_for_k(k)
    _, flux, _, c = _kdv_vectors(k, M, p, 0.0, n)
    return flux[:2], c


def relaxed_limit(k, M=0.0, n=KDV_GRID, h=FD_STEP):
    """Two-equation system obtained by pinning p to the selection curve."""
    flux, c = _relaxed_flux(k, M, n)

    def central(step):
        fp, _ = _relaxed_flux(k + step, M, n)
        fm, _ = _relaxed_flux(k - step, M, n)
        return (fp - fm) / (2.0 * step)

    dF_dk = (4.0 * central(h / 2) - central(h)) / 3.0
    # M enters only through the Galilean shift: d(kc)/dM = 6k, d<3U^2>/dM = 6M
    J = np.array([[dF_dk[0], 6.0 * k], [dF_dk[1], 6.0 * M]])
    A = J - c * np.eye(2)
    lam, vec = _characteristics(A)
    b = np.trace(A)
    disc = float(b * b - 4.0 * np.linalg.det(A))
    return FirstOrderWhitham(WaveParams(k, M, 0.0), c, J, lam, disc, vec)


# ---------------------------------------------------------------------------
# export


def _cplx(z):
    return [float(np.real(z)), float(np.imag(z))]


def _matrix(a):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return [[_cplx(v) for v in row] for row in a]
    return [[float(v) for v in row] for row in a]


def to_record(system, **extra):
    """JSON-ready dictionary for any modulation system."""
    rec = {"schema": SCHEMA}
    if isinstance(system, FirstOrderWhitham):
        p = system.at
        rec.update(
            kind="first_order",
            state={"k": p.k, "M": p.M, "delta": p.delta},
            c=system.c,
            flux_jacobian=_matrix(system.flux_jacobian),
            comoving_jacobian=_matrix(system.comoving_jacobian),
            characteristics=[_cplx(z) for z in system.characteristics],
            lab_speeds=[_cplx(z) for z in system.speeds("lab")],
            discriminant=system.discriminant,
            hyperbolic=bool(system.hyperbolic),
        )
    elif isinstance(system, SecondOrderWhitham):
        rec.update(to_record(system.first))
        rec.update(
            kind="second_order",
            laplacian_coeff=system.laplacian_coeff,
            branches=[
                {
                    "lambda0": _cplx(b.lambda0),
                    "lambda1": _cplx(b.lambda1),
                    "eigvec": [_cplx(z) for z in b.eigvec],
                    "correction": [_cplx(z) for z in b.correction],
                    "mean_fk": _cplx(b.mean_fk),
                    "mean_fM": _cplx(b.mean_fM),
                    "weighted_fk": _cplx(b.weighted_fk),
                    "weighted_fM": _cplx(b.weighted_fM),
                    "removed_mean_vM": _cplx(b.removed_mean_vM),
                }
                for b in system.branches
            ],
        )
    elif isinstance(system, KdVModulation):
        k, M, p = system.state
        rec.update(
            kind="kdv_modulation",
            state={"k": k, "M": M, "p": p},
            deltabar=system.deltabar,
            c=system.c,
            conserved=[float(v) for v in system.conserved],
            flux=[float(v) for v in system.flux],
            source=[float(v) for v in system.source],
            jac_conserved=_matrix(system.jac_conserved),
            jac_flux=_matrix(system.jac_flux),
            jac_source=_matrix(system.jac_source),
            lab_speeds=[_cplx(z) for z in system.speeds("lab")],
        )
    else:
        raise TypeError(f"cannot export {type(system).__name__}")
    rec.update(extra)
    return rec


def to_json(system, **extra):
    return json.dumps(to_record(system, **extra), indent=2, sort_keys=True)
