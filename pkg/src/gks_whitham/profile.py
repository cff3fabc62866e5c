"""Periodic traveling waves of the gKS equation at fixed dissipation.

A wave of wavenumber k, mean M and dissipation delta solves, in the unit-period
variable with 2*pi-normalized derivatives,

    3U^2 - cU + k^2 U'' + delta (k U' + k^3 U''') = qbar,    <U> = M.

``qbar`` is stored in this once-integrated and k-divided form, so that
``<3U^2> = qbar + c M``.
"""

import io
import logging
import math
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import cnoidal, fourier

log = logging.getLogger(__name__)

DEFAULT_N = 256
NEWTON_TOL = 1e-12
# residual 2-norm below which a non-contracting Newton step counts as converged
FLOOR = 1e-9
DELTA_INIT = 1e-3
MAGIC = b"GKSPROF1"


class ConvergenceError(RuntimeError):
    """Newton iteration or continuation failed to converge."""


class ContinuationStall(ConvergenceError):
    """Continuation step fell below the floor."""


@dataclass(frozen=True)
class WaveParams:
    k: float
    M: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.k <= 1.0):
            raise ValueError(f"wavenumber must satisfy 0 < k <= 1, got {self.k}")
        if self.delta < 0.0:
            raise ValueError(f"dissipation must be non-negative, got {self.delta}")


@dataclass(frozen=True, eq=False)
class WaveProfile:
    params: WaveParams
    c: float
    qbar: float
    values: np.ndarray
    residual_norm: float = math.nan
    iterations: int = 0

    @property
    def grid_size(self):
        return self.values.size

    @property
    def Omega(self):
        return -self.params.k * self.c

    @property
    def qbar0(self):
        """Integration constant of the zero-mean profile U - M."""
        M = self.params.M
        return self.qbar + self.c * M - 3.0 * M * M

    @property
    def xi(self):
        return fourier.grid(self.grid_size)

    def derivative(self, order=1):
        return fourier.deriv(self.values, order)


def profile_residual(U, c, qbar, params):
    """Pointwise residual of the profile equation, derivatives by FFT."""
    k, d = params.k, params.delta
    r = 3.0 * U * U - c * U + k * k * fourier.deriv(U, 2) - qbar
    if d:
        r = r + d * (k * fourier.deriv(U, 1) + k**3 * fourier.deriv(U, 3))
    return r


def _equations(U, c, qbar, params, D1, D2, D3):
    k, d = params.k, params.delta
    G = 3.0 * U * U - c * U + k * k * (D2 @ U) + d * (k * (D1 @ U) + k**3 * (D3 @ U)) - qbar
    lin = k * k * D2 + d * (k * D1 + k**3 * D3)
    return G, lin


def _newton(U, c, qbar, params, phase_ref, max_iter, tol, extra=None):
    """Newton with backtracking on the bordered collocation system.

    ``extra`` optionally supplies (dG_ds, tangent_row_fn, s) for pseudo-arclength
    solves; see :func:`continue_family`.
    """
    n = U.size
    D1, D2, D3 = (fourier.diff_matrix(n, m) for m in (1, 2, 3))
    w = D1 @ phase_ref
    w = w / np.linalg.norm(w)
    M = params.M

    def system(U, c, qbar, params):
        G, lin = _equations(U, c, qbar, params, D1, D2, D3)
        F = np.concatenate([G, [U.mean() - M, w @ (U - phase_ref) / n]])
        return F, lin

    F, lin = system(U, c, qbar, params)
    for it in range(1, max_iter + 1):
        J = np.zeros((n + 2, n + 2))
        J[:n, :n] = lin
        J[np.arange(n), np.arange(n)] += 6.0 * U - c
        J[:n, n] = -U
        J[:n, n + 1] = -1.0
        J[n, :n] = 1.0 / n
        J[n + 1, :n] = w / n
        try:
            step = lu_solve(lu_factor(J, check_finite=True), -F)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}") from exc
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("singular Jacobian (non-finite Newton step)")
        f0 = np.linalg.norm(F)
        t = 1.0
        while True:
            U1, c1, q1 = U + t * step[:n], c + t * step[n], qbar + t * step[n + 1]
            F1, lin1 = system(U1, c1, q1, params)
            if np.linalg.norm(F1) < (1.0 - 1e-4 * t) * f0 or t < 1e-3 or f0 < 1e-9:
                break
            t *= 0.5
        U, c, qbar, F, lin = U1, c1, q1, F1, lin1
        size = np.max(np.abs(t * step)) / max(1.0, np.max(np.abs(U)))
        f1 = np.linalg.norm(F)
        log.debug("newton %d: |F| %.3e step %.3e t %.3g", it, f1, size, t)
        if size < tol:
            return U, c, qbar, it
        # Near delta = 0 the Jacobian has condition ~ 1/delta, so updates stall
        # at a roundoff floor above tol; accept once the residual stops shrinking.
        if f1 < FLOOR and f1 > 0.25 * f0:
            return U, c, qbar, it
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (last step {size:.3e})")


def solve_profile(init, params=None, max_iter=50, tol=NEWTON_TOL, phase_ref=None):
    """Converge a profile for ``params`` starting from the guess ``init``.

    The guess supplies values, c and qbar; the translation mode is fixed by
    ``<U_ref', U - U_ref> = 0`` with ``U_ref`` the guess itself unless given.
    """
    params = params or init.params
    U0 = np.array(init.values, dtype=float)
    ref = U0 if phase_ref is None else np.asarray(phase_ref, dtype=float)
    if np.max(np.abs(ref - ref.mean())) < 1e-14:
        raise ConvergenceError("singular Jacobian: phase reference is flat")
    U0 = U0 + (params.M - U0.mean())
    c0 = init.c + 6.0 * (params.M - init.params.M)
    q0 = float(np.mean(3.0 * U0 * U0 - c0 * U0 + params.k**2 * fourier.deriv(U0, 2)))
    U, c, qbar, it = _newton(U0, c0, q0, params, ref, max_iter, tol)
    res = float(np.max(np.abs(profile_residual(U, c, qbar, params))))
    return WaveProfile(params, float(c), float(qbar), U, res, it)


def cnoidal_guess(params, n=DEFAULT_N):
    """Selected cnoidal wave for (k, M) as an unconverged profile."""
    p = cnoidal.solve_p_for_k(params.k)
    wave = cnoidal.CnoidalWave(p, params.k, params.M)
    c, q = cnoidal.cnoidal_speed_qbar(wave)
    return WaveProfile(params, c, q, cnoidal.sample(wave, n))


def initial_profile(params, n=DEFAULT_N, steps=8):
    """Solve from the cnoidal start at small dissipation, continuing in delta if needed."""
    start_delta = min(params.delta, DELTA_INIT) if params.delta > 0 else 0.0
    first = replace(params, delta=start_delta)
    prof = solve_profile(cnoidal_guess(first, n), first)
    if params.delta == start_delta:
        return prof
    return continue_family(prof, params, steps)[-1]


def hopf_characteristic_roots(a, delta):
    """Roots of delta (l^3 + l) + l^2 + a = 0, sorted by real part (descending)."""
    if delta <= 0:
        raise ValueError("hopf_characteristic_roots needs delta > 0")
    r = np.roots([delta, 1.0, delta, a])
    return r[np.argsort(-r.real, kind="stable")]


class FamilyPath(list):
    """Profiles along a continuation path; ``folds`` lists indices where the path turned."""

    def __init__(self, items=(), folds=()):
        super().__init__(items)
        self.folds = list(folds)


def _line_params(start, target, s):
    k = start.k + s * (target.k - start.k)
    d = start.delta + s * (target.delta - start.delta)
    return WaveParams(k, target.M, max(d, 0.0))


def _arclength_newton(X, params_of, dparams, X_pred, tangent, ref, max_iter=25, tol=NEWTON_TOL):
    """Newton on (U, c, qbar, s) with the pseudo-arclength row tangent.(X - X_pred) = 0."""
    n = ref.size
    D1, D2, D3 = (fourier.diff_matrix(n, m) for m in (1, 2, 3))
    w = D1 @ ref
    w = w / np.linalg.norm(w)
    dk, dd = dparams

    def F_of(X):
        U, c, q, s = X[:n], X[n], X[n + 1], X[n + 2]
        p = params_of(s)
        G, lin = _equations(U, c, q, p, D1, D2, D3)
        F = np.concatenate([G, [U.mean() - p.M, w @ (U - ref) / n, tangent @ (X - X_pred)]])
        return F, lin, p

    F, lin, p = F_of(X)
    for it in range(1, max_iter + 1):
        U, c = X[:n], X[n]
        k, d = p.k, p.delta
        dG_dk = 2 * k * (D2 @ U) + d * (D1 @ U + 3 * k * k * (D3 @ U))
        dG_dd = k * (D1 @ U) + k**3 * (D3 @ U)
        J = np.zeros((n + 3, n + 3))
        J[:n, :n] = lin
        J[np.arange(n), np.arange(n)] += 6.0 * U - c
        J[:n, n] = -U
        J[:n, n + 1] = -1.0
        J[:n, n + 2] = dG_dk * dk + dG_dd * dd
        J[n, :n] = 1.0 / n
        J[n + 1, :n] = w / n
        J[n + 2] = tangent
        step = np.linalg.solve(J, -F)
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("singular arclength Jacobian")
        f0 = np.linalg.norm(F)
        X = X + step
        F, lin, p = F_of(X)
        f1 = np.linalg.norm(F)
        if np.max(np.abs(step)) / max(1.0, np.max(np.abs(X[:n]))) < tol or (f1 < FLOOR and f1 > 0.25 * f0):
            return X, it
    raise ConvergenceError("arclength Newton did not converge")


def continue_family(start, target, steps=8, min_step=1e-6, max_iter=25):
    """Pseudo-arclength continuation along the segment from ``start.params`` to ``target``.

    The path is the straight line in (k, delta) at the target mean; the
    arclength parameter s runs from 0 to 1. Failed steps are halved down to
    ``min_step``. A decrease of s between accepted points is recorded in
    ``folds`` rather than raised.
    """
    p0 = start.params
    if target.M != p0.M:
        start = solve_profile(start, replace(p0, M=target.M))
        p0 = start.params
    if (target.k, target.delta) == (p0.k, p0.delta):
        return FamilyPath([start])
    n = start.grid_size
    dparams = (target.k - p0.k, target.delta - p0.delta)
    params_of = lambda s: _line_params(p0, target, s)  # noqa: E731

    def pack(prof, s):
        return np.concatenate([prof.values, [prof.c, prof.qbar, s]])

    path = FamilyPath([start])
    X_prev = None
    X = pack(start, 0.0)
    h = 1.0 / max(int(steps), 1)
    # scale the (s) component against the profile norm so s steps are not dwarfed
    s_scale = max(1.0, math.sqrt(n) * np.max(np.abs(start.values)))
    while X[-1] < 1.0 - 1e-14:
        if X_prev is None:
            tangent = np.zeros(n + 3)
            tangent[-1] = 1.0
            X_pred = X.copy()
            X_pred[-1] += h
        else:
            sec = X - X_prev
            sec[-1] *= s_scale
            sec /= np.linalg.norm(sec)
            sec[-1] /= s_scale
            ds_per = sec[-1]
            arc = h / max(abs(ds_per), 1e-300) if ds_per else h
            X_pred = X + arc * sec
            tangent = sec * np.concatenate([np.ones(n + 2), [s_scale**2]])
        final = X_pred[-1] >= 1.0
        try:
            if final:
                prof = solve_profile(
                    _profile_from(X_pred, params_of(1.0), n), params_of(1.0), max_iter=max_iter, phase_ref=X[:n]
                )
                X_new = pack(prof, 1.0)
            else:
                X_new, _ = _arclength_newton(X_pred, params_of, dparams, X_pred, tangent, X[:n], max_iter)
                if abs(X_new[-1] - X[-1]) > 4.0 * h or not (-1.0 < X_new[-1] <= 1.0):
                    raise ConvergenceError("arclength step jumped branches")
        except (ConvergenceError, np.linalg.LinAlgError) as exc:
            h *= 0.5
            if h < min_step:
                raise ContinuationStall(f"continuation stalled at s = {X[-1]:.6g}: {exc}") from exc
            continue
        if X_new[-1] < X[-1]:
            log.info("fold detected near s = %.6g", X[-1])
            path.folds.append(len(path))
        X_prev, X = X, X_new
        p = params_of(X[-1])
        U, c, q = X[:n], X[n], X[n + 1]
        res = float(np.max(np.abs(profile_residual(U, c, q, p))))
        path.append(WaveProfile(p, float(c), float(q), U.copy(), res))
        h = min(h * 1.5, 1.0 / max(int(steps), 1))
    return path


def _profile_from(X, params, n):
    return WaveProfile(params, float(X[n]), float(X[n + 1]), X[:n].copy())


@dataclass(frozen=True, eq=False)
class ParamDerivatives:
    dU_dk: np.ndarray
    dU_dM: np.ndarray
    dc_dk: float
    dc_dM: float
    dqbar_dk: float
    dqbar_dM: float
    dqbar0_dk: float


def param_derivatives(profile):
    """Derivatives of (U, c, qbar) along the wave family at fixed delta.

    dU/dk is normalized by <dU/dk> = 0 and <dU/dk, U'> = 0 (its translation
    component removed). The M-derivatives are exact: dU/dM = 1, dc/dM = 6,
    dqbar/dM = -c.
    """
    U, c = profile.values, profile.c
    k, d, M = profile.params.k, profile.params.delta, profile.params.M
    n = U.size
    D1, D2, D3 = (fourier.diff_matrix(n, m) for m in (1, 2, 3))
    _, lin = _equations(U, c, profile.qbar, profile.params, D1, D2, D3)
    J = np.zeros((n + 2, n + 2))
    J[:n, :n] = lin
    J[np.arange(n), np.arange(n)] += 6.0 * U - c
    J[:n, n] = -U
    J[:n, n + 1] = -1.0
    J[n, :n] = 1.0 / n
    Ux = D1 @ U
    J[n + 1, :n] = Ux / np.linalg.norm(Ux)
    rhs = np.zeros(n + 2)
    rhs[:n] = -(2.0 * k * (D2 @ U) + d * (Ux + 3.0 * k * k * (D3 @ U)))
    sol = np.linalg.solve(J, rhs)
    dU, dc, dq = sol[:n], float(sol[n]), float(sol[n + 1])
    return ParamDerivatives(
        dU_dk=dU,
        dU_dM=np.ones(n),
        dc_dk=dc,
        dc_dM=6.0,
        dqbar_dk=dq,
        dqbar_dM=-c,
        dqbar0_dk=dq + M * dc,
    )


def write_binary(profile, fh):
    p = profile.params
    fh.write(MAGIC)
    fh.write(struct.pack("<6d", p.k, p.M, p.delta, profile.c, profile.qbar, float(profile.grid_size)))
    fh.write(np.asarray(profile.values, dtype="<f8").tobytes())


def read_binary(fh):
    magic = fh.read(8)
    if magic != MAGIC:
        raise ValueError(f"not a profile file (magic {magic!r})")
    k, M, d, c, q, n = struct.unpack("<6d", fh.read(48))
    n = int(n)
    values = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
    if values.size != n:
        raise ValueError(f"truncated profile: expected {n} samples, got {values.size}")
    params = WaveParams(k, M, d)
    res = float(np.max(np.abs(profile_residual(values, c, q, params))))
    return WaveProfile(params, c, q, values, res)


def to_csv(profile):
    p = profile.params
    out = io.StringIO()
    out.write("k,M,delta,c,qbar,N\n")
    out.write(",".join(f"{v:.12e}" for v in (p.k, p.M, p.delta, profile.c, profile.qbar)))
    out.write(f",{profile.grid_size}\n")
    out.write("xi,U\n")
    for x, u in zip(profile.xi, profile.values):
        out.write(f"{x:.12e},{u:.12e}\n")
    return out.getvalue()


def from_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines[0].replace(" ", "") != "k,M,delta,c,qbar,N" or lines[2].replace(" ", "") != "xi,U":
        raise ValueError("malformed profile CSV header")
    k, M, d, c, q, n = (float(v) for v in lines[1].split(","))
    values = np.array([float(ln.split(",")[1]) for ln in lines[3:]])
    if values.size != int(n):
        raise ValueError(f"profile CSV has {values.size} samples, header says {int(n)}")
    params = WaveParams(k, M, d)
    res = float(np.max(np.abs(profile_residual(values, c, q, params))))
    return WaveProfile(params, c, q, values, res)
