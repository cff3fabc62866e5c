"""Linearizations about a wave and bordered solves of the associated cell problems.

Two operators are discretized on the collocation grid:

* ``gKS_L``: ``L f = k((6U - c) f)' + k^3 f''' + delta (k^2 f'' + k^4 f'''')``
  about a dissipative profile;
* ``KdV_Ltilde``: ``L f = k((6U - c) f)' + k^3 f'''`` about a cnoidal wave.

With a Floquet shift ``nu`` every derivative becomes ``d/dtheta + nu``.
"""

from dataclasses import dataclass

import numpy as np

from . import cnoidal, fourier
from .profile import DEFAULT_N, WaveProfile

GKS = "gKS_L"
KDV = "KdV_Ltilde"


class SolvabilityError(ValueError):
    """Right-hand side fails an adjoint pairing required for a solution."""

    def __init__(self, pairings, scale):
        self.pairings = tuple(float(p) for p in pairings)
        self.scale = float(scale)
        desc = ", ".join(f"{p:.3e}" for p in self.pairings)
        super().__init__(f"solvability violated: adjoint pairings [{desc}] vs |rhs| {scale:.3e}")


@dataclass(frozen=True, eq=False)
class LinearOperator:
    kind: str
    base: object
    matrix: np.ndarray
    nu: complex
    U: np.ndarray
    k: float
    c: float
    delta: float

    def __call__(self, f):
        return self.matrix @ f

    @property
    def n(self):
        return self.U.size

    def kernel(self):
        """Known kernel directions at nu = 0."""
        Ux = fourier.deriv(self.U, 1)
        if self.kind == GKS:
            return [Ux]
        return [Ux, self._v_star()]

    def adjoint_kernel(self):
        one = np.ones(self.n)
        return [one] if self.kind == GKS else [one, self.U]

    def _v_star(self):
        wave = self.base
        dU = cnoidal.dp_profile(wave, self.n)
        return 1.0 - 6.0 * dU / cnoidal.dp_speed(wave.p, wave.k)


def _base_arrays(kind, base, n):
    if kind == GKS:
        if not isinstance(base, WaveProfile):
            raise TypeError("gKS_L needs a WaveProfile base")
        return base.values, base.params.k, base.c, base.params.delta
    if kind == KDV:
        if not isinstance(base, cnoidal.CnoidalWave):
            raise TypeError("KdV_Ltilde needs a CnoidalWave base")
        c, _ = cnoidal.cnoidal_speed_qbar(base)
        return cnoidal.sample(base, n or DEFAULT_N), base.k, c, 0.0
    raise ValueError(f"unknown operator kind {kind!r}")


def build_operator(kind, base, nu=0.0, n=None):
    U, k, c, delta = _base_arrays(kind, base, n)
    N = U.size
    D1 = fourier.shifted_diff_matrix(N, 1, nu)
    D3 = fourier.shifted_diff_matrix(N, 3, nu)
    mat = k * D1 @ np.diag(6.0 * U - c) + k**3 * D3
    if delta:
        D2 = fourier.shifted_diff_matrix(N, 2, nu)
        D4 = fourier.shifted_diff_matrix(N, 4, nu)
        mat = mat + delta * (k * k * D2 + k**4 * D4)
    return LinearOperator(kind, base, mat, complex(nu) if nu else 0.0, U, k, c, delta)


def solvability_pairings(op, rhs):
    return [fourier.inner(g, rhs) for g in op.adjoint_kernel()]


def constrained_solve(op, rhs, constraints=None, tol_solv=1e-8, project=False):
    """Solve ``op f = rhs`` subject to ``<f, g> = 0`` for each constraint ``g``.

    Default constraints: ``<f, U'> = 0``, plus ``<f> = 0`` for the KdV operator.
    The adjoint pairings of ``rhs`` are checked first; with ``project=True``
    they are removed instead (the bordered multipliers absorb them).
    """
    rhs = np.asarray(rhs)
    if np.iscomplexobj(rhs):
        kw = dict(constraints=constraints, tol_solv=tol_solv, project=project)
        parts = [rhs.real, rhs.imag]
        big = max(np.max(np.abs(parts[0])), np.max(np.abs(parts[1])))
        # a part at roundoff level carries no information; solving it would only test noise
        sols = [constrained_solve(op, q, **kw) if np.max(np.abs(q)) > 1e-14 * big else np.zeros(q.size) for q in parts]
        return sols[0] + 1j * sols[1]
    rhs = rhs.astype(float)
    n = op.n
    Ux = fourier.deriv(op.U, 1)
    if constraints is None:
        constraints = [Ux] if op.kind == GKS else [Ux, np.ones(n)]
    adj = op.adjoint_kernel()
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    pair = solvability_pairings(op, rhs)
    if not project and any(abs(p) > tol_solv * max(scale, 1e-300) for p in pair):
        raise SolvabilityError(pair, scale)
    nc, na = len(constraints), len(adj)
    if nc != na:
        raise ValueError(f"{nc} constraints for a {na}-dimensional cokernel")
    if op.kind == KDV and n % 2 == 0 and not op.nu:
        # odd-order spectral derivatives annihilate the Nyquist mode, which is
        # then missing from the range; border it out on both sides
        nyq = np.cos(np.pi * np.arange(n))
        adj, constraints = [*adj, nyq], [*constraints, nyq]
        nc, na = nc + 1, na + 1
    A = np.zeros((n + nc, n + na))
    A[:n, :n] = op.matrix.real
    for j, g in enumerate(adj):
        A[:n, n + j] = g
    for i, g in enumerate(constraints):
        A[n + i, :n] = np.asarray(g) / n
    b = np.concatenate([rhs, np.zeros(nc)])
    return np.linalg.solve(A, b)[:n]


@dataclass(frozen=True, eq=False)
class KdVCorrections:
    U1: np.ndarray
    U2: np.ndarray
    c1: float
    c2: float
    c1_pairing: float


def kdv_corrections(wave, n=DEFAULT_N):
    """First two corrections of the zero-mean wave as dissipation switches on.

    ``U ~ U0 + d U1 + d^2 U2`` and ``c ~ c0 + d^2 c2`` at fixed k, with U1 odd
    and U2 even. Any component along dU0/dp in U1 (and the matching speed
    shift c1) is fixed by the next solvability pairing and comes out zero;
    c2 is fixed the same way one order further.
    """
    if wave.M != 0.0:
        wave = cnoidal.CnoidalWave(wave.p, wave.k, 0.0)
    op = build_operator(KDV, wave, n=n)
    k, U = op.k, op.U
    d = lambda f, m: fourier.deriv(f, m)  # noqa: E731
    Ux = d(U, 1)
    dpU = cnoidal.dp_profile(wave, n)
    dpc = cnoidal.dp_speed(wave.p, wave.k)

    # order d: L U1 - k c1 U0' = -(k^2 U0'' + k^4 U0'''')
    g1 = -(k * k * d(U, 2) + k**4 * d(U, 4))
    c1_pairing = fourier.inner(U, g1)
    U1p = constrained_solve(op, g1)

    # order d^2 pairing: gamma * coef = 0 for the dpU-part of U1 (c1 = gamma dpc)
    coef1 = (
        -6.0 * k * fourier.inner(Ux, U1p * dpU)
        - k * dpc * fourier.inner(U, d(U1p, 1))
        + k * k * fourier.inner(U, d(dpU, 2))
        + k**4 * fourier.inner(U, d(dpU, 4))
    )
    rest1 = -3.0 * k * fourier.inner(Ux, U1p * U1p) + k * k * fourier.inner(U, d(U1p, 2)) + k**4 * fourier.inner(
        U, d(U1p, 4)
    )
    gamma1 = -rest1 / coef1
    U1 = U1p + gamma1 * dpU
    c1 = gamma1 * dpc

    # order d^2: L U2 - k c2 U0' = -(k (3 U1^2 - c1 U1)' + k^2 U1'' + k^4 U1'''')
    g2 = -(k * d(3.0 * U1 * U1 - c1 * U1, 1) + k * k * d(U1, 2) + k**4 * d(U1, 4))
    U2p = constrained_solve(op, g2)
    # order d^3 pairing with U0 fixes the dpU-part gamma2 of U2, c2 = gamma2 dpc
    coef2 = (
        -6.0 * k * fourier.inner(Ux, U1 * dpU)
        + k * c1 * fourier.inner(Ux, dpU)
        + k * dpc * fourier.inner(Ux, U1)
        + k * k * fourier.inner(U, d(dpU, 2))
        + k**4 * fourier.inner(U, d(dpU, 4))
    )
    rest2 = (
        -6.0 * k * fourier.inner(Ux, U1 * U2p)
        + k * c1 * fourier.inner(Ux, U2p)
        + k * k * fourier.inner(U, d(U2p, 2))
        + k**4 * fourier.inner(U, d(U2p, 4))
    )
    gamma2 = -rest2 / coef2
    return KdVCorrections(U1, U2p + gamma2 * dpU, float(c1), float(gamma2 * dpc), float(c1_pairing))
