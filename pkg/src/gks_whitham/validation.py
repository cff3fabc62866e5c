"""Cross-module acceptance checks, shared by the test suite and ``gks validate``."""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special as sps
from scipy.optimize import brentq

from . import bloch, cnoidal, direct_sim, fourier
from .operators import kdv_corrections
from .profile import WaveParams, cnoidal_guess, initial_profile, param_derivatives, solve_profile
from .whitham import first_order, kdv_modulation, relaxed_limit, second_order


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: dict
    time_limit: float
    elapsed: float = 0.0
    notes: str = ""

    @property
    def in_time(self):
        return self.elapsed < self.time_limit

    @property
    def ok(self):
        return self.passed and self.in_time


def _timed(number, name, limit):
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            passed, measured, notes = fn()
            return CriterionResult(number, name, bool(passed), measured, limit, time.perf_counter() - t0, notes)

        run.number, run.suite = number, name
        return run

    return wrap


# ---------------------------------------------------------------------------
# 1


PROFILE_SAMPLES = [
    (k, M, d)
    for i, (k, M) in enumerate(
        [(0.6, 0.0), (0.66, 0.3), (0.72, 0.0), (0.78, 0.3), (0.84, 0.0), (0.9, 0.3), (0.94, 0.0)]
    )
    for d in (1e-3, 1e-2, 1e-1)
][:19] + [(0.98, 0.3, 1e-2)]


@_timed(1, "profile-identity", 60.0)
def profile_identity():
    worst = {"residual": 0.0, "mean_error": 0.0, "energy_identity": 0.0}
    for k, M, d in PROFILE_SAMPLES:
        prof = initial_profile(WaveParams(k, M, d))
        U1, U2 = prof.derivative(1), prof.derivative(2)
        worst["residual"] = max(worst["residual"], prof.residual_norm)
        worst["mean_error"] = max(worst["mean_error"], abs(np.mean(prof.values) - M))
        gap = abs(np.mean(U1 * U1) - k * k * np.mean(U2 * U2))
        worst["energy_identity"] = max(worst["energy_identity"], gap)
    ok = worst["residual"] < 1e-10 and worst["mean_error"] < 1e-12 and worst["energy_identity"] < 1e-8
    return ok, worst, f"{len(PROFILE_SAMPLES)} profiles"


# ---------------------------------------------------------------------------
# 2


def selection_F_quadrature(p):
    """Selection function from the averaged energy balance, by adaptive quadrature.

    With g(u) = dn^2(u | p^2), the balance <U'^2> = k^2 <U''^2> gives
    F = K^2 <g''^2> / (4 <g'^2>) over a half period.
    """
    m = p * p
    K = sps.ellipk(m)

    def parts(u):
        sn, cn, dn, _ = sps.ellipj(u, m)
        g1 = -2.0 * m * sn * cn * dn
        g2 = -2.0 * m * (cn * cn * dn * dn - sn * sn * dn * dn - m * sn * sn * cn * cn)
        return g1, g2

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    a1 = integrate.quad(lambda u: parts(u)[0] ** 2, 0.0, K, **opts)[0]
    a2 = integrate.quad(lambda u: parts(u)[1] ** 2, 0.0, K, **opts)[0]
    return K * K * a2 / (4.0 * a1)


CNOIDAL_P = np.linspace(0.15, 0.95, 5)
CNOIDAL_K = np.linspace(0.3, 0.95, 5)


@_timed(2, "cnoidal", 10.0)
def cnoidal_checks():
    res = max(cnoidal.profile_residual(cnoidal.CnoidalWave(p, k, 0.0)) for p in CNOIDAL_P for k in CNOIDAL_K)
    ferr = max(abs(cnoidal.selection_F(p) - selection_F_quadrature(p)) / selection_F_quadrature(p) for p in CNOIDAL_P)
    return res < 1e-8 and ferr < 1e-8, {"residual": res, "selection_F_rel_error": ferr}, "25 (p, k) points"


# ---------------------------------------------------------------------------
# 3

EXPANSION_DELTAS = (1e-3, 5e-4, 2.5e-4)


@_timed(3, "delta-expansion", 30.0)
def delta_expansion(k=0.7, n=256):
    wave = cnoidal.CnoidalWave(cnoidal.solve_p_for_k(k), k, 0.0)
    corr = kdv_corrections(wave, n)
    U0 = cnoidal.sample(wave, n)
    errs = []
    for d in EXPANSION_DELTAS:
        params = WaveParams(k, 0.0, d)
        prof = solve_profile(cnoidal_guess(params, n), params, phase_ref=U0)
        errs.append(float(np.max(np.abs(prof.values - U0 - d * corr.U1))))
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(2)]
    ok = min(orders) >= 1.9 and abs(corr.c1_pairing) < 1e-8
    return ok, {"errors": errs, "orders": orders, "c1_pairing": abs(corr.c1_pairing)}, f"k = {k}"


# ---------------------------------------------------------------------------
# 4 and 5

SPECTRAL_SAMPLES = [
    (0.55, 0.0, 0.1),
    (0.6, 0.3, 0.1),
    (0.7, 0.0, 0.1),
    (0.76, 0.0, 0.1),
    (0.8, 0.0, 0.2),
    (0.9, 0.3, 0.2),
    (0.65, 0.0, 0.3),
    (0.7, 0.3, 0.05),
    (0.85, 0.0, 0.1),
    (0.95, 0.0, 0.2),
]


def _spectral_data(cache={}):  # noqa: B006 - deliberate memo shared by criteria 4 and 5
    if "rows" not in cache:
        rows = []
        for k, M, d in SPECTRAL_SAMPLES:
            prof = initial_profile(WaveParams(k, M, d))
            der = param_derivatives(prof)
            first = first_order(prof, der)
            second = second_order(prof, first, der)
            fits = bloch.low_freq_fit(prof)
            rows.append((prof, first, second, fits))
        cache["rows"] = rows
    return cache["rows"]


def _rel(a, b):
    return float(abs(a - b) / max(abs(b), 1e-300))


@_timed(4, "first-order", 120.0)
def first_order_match():
    worst, sign_ok = 0.0, True
    for prof, first, _, fits in _spectral_data():
        for fit, lam in zip(fits, first.characteristics):
            worst = max(worst, _rel(fit.lambda0_tilde, lam))
        scale = max(abs(f.lambda0_tilde) for f in fits)
        real_slopes = all(abs(f.lambda0_tilde.imag) < 1e-4 * scale for f in fits)
        sign_ok &= real_slopes == (first.discriminant > 0)
    return worst < 1e-4 and sign_ok, {"lambda0_rel_error": worst, "sign_match": sign_ok}, "10 waves"


@_timed(5, "second-order", 120.0)
def second_order_match():
    worst = 0.0
    for prof, first, second, fits in _spectral_data():
        for fit, lam1 in zip(fits, second.lambda1):
            worst = max(worst, _rel(fit.lambda1_tilde, lam1))
    return worst < 1e-3, {"lambda1_rel_error": worst}, "10 waves"


# ---------------------------------------------------------------------------
# 6

KDV_LIMIT_SAMPLES = [(0.7, 0.0), (0.85, 0.3), (0.6, 0.0)]


@_timed(6, "kdv-limit", 60.0)
def kdv_limit_checks():
    speed_err, path_err = 0.0, 0.0
    for k, M in KDV_LIMIT_SAMPLES:
        wave = cnoidal.CnoidalWave(cnoidal.solve_p_for_k(k), k, M)
        lin = bloch.kdv_limit_dispersion(wave, 0.0)
        ref = kdv_modulation(k, M, wave.p).speeds("lab")
        mine = np.sort_complex(lin.lab_speeds)
        speed_err = max(speed_err, float(np.max(np.abs(mine - np.sort_complex(ref)))))
        for db in (0.5, 1.0, 2.0):
            a = bloch.kdv_limit_dispersion(wave, db, path="lin").roots
            b = bloch.kdv_limit_dispersion(wave, db, path="mod_lin").roots
            path_err = max(path_err, float(np.max(np.abs(a - b))))
    ok = speed_err < 1e-8 and path_err < 1e-10
    return ok, {"kdv_speed_error": speed_err, "lin_vs_mod_lin": path_err}, f"{len(KDV_LIMIT_SAMPLES)} waves"


# ---------------------------------------------------------------------------
# 7

RELAX_DELTAS = (1e-2, 5e-3, 2.5e-3)


@_timed(7, "relaxation", 60.0)
def relaxation():
    orders = []
    gaps = []
    for k, M in ((0.7, 0.0), (0.85, 0.3)):
        ref = relaxed_limit(k, M).characteristics
        gap = [
            float(np.max(np.abs(first_order(initial_profile(WaveParams(k, M, d))).characteristics - ref)))
            for d in RELAX_DELTAS
        ]
        gaps.append(gap)
        orders += [float(np.log2(gap[i] / gap[i + 1])) for i in range(2)]
    return min(orders) >= 0.9, {"gaps": gaps, "orders": orders}, "measured order"


# ---------------------------------------------------------------------------
# 8

DYNAMIC_SAMPLE = (0.5, 0.3, 0.3)


@_timed(8, "dynamics", 300.0)
def dynamics():
    k, M, d = DYNAMIC_SAMPLE
    prof = initial_profile(WaveParams(k, M, d))
    mod = direct_sim.modulation_experiment(prof, 1e-3, L=64, T=200.0)
    _, _, zmax, rate = direct_sim.constant_state_growth(0.1)
    growth_err = abs(rate - 0.025) / 0.025
    zeta_err = abs(zmax - 1 / np.sqrt(2)) / (1 / np.sqrt(2))
    worst = max(mod.relative_errors)
    ok = worst < 0.05 and growth_err < 0.01 and zeta_err < 0.01
    measured = {
        "speed_rel_error": worst,
        "measured_speeds": list(mod.measured_speeds),
        "predicted_speeds": list(mod.predicted_speeds),
        "growth_rel_error": growth_err,
        "argmax_rel_error": zeta_err,
    }
    return ok, measured, f"k = {k}, M = {M}, delta = {d}"


CRITERIA = [
    profile_identity,
    cnoidal_checks,
    delta_expansion,
    first_order_match,
    second_order_match,
    kdv_limit_checks,
    relaxation,
    dynamics,
]

SUITES = {
    "all": [c.number for c in CRITERIA],
    "profile": [1, 2, 3],
    "spectral-match": [4, 5],
    "kdv-limit": [6, 7],
    "dynamics": [8],
}
SUITES.update({c.suite: [c.number] for c in CRITERIA})


def run_suite(name="all"):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(sorted(SUITES))}")
    wanted = SUITES[name]
    return [c() for c in CRITERIA if c.number in wanted]


def _fmt(v):
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return f"{float(v):.3e}"


def report(results):
    """Pass/fail table; timings are left out so that reruns are byte-identical."""
    lines = [f"{'#':>2}  {'criterion':<18} {'result':<6} measured"]
    for r in results:
        measured = "; ".join(f"{k}={_fmt(v)}" for k, v in r.measured.items())
        lines.append(f"{r.number:>2}  {r.name:<18} {'PASS' if r.passed else 'FAIL':<6} {measured}")
    lines.append(f"overall: {'PASS' if all(r.passed for r in results) else 'FAIL'}")
    return "\n".join(lines) + "\n"
