import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gks_whitham import cnoidal
from gks_whitham.profile import WaveParams, initial_profile, param_derivatives, solve_profile
from gks_whitham.whitham import (
    SCHEMA,
    DegenerateBranch,
    dispersion_quadratic,
    first_order,
    kdv_modulation,
    relaxed_limit,
    second_order,
    to_json,
    to_record,
)

# k = 0.7, M = 0, delta = 0.1: slopes and curvatures fitted from a Hill sweep
# (64 modes, |nu| <= 4e-3, degree 6), independent of the modulation equations
HILL_LAMBDA0 = (0.2436794923658209, 1.2671734493513616)
HILL_LAMBDA1 = (1.026612429211186, 18.64560381512279)


def test_first_order_matches_hill_slopes(stable_profile, stable_derivs):
    first = first_order(stable_profile, stable_derivs)
    assert first.hyperbolic
    assert np.allclose(first.characteristics.real, HILL_LAMBDA0, rtol=1e-6)


def test_second_order_matches_hill_curvatures(stable_profile, stable_derivs):
    second = second_order(stable_profile, derivs=stable_derivs)
    assert np.allclose(second.lambda1.real, HILL_LAMBDA1, rtol=1e-4)
    assert np.all(np.abs(second.lambda1.imag) < 1e-10)


def test_quadratic_roots_are_characteristics(stable_profile, stable_derivs):
    first = first_order(stable_profile, stable_derivs)
    roots = np.sort(np.roots(dispersion_quadratic(first, stable_derivs)))
    assert np.allclose(roots, first.characteristics, atol=1e-12)
    b, c = dispersion_quadratic(first, stable_derivs)[1:]
    assert b * b - 4 * c == pytest.approx(first.discriminant, rel=1e-10)


@pytest.mark.parametrize("k", [0.55, 0.8, 0.95])
def test_discriminant_sign_is_realness(k):
    first = first_order(initial_profile(WaveParams(k, 0.0, 0.2)))
    real = np.all(np.abs(first.characteristics.imag) < 1e-12)
    assert real == first.hyperbolic


@given(st.floats(min_value=-1.0, max_value=1.0))
@settings(max_examples=8)
def test_mean_shift(stable_profile, M):
    p = stable_profile.params
    shifted = solve_profile(stable_profile, WaveParams(p.k, M, p.delta))
    a, b = first_order(stable_profile), first_order(shifted)
    assert b.discriminant == pytest.approx(a.discriminant, abs=1e-8)
    # comoving characteristics are frame independent, lab speeds move by 6M
    assert np.allclose(b.characteristics, a.characteristics, atol=1e-8)
    assert np.allclose(b.speeds("lab") - a.speeds("lab"), 6 * M, atol=1e-8)


def test_elliptic_branches_are_conjugate():
    prof = initial_profile(WaveParams(0.9, 0.0, 0.2))
    second = second_order(prof)
    assert not second.first.hyperbolic
    l0, l1 = [b.lambda0 for b in second.branches], second.lambda1
    assert l0[0] == pytest.approx(np.conj(l0[1]), abs=1e-10)
    assert l1[0] == pytest.approx(np.conj(l1[1]), rel=1e-8)


def test_laplacian_coefficient(stable_profile):
    p = stable_profile.params
    assert second_order(stable_profile).laplacian_coeff == pytest.approx(-p.delta * p.k)


def test_degenerate_branch(stable_profile, stable_derivs):
    first = first_order(stable_profile, stable_derivs)
    lam = first.characteristics.copy()
    lam[1] = lam[0]
    first = replace(first, characteristics=lam)
    with pytest.raises(DegenerateBranch):
        second_order(stable_profile, first, stable_derivs)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_kdv_modulation_hyperbolic(p):
    speeds = kdv_modulation(0.7, 0.0, p).speeds()
    assert np.all(np.abs(speeds.imag) < 1e-10)


@pytest.mark.parametrize("k", [0.6, 0.7, 0.85])
def test_kdv_source_vanishes_on_selection_curve(k):
    p = cnoidal.solve_p_for_k(k)
    m = kdv_modulation(k, 0.0, p, deltabar=1.0)
    assert abs(m.source[2]) < 1e-10 * abs(m.flux[2])
    off = kdv_modulation(k, 0.0, 0.5 * p, deltabar=1.0)
    assert abs(off.source[2]) > 1e-3 * abs(off.flux[2])


@given(st.floats(min_value=-1.0, max_value=1.0))
@settings(max_examples=6)
def test_kdv_modulation_mean_shift(M):
    a = kdv_modulation(0.7, 0.0, 0.6).speeds()
    b = kdv_modulation(0.7, M, 0.6).speeds()
    assert np.allclose(b - a, 6 * M, atol=1e-7)


def test_kdv_modulation_M_columns():
    k, M, p = 0.7, 0.3, 0.6
    m = kdv_modulation(k, M, p)
    u2 = m.conserved[2] * 2
    assert np.allclose(m.jac_conserved[:, 1], [0, 1, M], atol=1e-8)
    assert np.allclose(m.jac_flux[:, 1], [6 * k, 6 * M, 6 * u2], atol=1e-7)


def test_relaxed_limit_mass_flux():
    k, M = 0.7, 0.3
    sys = relaxed_limit(k, M)
    wave = cnoidal.CnoidalWave(cnoidal.solve_p_for_k(k), k, M)
    u2 = cnoidal.averaged_quantities(wave).mean_U2
    assert sys.flux_jacobian[1, 1] == pytest.approx(6 * M)
    # d/dk of the mass flux 3<U^2> along the selection curve
    h = 1e-5
    f = [3 * cnoidal.averaged_quantities(cnoidal.CnoidalWave(cnoidal.solve_p_for_k(x), x, M)).mean_U2
         for x in (k - h, k + h)]
    assert sys.flux_jacobian[1, 0] == pytest.approx((f[1] - f[0]) / (2 * h), rel=1e-6)
    assert u2 > M * M


def test_relaxed_limit_close_to_small_dissipation():
    ref = relaxed_limit(0.7).characteristics
    prof = initial_profile(WaveParams(0.7, 0.0, 1e-3))
    assert np.max(np.abs(first_order(prof).characteristics - ref)) < 1e-2


def test_json_record(stable_profile):
    rec = json.loads(to_json(second_order(stable_profile), note="x"))
    assert rec["schema"] == SCHEMA
    assert rec["kind"] == "second_order"
    assert rec["note"] == "x"
    assert len(rec["branches"]) == 2
    assert set(rec["state"]) == {"k", "M", "delta"}
    assert rec["hyperbolic"] is True


def test_json_kdv_record():
    rec = to_record(kdv_modulation(0.7, 0.0, 0.5))
    assert rec["kind"] == "kdv_modulation"
    assert len(rec["lab_speeds"]) == 3


def test_json_rejects_unknown():
    with pytest.raises(TypeError):
        to_record(object())


def test_json_deterministic(stable_profile):
    derivs = param_derivatives(stable_profile)
    assert to_json(first_order(stable_profile, derivs)) == to_json(first_order(stable_profile, derivs))
