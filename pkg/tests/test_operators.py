import numpy as np
import pytest
from hypothesis import given, strategies as st

from gks_whitham import cnoidal, fourier
from gks_whitham.cnoidal import CnoidalWave
from gks_whitham.operators import (
    GKS,
    KDV,
    SolvabilityError,
    build_operator,
    constrained_solve,
    kdv_corrections,
)
from gks_whitham.profile import WaveParams, WaveProfile, cnoidal_guess, solve_profile

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def smooth_random(seed, n, modes=12):
    rng = np.random.default_rng(seed)
    th = 2 * np.pi * fourier.grid(n)
    f = np.zeros(n)
    for m in range(1, modes):
        f += rng.normal() / m**2 * np.cos(m * th + rng.uniform(0, 2 * np.pi))
    return f


def roundoff(op, f):
    return 1e-13 * np.linalg.norm(op.matrix, np.inf) * np.max(np.abs(f))


def test_translation_mode_in_kernel(stable_profile):
    op = build_operator(GKS, stable_profile)
    Ux = stable_profile.derivative(1)
    assert np.max(np.abs(op(Ux))) < roundoff(op, Ux)


def test_kernel_direction_by_svd(stable_profile):
    op = build_operator(GKS, stable_profile)
    _, sv, vh = np.linalg.svd(op.matrix)
    Ux = stable_profile.derivative(1)
    cos = abs(vh[-1] @ Ux) / np.linalg.norm(Ux)
    assert np.arccos(min(cos, 1.0)) < 1e-6
    assert sv[-1] < 1e-6 * sv[-2]


def test_kdv_kernel_is_two_dimensional(selected_wave):
    op = build_operator(KDV, selected_wave, n=128)
    sv = np.linalg.svd(op.matrix, compute_uv=False)
    # two genuine kernel directions plus the Nyquist mode of odd derivatives
    assert np.all(sv[-3:] < 1e-9 * sv[0])
    assert sv[-4] > 1e-6 * sv[0]


def test_constant_maps_to_derivative(stable_profile):
    op = build_operator(GKS, stable_profile)
    k = stable_profile.params.k
    assert np.allclose(op(np.ones(op.n)), 6 * k * stable_profile.derivative(1), atol=1e-10)


@given(seeds)
def test_range_has_zero_mean(stable_profile, seed):
    op = build_operator(GKS, stable_profile)
    f = smooth_random(seed, op.n)
    assert abs(np.mean(op(f))) < roundoff(op, f)


@given(seeds)
def test_kdv_range_orthogonal_to_profile(selected_wave, seed):
    op = build_operator(KDV, selected_wave, n=256)
    f = smooth_random(seed, 256)
    Lf = op(f)
    assert abs(fourier.inner(op.U, Lf)) < roundoff(op, f) * np.max(np.abs(op.U))
    assert abs(np.mean(Lf)) < roundoff(op, f)


def test_kdv_kernel(selected_wave):
    op = build_operator(KDV, selected_wave, n=256)
    for v in op.kernel():
        # the second direction carries the error of a differenced dU/dp
        assert np.max(np.abs(op(v))) < 1e-7 * np.max(np.abs(v))


@given(seeds)
def test_constrained_solve_applies_back(stable_profile, seed):
    op = build_operator(GKS, stable_profile)
    rhs = op(smooth_random(seed, op.n))
    f = constrained_solve(op, rhs)
    assert np.allclose(op(f), rhs, atol=1e-9 * max(1.0, np.max(np.abs(rhs))))
    assert abs(fourier.inner(f, stable_profile.derivative(1))) < 1e-12


def test_constrained_solve_complex(stable_profile):
    op = build_operator(GKS, stable_profile)
    g = smooth_random(1, op.n)
    rhs = op(g) + 2j * op(np.roll(g, 5))
    f = constrained_solve(op, rhs)
    assert np.allclose(op(f), rhs, atol=1e-9)


def test_solvability_violation(stable_profile):
    op = build_operator(GKS, stable_profile)
    with pytest.raises(SolvabilityError) as err:
        constrained_solve(op, np.ones(op.n))
    assert err.value.pairings[0] == pytest.approx(1.0)


def test_project_removes_violation(stable_profile):
    op = build_operator(GKS, stable_profile)
    rhs = op(smooth_random(2, op.n)) + 0.3
    f = constrained_solve(op, rhs, project=True)
    assert np.allclose(op(f), rhs - 0.3, atol=1e-9)


def test_wrong_base_types(stable_profile, selected_wave):
    with pytest.raises(TypeError):
        build_operator(GKS, selected_wave)
    with pytest.raises(TypeError):
        build_operator(KDV, stable_profile)
    with pytest.raises(ValueError):
        build_operator("other", stable_profile)


@pytest.mark.parametrize("M,c,k,d", [(0.0, -0.3, 0.7, 0.1), (0.4, 1.0, 0.5, 0.3)])
def test_constant_state_symbol(M, c, k, d):
    n = 32
    base = WaveProfile(WaveParams(k, M, d), c, 0.0, np.full(n, M))
    op = build_operator(GKS, base)
    for m in (1, 3, 7):
        e = np.exp(2j * np.pi * m * fourier.grid(n))
        z = 1j * m
        sym = k * (6 * M - c) * z + k**3 * z**3 + d * (k**2 * z**2 + k**4 * z**4)
        assert np.allclose(op.matrix @ e, sym * e, atol=1e-9)


def test_bloch_shift_constant_state():
    n, nu = 16, 0.05j
    base = WaveProfile(WaveParams(0.6, 0.0, 0.2), 0.4, 0.0, np.zeros(n))
    op = build_operator(GKS, base, nu=nu)
    z = 2j + nu
    e = np.exp(2j * np.pi * 2 * fourier.grid(n))
    sym = 0.6 * (-0.4) * z + 0.6**3 * z**3 + 0.2 * (0.6**2 * z**2 + 0.6**4 * z**4)
    assert np.allclose(op.matrix @ e, sym * e, atol=1e-10)


def test_first_correction_is_odd(selected_wave):
    corr = kdv_corrections(selected_wave)
    U1 = corr.U1
    mirrored = np.roll(U1[::-1], 1)
    assert np.max(np.abs(U1 + mirrored)) < 1e-9 * np.max(np.abs(U1))
    U2 = corr.U2
    assert np.max(np.abs(U2 - np.roll(U2[::-1], 1))) < 1e-8 * np.max(np.abs(U2))


def test_first_speed_correction_vanishes(selected_wave):
    corr = kdv_corrections(selected_wave)
    assert abs(corr.c1_pairing) < 1e-8
    assert abs(corr.c1) < 1e-8


def test_second_speed_correction_matches_solves(selected_wave):
    k = selected_wave.k
    c0, _ = cnoidal.cnoidal_speed_qbar(selected_wave)
    corr = kdv_corrections(selected_wave)
    est = []
    for d in (4e-3, 2e-3):
        params = WaveParams(k, 0.0, d)
        prof = solve_profile(cnoidal_guess(params), params)
        est.append((prof.c - c0) / d**2)
    # (c - c0)/d^2 = c2 + O(d^2): Richardson removes the leading error
    assert (4 * est[1] - est[0]) / 3 == pytest.approx(corr.c2, rel=1e-4)


def test_corrections_need_selected_wave():
    with pytest.raises(SolvabilityError):
        kdv_corrections(CnoidalWave(0.5, 0.7))
