import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gks_whitham import fourier
from gks_whitham.profile import (
    ConvergenceError,
    WaveParams,
    WaveProfile,
    continue_family,
    from_csv,
    hopf_characteristic_roots,
    initial_profile,
    param_derivatives,
    profile_residual,
    read_binary,
    solve_profile,
    to_csv,
    write_binary,
)


def energy_gap(prof):
    k = prof.params.k
    d1, d2 = prof.derivative(1), prof.derivative(2)
    return np.mean(d1 * d1) - k * k * np.mean(d2 * d2)


@pytest.mark.parametrize("k,M,d", [(0.6, 0.0, 1e-3), (0.8, 0.3, 1e-2), (0.95, 0.0, 0.1), (0.7, -0.5, 0.3)])
def test_converged_profile(k, M, d):
    prof = initial_profile(WaveParams(k, M, d))
    assert prof.residual_norm < 1e-10
    assert prof.values.mean() == pytest.approx(M, abs=1e-12)
    assert abs(energy_gap(prof)) < 1e-8


def test_residual_recomputed(stable_profile):
    r = profile_residual(stable_profile.values, stable_profile.c, stable_profile.qbar, stable_profile.params)
    assert np.max(np.abs(r)) == pytest.approx(stable_profile.residual_norm, abs=1e-14)


@given(st.floats(min_value=-1.0, max_value=1.0))
@settings(max_examples=10)
def test_galilean_shift(stable_profile, M):
    p = stable_profile.params
    shifted = solve_profile(stable_profile, WaveParams(p.k, M, p.delta))
    assert shifted.c - stable_profile.c == pytest.approx(6 * M, abs=1e-10)
    assert np.allclose(shifted.values - M, stable_profile.values, atol=1e-10)
    assert shifted.qbar0 == pytest.approx(stable_profile.qbar0, abs=1e-10)


def test_omega(stable_profile):
    assert stable_profile.Omega == -stable_profile.params.k * stable_profile.c


def test_grid_doubling(stable_profile):
    p = stable_profile.params
    fine = solve_profile(
        WaveProfile(p, stable_profile.c, stable_profile.qbar, fourier.resample(stable_profile.values, 512)), p
    )
    # 256 points resolve the wave to about 1e-11
    assert fine.c == pytest.approx(stable_profile.c, abs=1e-10)
    assert np.max(np.abs(fourier.resample(fine.values, 256) - stable_profile.values)) < 1e-10


def test_param_derivatives_against_differences(stable_profile, stable_derivs):
    p = stable_profile.params
    h = 1e-4

    def solved(k):
        return solve_profile(stable_profile, WaveParams(k, p.M, p.delta))

    up, um = solved(p.k + h), solved(p.k - h)
    fd = (up.c - um.c) / (2 * h)
    assert stable_derivs.dc_dk == pytest.approx(fd, rel=1e-6)
    assert stable_derivs.dqbar_dk == pytest.approx((up.qbar - um.qbar) / (2 * h), rel=1e-6)
    assert stable_derivs.dc_dM == 6.0
    assert np.all(stable_derivs.dU_dM == 1.0)
    assert stable_derivs.dqbar_dM == -stable_profile.c


def test_dU_dk_normalization(stable_profile, stable_derivs):
    dU = stable_derivs.dU_dk
    assert abs(dU.mean()) < 1e-12
    assert abs(fourier.inner(dU, stable_profile.derivative(1))) < 1e-10


def test_continuation_zero_length(stable_profile):
    path = continue_family(stable_profile, stable_profile.params)
    assert len(path) == 1 and path.folds == []


def test_continuation_in_delta_and_back(stable_profile):
    p = stable_profile.params
    up = continue_family(stable_profile, WaveParams(p.k, p.M, 0.2), steps=4)
    assert up[-1].params.delta == pytest.approx(0.2)
    assert all(q.residual_norm < 1e-9 for q in up)
    back = continue_family(up[-1], p, steps=4)
    assert back[-1].c == pytest.approx(stable_profile.c, abs=1e-10)


def test_continuation_in_k(stable_profile):
    p = stable_profile.params
    path = continue_family(stable_profile, WaveParams(0.8, p.M, p.delta), steps=4)
    direct = initial_profile(WaveParams(0.8, p.M, p.delta))
    assert path[-1].c == pytest.approx(direct.c, abs=1e-10)


def test_binary_round_trip(stable_profile):
    buf = io.BytesIO()
    write_binary(stable_profile, buf)
    buf.seek(0)
    back = read_binary(buf)
    assert np.array_equal(back.values, stable_profile.values)
    assert back.c == stable_profile.c and back.qbar == stable_profile.qbar
    assert back.residual_norm < 1e-10


def test_binary_bad_magic():
    with pytest.raises(ValueError, match="magic"):
        read_binary(io.BytesIO(b"NOTAPROF" + bytes(64)))


def test_binary_truncated(stable_profile):
    buf = io.BytesIO()
    write_binary(stable_profile, buf)
    with pytest.raises(ValueError, match="truncated"):
        read_binary(io.BytesIO(buf.getvalue()[:-8]))


def test_csv_round_trip(stable_profile):
    back = from_csv(to_csv(stable_profile))
    assert np.allclose(back.values, stable_profile.values, rtol=1e-11, atol=1e-13)
    # 13 significant digits, amplified by the third derivative
    assert back.residual_norm < 1e-8
    polished = solve_profile(back)
    assert polished.residual_norm < 1e-10
    assert polished.c == pytest.approx(stable_profile.c, abs=1e-11)


def test_csv_bad_header():
    with pytest.raises(ValueError):
        from_csv("a,b\n1,2\nxi,U\n")


def test_flat_reference_rejected(stable_profile):
    flat = WaveProfile(stable_profile.params, 0.0, 0.0, np.zeros(64))
    with pytest.raises(ConvergenceError):
        solve_profile(flat)


def test_hopf_roots_at_onset():
    d = 0.3
    r = hopf_characteristic_roots(1.0, d)
    assert np.allclose(sorted(r.imag), [-1, 0, 1], atol=1e-12)
    assert np.allclose(np.sort(r.real), [-1 / d, 0, 0], atol=1e-12)


def test_hopf_roots_zero_forcing():
    r = hopf_characteristic_roots(0.0, 0.5)
    assert np.min(np.abs(r)) < 1e-14


@given(st.floats(min_value=0.0, max_value=3.0), st.floats(min_value=0.05, max_value=2.0))
def test_hopf_pair_crosses_at_unit_forcing(a, d):
    r = hopf_characteristic_roots(a, d)
    pair = r[np.abs(r.imag) > 1e-9]
    if pair.size and abs(a - 1.0) > 1e-6:
        assert np.sign(pair[0].real) == np.sign(a - 1.0)


@pytest.mark.parametrize("d", [0.1, 0.5, 2.0])
def test_hopf_transversality(d):
    h = 1e-6
    re = [hopf_characteristic_roots(a, d)[0].real for a in (1 - h, 1 + h)]
    assert (re[1] - re[0]) / (2 * h) == pytest.approx(d / (2 * (1 + d * d)), rel=1e-6)


def test_hopf_needs_dissipation():
    with pytest.raises(ValueError):
        hopf_characteristic_roots(1.0, 0.0)


@pytest.mark.parametrize("kw", [dict(k=0.0), dict(k=1.2), dict(k=0.5, delta=-0.1)])
def test_bad_params(kw):
    with pytest.raises(ValueError):
        WaveParams(**kw)
