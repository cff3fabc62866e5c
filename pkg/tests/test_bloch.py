import numpy as np
import pytest

from gks_whitham import bloch, cnoidal
from gks_whitham.bloch import (
    BranchTrackingError,
    distinguished_limit_eigenvalues,
    hill_eigenvalues,
    hill_spectrum,
    kdv_limit_dispersion,
    low_freq_fit,
    low_freq_sweep,
    perturbation_dispersion_fixed_delta,
    sweep,
)
from gks_whitham.profile import WaveParams, WaveProfile, initial_profile
from gks_whitham.whitham import kdv_modulation, second_order


@pytest.fixture(scope="module")
def fits(stable_profile):
    return low_freq_fit(stable_profile)


@pytest.fixture(scope="module")
def elliptic_profile():
    return initial_profile(WaveParams(0.9, 0.0, 0.2))


def test_translation_eigenvalue(stable_profile):
    ev = hill_eigenvalues(stable_profile, 0.0)
    assert np.min(np.abs(ev)) < 1e-9


def test_conjugate_symmetry(stable_profile):
    a = hill_spectrum(stable_profile, 0.3)
    b = hill_spectrum(stable_profile, -0.3)
    assert np.allclose(np.sort_complex(a), np.sort_complex(np.conj(b)), atol=1e-9)


def test_mode_doubling(stable_profile):
    a = hill_spectrum(stable_profile, 0.2, n_modes=32)
    b = hill_spectrum(stable_profile, 0.2, n_modes=64)
    near = lambda e: np.sort_complex(e[np.argsort(np.abs(e))][:6])  # noqa: E731
    assert np.max(np.abs(near(a) - near(b))) < 1e-9


def test_too_few_modes(stable_profile):
    with pytest.raises(ValueError):
        hill_spectrum(stable_profile, 0.1, n_modes=16)


def test_constant_base_symbol():
    k, d, M, c = 0.6, 0.2, 0.1, 0.5
    base = WaveProfile(WaveParams(k, M, d), c, 0.0, np.full(64, M))
    nu = bloch.xi_to_nu(0.4)
    ev = hill_eigenvalues(base, nu, n_modes=32)
    s = 1j * np.arange(-32, 33) + nu
    sym = -(k * (6 * M - c) * s + k**3 * s**3 + d * (k * k * s**2 + k**4 * s**4))
    assert np.allclose(np.sort_complex(ev), np.sort_complex(sym), rtol=1e-10, atol=1e-8)


def test_xi_nu_round_trip():
    assert bloch.nu_to_xi(bloch.xi_to_nu(0.37)) == pytest.approx(0.37)


def test_fit_matches_modulation(stable_profile, fits):
    second = second_order(stable_profile)
    for f, b in zip(fits, second.branches):
        assert f.lambda0_tilde == pytest.approx(b.lambda0, rel=1e-5)
        assert f.lambda1_tilde == pytest.approx(b.lambda1, rel=1e-3)


def test_fit_window_stability(fits):
    for f in fits:
        assert abs(f.window_change) < 1e-3 * abs(f.lambda1)


def test_fit_slopes_scale_with_k(fits, stable_profile):
    k = stable_profile.params.k
    for f in fits:
        assert f.lambda0 == pytest.approx(k * f.lambda0_tilde)


def test_fit_elliptic_pair(elliptic_profile):
    fits = low_freq_fit(elliptic_profile)
    second = second_order(elliptic_profile)
    a, b = fits
    assert a.lambda0_tilde == pytest.approx(np.conj(b.lambda0_tilde), rel=1e-6)
    for f, br in zip(fits, second.branches):
        assert f.lambda0_tilde == pytest.approx(br.lambda0, rel=1e-4)
        assert f.lambda1_tilde == pytest.approx(br.lambda1, rel=1e-3)


def test_perturbation_hierarchy_matches_modulation(stable_profile):
    pert = perturbation_dispersion_fixed_delta(stable_profile)
    second = second_order(stable_profile)
    for p, b in zip(pert, second.branches):
        assert p.lambda0_tilde == pytest.approx(b.lambda0, rel=1e-8)
        assert p.lambda1_tilde == pytest.approx(b.lambda1, rel=1e-8)


def test_one_sided_sweeps_agree(stable_profile):
    sw = low_freq_sweep(stable_profile)
    pos = sw.xi_grid > 0
    neg = sw.xi_grid < 0
    # lambda(-xi) = conj(lambda(xi)) for a real operator
    assert np.allclose(sw.branches[neg][::-1], np.conj(sw.branches[pos]), atol=1e-10)


def test_tracked_sweep(stable_profile):
    xi = np.linspace(-0.05, 0.05, 11)
    sw = sweep(stable_profile, xi, track=2)
    assert sw.min_overlap >= bloch.MIN_OVERLAP
    assert np.all(sw.branches[xi == 0] == 0)


def test_tracking_failure(stable_profile, monkeypatch):
    monkeypatch.setattr(bloch, "MIN_OVERLAP", 1.0 + 1e-9)
    with pytest.raises(BranchTrackingError):
        sweep(stable_profile, np.linspace(0.01, 0.5, 4), track=2)


def test_sweep_csv(stable_profile):
    sw = sweep(stable_profile, np.linspace(-0.2, 0.2, 5), keep=4)
    lines = sw.to_csv().splitlines()
    assert lines[0] == "xi," + ",".join(f"re_lambda_{j},im_lambda_{j}" for j in range(1, 5))
    assert len(lines) == 6
    assert all(len(ln.split(",")) == 9 for ln in lines)


@pytest.fixture(scope="module")
def selected():
    k = 0.7
    return cnoidal.CnoidalWave(cnoidal.solve_p_for_k(k), k, 0.0)


def test_kdv_limit_roots_are_whitham_speeds(selected):
    lim = kdv_limit_dispersion(selected, 0.0)
    ref = kdv_modulation(selected.k, 0.0, selected.p).speeds("lab")
    assert np.allclose(np.sort_complex(lim.lab_speeds), np.sort_complex(ref), atol=1e-8)


@pytest.mark.parametrize("deltabar", [0.5, 1.0, 2.0])
def test_two_assembly_paths_agree(selected, deltabar):
    a = kdv_limit_dispersion(selected, deltabar, path="lin")
    b = kdv_limit_dispersion(selected, deltabar, path="mod_lin")
    assert np.allclose(a.roots, b.roots, atol=1e-10)
    assert np.allclose(a.cubic / a.cubic[0], b.cubic / b.cubic[0], atol=1e-9)


def test_kdv_limit_simple_roots(selected):
    assert kdv_limit_dispersion(selected, 1.0).multiplicities == [1, 1, 1]


def test_kdv_limit_bad_path(selected):
    with pytest.raises(ValueError):
        kdv_limit_dispersion(selected, 1.0, path="other")


def test_distinguished_limit_converges(selected):
    roots = kdv_limit_dispersion(selected, 1.0).roots
    errs = [
        np.max(np.abs(distinguished_limit_eigenvalues(selected, 1.0, 1j, eps) - roots))
        for eps in (1e-2, 5e-3, 2.5e-3)
    ]
    assert errs[-1] < 1e-4
    assert np.log2(errs[0] / errs[1]) > 1.8 and np.log2(errs[1] / errs[2]) > 1.8


def test_fit_record(fits):
    rec = bloch.fit_record(fits)
    assert [r["branch_id"] for r in rec] == [f.branch_id for f in fits]
    assert set(rec[0]) >= {"lambda0_tilde", "lambda1_tilde", "fit_residual"}
