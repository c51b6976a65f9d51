import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn
from scipy.stats import kstest

from erm_spectra.errors import EmptyRangeError, FitError
from erm_spectra.spacings import (
    ScanWindow,
    SurmiseFit,
    UnfoldedSpectrum,
    fit_surmise,
    pooled_window_spacings,
    small_spacing_exponent,
    spacings,
    surmise_ab,
    surmise_cdf,
    surmise_pdf,
    surmise_sample,
    unfold,
    windowed_surmise_scan,
)
from erm_spectra.spectra import SpectrumResult


def test_unfold_uniform_grid_is_fixed_point():
    u = unfold(np.arange(1.0, 101.0))
    s = spacings(u)
    assert np.max(np.abs(s - 1.0)) < 1e-6
    assert u.values.size == 100
    assert np.all(np.diff(u.values) >= 0)
    assert u.window == (1.0, 100.0)
    assert u.method.startswith("poly")


def test_unfold_validation():
    with pytest.raises(ValueError):
        unfold(np.arange(10.0))
    with pytest.raises(ValueError):
        unfold(np.arange(100.0)[::-1])
    with pytest.raises(ValueError):
        unfold(np.arange(100.0), estimator="spline")
    with pytest.raises(ValueError):
        unfold(np.arange(100.0), estimator="staircase")


def test_unfold_preserves_order_and_length():
    rng = np.random.Generator(np.random.Philox(key=4))
    lam = np.sort(rng.standard_normal(500) ** 3)
    u = unfold(lam)
    assert u.values.size == lam.size
    assert np.all(np.diff(u.values) >= 0)
    mean_spacing = np.diff(u.values).mean()
    assert mean_spacing == pytest.approx(1.0, abs=1e-6)


def test_unfolded_uniform_draws_are_poisson():
    rng = np.random.Generator(np.random.Philox(key=123))
    lam = np.sort(rng.random(10 ** 4))
    s = spacings(unfold(lam))
    stat = kstest(s, lambda x: 1.0 - np.exp(-x)).statistic
    assert stat < 0.02


def test_staircase_unfolding_against_reference():
    rng = np.random.Generator(np.random.Philox(key=5))
    reference = np.sort(rng.random(10 ** 5))
    lam = np.sort(rng.random(2000))
    u = unfold(lam, estimator="staircase", reference=reference)
    assert np.all(np.diff(u.values) >= 0)
    assert np.diff(u.values).mean() == pytest.approx(1.0, abs=1e-6)
    s = spacings(u)
    stat = kstest(s, lambda x: 1.0 - np.exp(-x)).statistic
    assert stat < 0.05


def test_spacings_basics():
    u = UnfoldedSpectrum(values=np.array([0.0, 1.0, 2.0]), window=(0.0, 2.0),
                         method="manual")
    assert np.array_equal(spacings(u), [1.0, 1.0])
    single = UnfoldedSpectrum(values=np.array([1.0]), window=(1.0, 1.0),
                              method="manual")
    with pytest.raises(ValueError):
        spacings(single)


def test_surmise_special_cases():
    s = np.linspace(0.0, 6.0, 200)
    assert np.allclose(surmise_pdf(0.0, 1.0, s), np.exp(-s), atol=1e-12)
    wigner = 0.5 * math.pi * s * np.exp(-math.pi * s ** 2 / 4)
    assert np.allclose(surmise_pdf(1.0, 2.0, s), wigner, atol=1e-12)
    # semi-Poisson member of the intermediate-statistics family
    assert np.allclose(surmise_pdf(1.0, 1.0, s), 4 * s * np.exp(-2 * s), atol=1e-12)


def test_surmise_brody_special_case():
    def brody_pdf(q, s):
        beta = gamma_fn((q + 2.0) / (q + 1.0)) ** (q + 1.0)
        return (q + 1.0) * beta * s ** q * np.exp(-beta * s ** (q + 1.0))

    s = np.linspace(0.0, 5.0, 101)
    for q in (0.2, 0.7, 1.0):
        assert np.allclose(surmise_pdf(q, q + 1.0, s), brody_pdf(q, s), atol=1e-12)


@pytest.mark.parametrize("q,r", [(0.0, 1.0), (1.0, 2.0), (1.0, 1.0),
                                 (0.5, 1.5), (2.3, 0.8), (-0.5, 1.2)])
def test_surmise_normalization_and_mean(q, r):
    total, _ = quad(lambda s: surmise_pdf(q, r, s), 0, 50, epsabs=1e-12, limit=300)
    mean, _ = quad(lambda s: s * surmise_pdf(q, r, s), 0, 50, epsabs=1e-12, limit=300)
    assert abs(total - 1.0) < 1e-8
    assert abs(mean - 1.0) < 1e-8


def test_surmise_domain_errors():
    with pytest.raises(ValueError):
        surmise_pdf(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        surmise_pdf(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        surmise_pdf(0.0, 1.0, -1.0)


def test_surmise_cdf_matches_pdf_integral():
    for q, r in ((0.0, 1.0), (1.0, 2.0), (0.5, 1.5)):
        for s0 in (0.3, 1.0, 2.5):
            num, _ = quad(lambda s: surmise_pdf(q, r, s), 0, s0, epsabs=1e-12)
            assert surmise_cdf(q, r, s0) == pytest.approx(num, abs=1e-9)


def test_surmise_sampler_matches_cdf():
    draws = surmise_sample(1.0, 2.0, 10 ** 5, seed=3)
    stat = kstest(draws, lambda s: surmise_cdf(1.0, 2.0, s)).statistic
    assert stat < 0.005


@pytest.mark.parametrize("q,r,tol_q,tol_r", [
    (0.0, 1.0, 0.05, 0.1),
    (1.0, 2.0, 0.05, 0.1),
    (1.0, 1.0, 0.05, 0.1),
    (0.5, 1.5, 0.05, 0.1),
])
def test_fit_recovers_synthetic_parameters(q, r, tol_q, tol_r):
    draws = surmise_sample(q, r, 10 ** 5, seed=int(10 * q + 7 * r))
    fit = fit_surmise(draws)
    assert fit.q == pytest.approx(q, abs=tol_q)
    assert fit.r == pytest.approx(r, abs=tol_r)
    # derived constants reproduce the closed forms
    a, b = surmise_ab(fit.q, fit.r)
    assert fit.a == pytest.approx(a, abs=1e-10)
    assert fit.b == pytest.approx(b, abs=1e-10)
    assert fit.goodness < 0.02
    assert fit.covariance.shape == (2, 2)


def test_fitted_density_is_normalized_with_unit_mean():
    draws = surmise_sample(0.8, 1.7, 3 * 10 ** 4, seed=2)
    fit = fit_surmise(draws)
    total, _ = quad(lambda s: surmise_pdf(fit.q, fit.r, s), 0, 50, epsabs=1e-12)
    mean, _ = quad(lambda s: s * surmise_pdf(fit.q, fit.r, s), 0, 50, epsabs=1e-12)
    assert abs(total - 1.0) < 1e-6
    assert abs(mean - 1.0) < 1e-6


def test_fit_maximum_likelihood_option():
    draws = surmise_sample(1.0, 2.0, 10 ** 5, seed=14)
    fit = fit_surmise(draws, objective="ml")
    assert fit.q == pytest.approx(1.0, abs=0.05)
    assert fit.r == pytest.approx(2.0, abs=0.1)
    assert fit.objective == "ml"


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit_surmise(np.ones(100))
    with pytest.raises(ValueError):
        fit_surmise(np.array([1.0] * 300 + [-1.0]))
    with pytest.raises(ValueError):
        fit_surmise(surmise_sample(1, 2, 1000, 1), objective="entropy")


def test_small_spacing_exponent_synthetic():
    wigner = surmise_sample(1.0, 2.0, 2 * 10 ** 5, seed=8)
    q_w, err_w = small_spacing_exponent(wigner)
    assert q_w == pytest.approx(1.0, abs=0.1)

    poisson = surmise_sample(0.0, 1.0, 2 * 10 ** 5, seed=9)
    q_p, err_p = small_spacing_exponent(poisson)
    assert q_p == pytest.approx(0.0, abs=0.1)


def test_small_spacing_exponent_errors():
    with pytest.raises(ValueError):
        small_spacing_exponent(np.ones(100))
    sample = surmise_sample(1.0, 2.0, 2 * 10 ** 4, seed=10)
    with pytest.raises(EmptyRangeError):
        small_spacing_exponent(sample, s0_grid=np.array([1e-2, 1e-5]))
    with pytest.raises(ValueError):
        small_spacing_exponent(sample, s0_grid=np.array([0.1, 0.2]))


def _goe_spectra(n, realizations, seed0):
    specs = []
    for i in range(realizations):
        rng = np.random.Generator(np.random.Philox(key=seed0 + i))
        g = rng.standard_normal((n, n))
        h = (g + g.T) / math.sqrt(2 * n)
        w = np.sort(np.linalg.eigvalsh(h))
        specs.append(SpectrumResult(eigenvalues=w, eigenvectors=None,
                                    source_seed=seed0 + i, n_atoms=n,
                                    cooperativeness=1.0))
    return specs


def test_windowed_scan_on_goe():
    specs = _goe_spectra(600, 16, 240)
    windows = windowed_surmise_scan(specs, window_size=200)
    assert len(windows) == 5
    centers = [w.center for w in windows]
    assert centers == sorted(centers)
    assert all(w.flag in ("ok", "poor_fit", "fit_failed") for w in windows)
    mid = windows[2]
    assert mid.flag == "ok"
    assert mid.fit.q == pytest.approx(1.0, abs=0.3)
    assert mid.fit.r == pytest.approx(2.0, abs=0.6)


def test_windowed_scan_validation():
    specs = _goe_spectra(200, 2, 60)
    with pytest.raises(ValueError):
        windowed_surmise_scan([])
    with pytest.raises(ValueError):
        windowed_surmise_scan(specs, window_size=300)
    mixed = specs + _goe_spectra(100, 1, 70)
    with pytest.raises(ValueError):
        windowed_surmise_scan(mixed)


def test_pooled_window_spacings_counts():
    specs = _goe_spectra(400, 3, 80)
    pooled = pooled_window_spacings(specs, 100, 300)
    assert pooled.size == 3 * 199
    assert np.all(pooled >= 0)


def test_degenerate_window_is_flagged_not_dropped():
    # constant eigenvalues make the counting function span zero -> fit_failed
    w = np.concatenate([np.full(120, 1.0), np.linspace(2, 3, 80)])
    spec = SpectrumResult(eigenvalues=np.sort(w), eigenvectors=None,
                          source_seed=0, n_atoms=200, cooperativeness=1.0)
    windows = windowed_surmise_scan([spec], window_size=100)
    flags = {win.flag for win in windows}
    assert "fit_failed" in flags
    assert len(windows) == 3
