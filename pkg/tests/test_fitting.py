import numpy as np
import pytest
from scipy import integrate, stats

from lonrec.errors import LonrecError
from lonrec.evalharness.fitting import (
    burr12_mode,
    burr12_pdf,
    fit_burr12,
    fit_weibull,
    histogram,
    weibull_mode,
    weibull_pdf,
)
from oracles import burr12_sample


def test_weibull_pdf_at_one():
    assert weibull_pdf(1.0, 1.0, 1.0) == np.exp(-1.0)


def test_burr12_pdf_at_one():
    assert burr12_pdf(1.0, 1.0, 1.0, 1.0) == 0.25


def test_pdfs_match_scipy():
    x = np.linspace(0.01, 3, 50)
    assert np.allclose(weibull_pdf(x, 2.3, 0.7), stats.weibull_min.pdf(x, 2.3, scale=0.7), rtol=1e-12)
    assert np.allclose(burr12_pdf(x, 3.0, 1.5, 0.8), stats.burr12.pdf(x, 3.0, 1.5, scale=0.8), rtol=1e-12)


def test_pdfs_zero_off_support():
    assert weibull_pdf(-1.0, 2.0, 1.0) == 0.0
    assert burr12_pdf(0.0, 2.0, 1.0, 1.0) == 0.0


def test_burr12_pdf_large_shape_is_finite():
    x = np.array([1e-4, 0.5, 1.0, 8.8, 1e3])
    out = burr12_pdf(x, 400.0, 2.0, 1.0)
    assert np.all(np.isfinite(out)) and out[-1] == 0.0
    assert np.allclose(out[:3], stats.burr12.pdf(x[:3], 400.0, 2.0), rtol=1e-9, atol=1e-300)


def test_modes_are_density_maxima():
    for k, lam in ((2.0, 0.05), (4.5, 1.3)):
        xm = weibull_mode(k, lam)
        assert weibull_pdf(xm, k, lam) >= weibull_pdf(xm * (1 + 1e-4), k, lam)
        assert weibull_pdf(xm, k, lam) >= weibull_pdf(xm * (1 - 1e-4), k, lam)
    for c, k, s in ((3.0, 2.0, 0.01), (1.5, 0.5, 2.0)):
        xm = burr12_mode(c, k, s)
        assert burr12_pdf(xm, c, k, s) >= burr12_pdf(xm * (1 + 1e-4), c, k, s)
        assert burr12_pdf(xm, c, k, s) >= burr12_pdf(xm * (1 - 1e-4), c, k, s)


def test_weibull_recovery():
    rng = np.random.default_rng(0)
    x = 0.05 * rng.weibull(2.0, 10_000)
    fit = fit_weibull(1 - x)
    (k, lam), (se_k, se_lam) = fit.params, fit.stderr
    assert abs(k - 2.0) < 2 * se_k
    assert abs(lam - 0.05) < 2 * se_lam


def test_weibull_matches_scipy_mle():
    rng = np.random.default_rng(1)
    x = 0.01 * rng.weibull(3.0, 500)
    fit = fit_weibull(x, variable="value")
    k, _, lam = stats.weibull_min.fit(x, floc=0)
    assert fit.params[0] == pytest.approx(k, rel=1e-4)
    assert fit.params[1] == pytest.approx(lam, rel=1e-4)


def test_burr12_recovery():
    rng = np.random.default_rng(2)
    x = burr12_sample(3.0, 2.0, 0.01, 10_000, rng)
    fit = fit_burr12(x)
    for est, se, true in zip(fit.params, fit.stderr, (3.0, 2.0, 0.01)):
        assert abs(est - true) < 2 * se


def test_burr12_matches_scipy_likelihood():
    rng = np.random.default_rng(3)
    x = burr12_sample(2.5, 1.2, 1.0, 400, rng)
    fit = fit_burr12(x)
    ours = np.sum(stats.burr12.logpdf(x, fit.params[0], fit.params[1], scale=fit.params[2]))
    c, k, _, s = stats.burr12.fit(x, floc=0)
    theirs = np.sum(stats.burr12.logpdf(x, c, k, scale=s))
    assert ours >= theirs - 1e-6


def test_density_integrates_to_one():
    rng = np.random.default_rng(4)
    wb = fit_weibull(1 - 0.02 * rng.weibull(2.5, 200))
    bu = fit_burr12(burr12_sample(3.0, 2.0, 0.5, 200, rng))
    for fit in (wb, bu):
        total, _ = integrate.quad(fit.pdf, 0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)


def test_widths_are_one_over_e_points():
    rng = np.random.default_rng(5)
    fit = fit_weibull(1 - 0.03 * rng.weibull(2.0, 300))
    peak = fit.pdf(fit.mode)
    assert fit.pdf(fit.mode - fit.width_left) == pytest.approx(peak / np.e, rel=1e-6)
    assert fit.pdf(fit.mode + fit.width_right) == pytest.approx(peak / np.e, rel=1e-6)
    # mapping back to fidelity swaps the sides
    assert fit.f_mode == 1 - fit.mode
    assert fit.err_left == fit.width_right and fit.err_right == fit.width_left


def test_mode_within_data_range():
    rng = np.random.default_rng(6)
    x = burr12_sample(4.0, 1.5, 0.2, 300, rng)
    fit = fit_burr12(x)
    assert x.min() <= fit.mode <= x.max()
    assert fit.width_left >= 0 and fit.width_right >= 0


def test_monotone_density_flagged():
    rng = np.random.default_rng(7)
    x = rng.exponential(0.01, 500) ** 1.5  # Weibull shape below one
    fit = fit_weibull(x, variable="value")
    assert fit.params[0] < 1
    assert not fit.interior_mode
    assert fit.mode == x.min()
    assert fit.width_left == 0.0


def test_identical_values_degenerate():
    fit = fit_weibull(np.full(30, 0.99))
    assert fit.degenerate
    assert fit.f_mode == pytest.approx(0.99)


def test_too_few_samples():
    with pytest.raises(LonrecError):
        fit_weibull(np.linspace(0.9, 0.99, 19))
    with pytest.raises(LonrecError):
        fit_burr12(np.linspace(0.1, 0.5, 5))


def test_histogram_conserves_counts():
    rng = np.random.default_rng(8)
    x = rng.uniform(size=137)
    counts, edges = histogram(x)
    assert counts.sum() == 137 and counts.size == 50
    fit = fit_weibull(1 - 0.02 * rng.weibull(2.0, 80))
    assert fit.histogram.sum() == fit.n == 80
