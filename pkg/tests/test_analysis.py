import math

import numpy as np
import pytest
import scipy.stats

from sepcurrent.analysis import (
    GrowthFit,
    StepCDF,
    empirical_law,
    growth_fit,
    ks_metric,
    ks_to_normal,
    levy_metric,
    levy_to_normal,
    norm_cdf,
    normality_report,
    rate_regression,
    tv_distance,
)
from sepcurrent.exact import SumLaw
from sepcurrent.rayleigh import bernoulli_sum_pmf


def brute_levy(f_eval, g_eval, xs, eps_grid):
    """Corridor-definition oracle on a dense grid of x and epsilon."""
    for eps in eps_grid:
        lower = f_eval(xs - eps) - eps
        upper = f_eval(xs + eps) + eps
        g = g_eval(xs)
        if np.all(lower <= g + 1e-12) and np.all(g <= upper + 1e-12):
            return eps
    return eps_grid[-1]


def test_norm_cdf_accuracy():
    xs = np.linspace(-8, 8, 2001)
    ref = scipy.stats.norm.cdf(xs)
    assert np.max(np.abs(norm_cdf(xs) - ref)) <= 1e-7
    assert norm_cdf(0.0) == pytest.approx(0.5, abs=1e-7)
    assert norm_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-7)


def test_step_cdf_eval():
    cdf = StepCDF(np.array([0.0, 1.0]), np.array([0.4, 1.0]))
    assert cdf.eval(-0.5) == 0.0
    assert cdf.eval(0.0) == 0.4
    assert cdf.eval_left(0.0) == 0.0
    assert cdf.eval(0.5) == 0.4
    assert cdf.eval_left(1.0) == 0.4
    assert cdf.eval(2.0) == 1.0


def test_ks_exact_bernoulli_half():
    # normalized fair coin has atoms at -1 and +1; the sup against the normal
    # is Phi(1) - 1/2 at the jump
    rep = normality_report(SumLaw(0, np.array([0.5, 0.5])))
    assert rep.ks_distance == pytest.approx(0.3413447460685429, abs=1e-7)
    assert rep.levy_distance <= rep.ks_distance
    assert rep.n_samples == 0


def test_ks_binomial_100_under_esseen_ceiling():
    pmf = bernoulli_sum_pmf([0.5] * 100)
    rep = normality_report(SumLaw(0, pmf))
    # Berry-Esseen ceiling with the classical constant: 0.56/sqrt(25)
    assert rep.ks_distance <= 0.5600 * 25.0 ** -0.5
    assert rep.ks_distance <= 0.112


def test_ks_normal_pseudo_samples():
    rng = np.random.default_rng(314159)
    samples = rng.standard_normal(100_000)
    rep = normality_report(samples)
    # Kolmogorov 0.99 quantile is 1.63/sqrt(n) ~ 0.0052 for the true normal;
    # self-normalization keeps the same order
    assert rep.ks_distance <= 0.006
    assert rep.n_samples == samples.size


def test_levy_identical_cdfs():
    cdf = StepCDF.from_atoms([0.0, 1.0, 3.0], [0.2, 0.3, 0.5])
    assert levy_metric(cdf, cdf) <= 1e-4


def test_levy_two_offset_unit_steps():
    # corridor definition: the flat gap between unit steps at 0 and delta
    # forces eps >= delta, so the distance equals delta (here 0.2)
    delta = 0.2
    f = StepCDF(np.array([0.0]), np.array([1.0]))
    g = StepCDF(np.array([delta]), np.array([1.0]))
    d = levy_metric(f, g)
    assert d == pytest.approx(delta, abs=2e-4)
    # brute-force corridor oracle agrees
    xs = np.linspace(-1.0, 1.5, 2001)
    oracle = brute_levy(lambda x: (x >= 0).astype(float),
                        lambda x: (x >= delta).astype(float),
                        xs, np.arange(0.0, 1.0, 5e-4))
    assert d == pytest.approx(oracle, abs=2e-3)


def test_levy_symmetry_and_domination():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n1, n2 = rng.integers(1, 8, size=2)
        f = StepCDF.from_atoms(np.sort(rng.normal(size=n1)), rng.dirichlet(np.ones(n1)))
        g = StepCDF.from_atoms(np.sort(rng.normal(size=n2)), rng.dirichlet(np.ones(n2)))
        d_fg = levy_metric(f, g)
        d_gf = levy_metric(g, f)
        assert d_fg == pytest.approx(d_gf, abs=2e-4)
        assert d_fg <= ks_metric(f, g) + 2e-4


def test_levy_to_normal_matches_brute_force():
    cdf = StepCDF.from_atoms([-1.2, -0.1, 0.4, 2.0], [0.3, 0.3, 0.2, 0.2])
    d = levy_to_normal(cdf)
    xs = np.linspace(-9, 9, 4001)
    oracle = brute_levy(norm_cdf, cdf.eval, xs, np.arange(0.0, 1.0, 5e-4))
    assert d == pytest.approx(oracle, abs=2e-3)


def test_ks_metric_two_steps():
    f = StepCDF(np.array([0.0]), np.array([1.0]))
    g = StepCDF(np.array([0.2]), np.array([1.0]))
    assert ks_metric(f, g) == pytest.approx(1.0)


def test_tv_distance():
    a = SumLaw(0, np.array([0.5, 0.5]))
    b = SumLaw(0, np.array([0.25, 0.75]))
    assert tv_distance(a, b) == pytest.approx(0.25)
    c = SumLaw(5, np.array([1.0]))
    assert tv_distance(a, c) == pytest.approx(1.0)
    assert tv_distance(a, a) == 0.0


def test_normality_report_zero_variance():
    with pytest.raises(ValueError, match="variance"):
        normality_report(SumLaw(3, np.array([1.0])))


def test_normality_report_deterministic():
    pmf = bernoulli_sum_pmf([0.3, 0.5, 0.7])
    r1 = normality_report(SumLaw(-1, pmf))
    r2 = normality_report(SumLaw(-1, pmf))
    assert r1 == r2


def test_growth_fit_exact_powers():
    t = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = growth_fit(t, t)
    assert fit.log_log_slope == pytest.approx(1.0, abs=1e-12)
    assert fit.slope_stderr == pytest.approx(0.0, abs=1e-10)
    fit2 = growth_fit(t, np.sqrt(t))
    assert fit2.log_log_slope == pytest.approx(0.5, abs=1e-12)
    assert isinstance(fit, GrowthFit)


def test_growth_fit_validation():
    t = np.array([1.0, 2.0, 4.0, 8.0])
    with pytest.raises(ValueError, match="positive values"):
        growth_fit(t, np.array([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(ValueError, match="at least 4"):
        growth_fit(t[:3], t[:3])
    with pytest.raises(ValueError, match="strictly increasing"):
        growth_fit(np.array([1.0, 1.0, 2.0, 3.0]), np.ones(4))


def _fake_report(levy):
    from sepcurrent.analysis import NormalityReport

    return NormalityReport(n_samples=1000, mean=0.0, variance=1.0,
                           ks_distance=levy, levy_distance=levy)


def test_rate_regression_exact_envelope():
    v = np.array([1.0, 4.0, 16.0, 64.0])
    reports = [(float(i), _fake_report(0.3 * vv ** -0.5)) for i, vv in enumerate(v)]
    fitted_c, ok = rate_regression(reports, v)
    assert ok
    assert fitted_c == pytest.approx(0.3, rel=1e-9)


def test_rate_regression_flags_stalled_distances():
    v = np.array([1.0, 4.0, 16.0, 64.0])
    reports = [(float(i), _fake_report(0.25)) for i in range(4)]
    _, ok = rate_regression(reports, v)
    assert not ok


def test_rate_regression_validation():
    v = np.array([1.0, 1.0, 1.0, 1.0])
    reports = [(float(i), _fake_report(0.1)) for i in range(4)]
    with pytest.raises(ValueError):
        rate_regression(reports, v)
    with pytest.raises(ValueError):
        rate_regression(reports[:3], np.array([1.0, 2.0, 3.0]))
