import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepcurrent.exact import SumLaw, current_law, full_law, variance_current_exact
from sepcurrent.kernels import Partition, SiteWindow, make_nearest_neighbor, step_configuration
from sepcurrent.rayleigh import (
    ESSEEN_CONSTANT,
    GenPoly,
    bernoulli_decompose,
    bernoulli_sum_pmf,
    certify_real_rooted,
    decomposition_to_json,
    esseen_rate,
    genpoly_from_sumlaw,
    negative_association_check,
)

M1 = 0.5 * (1.0 - math.exp(-2.0))  # 2-site step current mean at t=1


def six_site_law(t=1.0):
    w = SiteWindow.lattice(-2, 3)
    k = make_nearest_neighbor(w, 1.0)
    part = Partition.split(w, 0)
    eta = step_configuration(w, part)
    return k, eta, part, current_law(full_law(k, eta, t, tol=1e-12), part)


def test_genpoly_point_mass():
    poly = genpoly_from_sumlaw(SumLaw(0, np.array([1.0])))
    assert poly.degree == 0
    assert poly(1.0) == pytest.approx(1.0)


def test_genpoly_bernoulli_and_shift():
    poly = genpoly_from_sumlaw(SumLaw(-1, np.array([1 - 0.3, 0.3])))
    assert poly.coeffs.tolist() == [0.7, 0.3]
    assert poly.shift == 1


def test_genpoly_two_fair_coins():
    poly = GenPoly(np.array([0.25, 0.5, 0.25]))
    cert = certify_real_rooted(poly)
    assert cert.ok
    assert np.allclose(sorted(cert.roots.real), [-1.0, -1.0], atol=1e-7)
    assert cert.max_im <= 1e-7


def test_genpoly_validation():
    with pytest.raises(ValueError):
        GenPoly(np.array([0.5, -0.1, 0.6]))
    with pytest.raises(ValueError):
        GenPoly(np.array([0.5, 0.4]))
    # dust-level negatives are clamped
    poly = GenPoly(np.array([0.5, -1e-13, 0.5 + 1e-13]))
    assert poly.coeffs[1] == 0.0


def test_certification_rejects_complex_roots():
    # pmf (1/2, 0, 1/2) has generating polynomial (1 + z^2)/2 with roots +-i
    poly = GenPoly(np.array([0.5, 0.0, 0.5]))
    cert = certify_real_rooted(poly)
    assert not cert.ok
    assert cert.max_im == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError, match="not real-rooted"):
        bernoulli_decompose(poly)


def test_certification_requires_degree():
    with pytest.raises(ValueError, match="degree"):
        certify_real_rooted(GenPoly(np.array([1.0])))


def test_decompose_single_bernoulli():
    poly = GenPoly(np.array([1 - M1, M1]))
    dec = bernoulli_decompose(poly)
    assert dec.params.tolist() == pytest.approx([M1], abs=1e-12)
    assert dec.residual <= 1e-12


def test_decompose_two_fair_coins():
    dec = bernoulli_decompose(GenPoly(np.array([0.25, 0.5, 0.25])))
    assert dec.params.tolist() == pytest.approx([0.5, 0.5], abs=1e-7)
    assert dec.residual <= 1e-10


def test_decompose_peels_deterministic_factor():
    # a leading zero coefficient is a forced success: p = 1
    poly = GenPoly(np.array([0.0, 0.6, 0.4]))
    dec = bernoulli_decompose(poly)
    assert dec.params.tolist() == pytest.approx([0.4, 1.0], abs=1e-10)
    assert dec.mean() == pytest.approx(1.4, abs=1e-10)
    assert dec.variance() == pytest.approx(0.24, abs=1e-10)


def test_decompose_six_site_current_variance():
    k, eta, part, law = six_site_law(1.0)
    dec = bernoulli_decompose(genpoly_from_sumlaw(law))
    var = variance_current_exact(k, eta, part, 1.0, tol=1e-12)
    assert dec.residual <= 1e-8
    assert dec.variance() == pytest.approx(var, abs=1e-6)
    assert dec.mean() + law.support_offset == pytest.approx(law.mean(), abs=1e-8)


def test_moment_identities_hold_for_decompositions():
    for t in (0.1, 1.0, 5.0):
        _, _, _, law = six_site_law(t)
        poly = genpoly_from_sumlaw(law)
        dec = bernoulli_decompose(poly)
        assert dec.mean() == pytest.approx(poly.mean(), abs=1e-8)
        assert dec.variance() == pytest.approx(poly.variance(), abs=1e-6)


def test_esseen_rate_values():
    dec = bernoulli_decompose(GenPoly(np.array([0.25, 0.5, 0.25])))
    assert esseen_rate(dec) == pytest.approx(math.sqrt(2.0), rel=1e-9)
    # n fair coins: rate sqrt(4/n), halving when n quadruples (rate formula
    # only; root extraction cannot separate an n-fold repeated root)
    from sepcurrent.rayleigh import BernoulliDecomposition

    for n in (16, 64):
        dec_n = BernoulliDecomposition(np.full(n, 0.5), np.full(n, -1.0), 0.0, 0)
        assert esseen_rate(dec_n) == pytest.approx(math.sqrt(4.0 / n), rel=1e-12)
    # the 2-site current at t=1 is Bernoulli(M1)
    dec2 = bernoulli_decompose(GenPoly(np.array([1 - M1, M1])))
    v = M1 * (1 - M1)
    assert esseen_rate(dec2) == pytest.approx(v ** -0.5, rel=1e-12)
    assert v ** -0.5 == pytest.approx(2.0185711385668568, abs=1e-12)


def test_esseen_rate_degenerate():
    dec = bernoulli_decompose(GenPoly(np.array([0.0, 1.0])))  # deterministic 1
    assert dec.variance() == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError, match="degenerate"):
        esseen_rate(dec)
    assert 0.0 < ESSEEN_CONSTANT < 1.0


def test_roundtrip_fixed_cases():
    for params in ([0.3], [0.2, 0.8], [0.1, 0.5, 0.9], [0.42, 0.42],
                   [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95]):
        pmf = bernoulli_sum_pmf(params)
        dec = bernoulli_decompose(GenPoly(pmf))
        assert np.allclose(np.sort(dec.params), np.sort(params), atol=1e-6)
        assert dec.residual <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=20))
def test_roundtrip_property(params):
    # well-separated parameters round-trip to 1e-6; root extraction cannot
    # resolve coincident roots that finely, so cluster them first
    params = sorted(params)
    filtered = []
    for p in params:
        if not filtered or p - filtered[-1] >= 1e-4:
            filtered.append(p)
    pmf = bernoulli_sum_pmf(filtered)
    dec = bernoulli_decompose(GenPoly(pmf), tol_im=1e-6)
    assert np.allclose(dec.params, filtered, atol=1e-6)


def test_negative_association_trivial_and_pair():
    k, eta, part, _ = six_site_law()
    fl = full_law(k, eta, 0.7, tol=1e-12)
    sites = k.window.sites
    # threshold 0 makes the first indicator constant 1
    lhs, rhs = negative_association_check(fl, ((sites[0],), 0), ((sites[3],), 1))
    assert lhs == pytest.approx(rhs, abs=1e-12)
    # threshold-1 singletons reduce to the covariance sign
    lhs2, rhs2 = negative_association_check(fl, ((sites[1],), 1), ((sites[4],), 1))
    assert lhs2 <= rhs2 + 1e-12


def test_negative_association_count_thresholds():
    k, eta, part, _ = six_site_law()
    fl = full_law(k, eta, 0.7, tol=1e-12)
    sites = k.window.sites
    lhs, rhs = negative_association_check(fl, (sites[:3], 1), (sites[3:], 2))
    assert lhs <= rhs + 1e-10


def test_negative_association_rejects_overlap():
    k, eta, part, _ = six_site_law()
    fl = full_law(k, eta, 0.5)
    with pytest.raises(ValueError, match="disjoint"):
        negative_association_check(fl, ((0, 1), 1), ((1, 2), 1))


def test_decomposition_json():
    dec = bernoulli_decompose(GenPoly(np.array([0.25, 0.5, 0.25])))
    doc = json.loads(decomposition_to_json(dec))
    assert doc["schema_version"] == 1
    assert doc["params"] == pytest.approx([0.5, 0.5], abs=1e-7)
    assert doc["esseen_constant"] == ESSEEN_CONSTANT
