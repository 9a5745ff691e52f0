import math

import numpy as np
import pytest
import scipy.linalg

from sepcurrent.chain import (
    balance_profile,
    expected_current,
    geometric_grid,
    occupation_mean,
    occupation_profile,
    one_particle_generator,
    rigidity_profile,
    semigroup,
    table_to_csv,
)
from sepcurrent.kernels import (
    Configuration,
    Partition,
    SiteWindow,
    make_heavy_tail,
    make_nearest_neighbor,
    make_random_environment,
    step_configuration,
)

# closed-form oracle for the 2-site unit-rate chain: staying probability
# solves p' = 1 - 2p, p(0) = 1, giving p(t) = (1 + e^(-2t)) / 2
def stay_prob(t, rate=1.0):
    return 0.5 * (1.0 + math.exp(-2.0 * rate * t))


def two_site():
    w = SiteWindow.lattice(0, 1)
    return make_nearest_neighbor(w, 1.0), w


def preset_kernels(lo=-3, hi=3):
    w = SiteWindow.lattice(lo, hi)
    return [
        make_nearest_neighbor(w, 1.0),
        make_heavy_tail(w, 1.5),
        make_random_environment(w, 9, 0.2),
    ]


def test_semigroup_identity_at_zero():
    k, _ = two_site()
    table = semigroup(k, 0.0)
    assert np.allclose(table.probs, np.eye(2), atol=0)
    assert table.accuracy == 0.0


def test_semigroup_two_site_closed_form():
    k, _ = two_site()
    table = semigroup(k, 1.0, tol=1e-12)
    expected = stay_prob(1.0)
    assert expected == pytest.approx(0.5676676416183064, abs=1e-13)
    assert table.prob(0, 0) == pytest.approx(expected, abs=1e-11)
    assert table.prob(0, 1) == pytest.approx(1.0 - expected, abs=1e-11)


def test_semigroup_rows_stochastic():
    for k in preset_kernels():
        table = semigroup(k, 5.0, tol=1e-10)
        sums = table.probs.sum(axis=1)
        assert np.all(sums <= 1.0 + 1e-9)
        assert np.all(sums >= 1.0 - 1e-9)
        assert np.all(table.probs >= -1e-15)


def test_semigroup_matches_dense_expm():
    # independent oracle: Pade-based matrix exponential on the dense generator
    for k in preset_kernels():
        Q = one_particle_generator(k).toarray()
        ref = scipy.linalg.expm(1.7 * Q)
        table = semigroup(k, 1.7, tol=1e-12)
        assert np.max(np.abs(table.probs - ref)) < 1e-10


def test_semigroup_property():
    rng = np.random.default_rng(4)
    for k in preset_kernels():
        t, s = rng.uniform(0.1, 2.0, size=2)
        tol = 1e-10
        lhs = semigroup(k, t + s, tol).probs
        rhs = semigroup(k, t, tol).probs @ semigroup(k, s, tol).probs
        assert np.max(np.abs(lhs - rhs)) <= 10 * tol


def test_semigroup_symmetry():
    for k in preset_kernels():
        p = semigroup(k, 2.0, tol=1e-12).probs
        assert np.max(np.abs(p - p.T)) < 1e-12


def test_occupation_mean_constants():
    k, w = two_site()
    table = semigroup(k, 3.0, tol=1e-12)
    full = Configuration(w, np.array([1, 1]))
    empty = Configuration(w, np.array([0, 0]))
    assert occupation_mean(table, full, 0) == pytest.approx(1.0, abs=1e-10)
    assert occupation_mean(table, empty, 1) == pytest.approx(0.0, abs=1e-12)


def test_occupation_mean_two_site():
    k, w = two_site()
    table = semigroup(k, 1.0, tol=1e-12)
    eta = Configuration(w, np.array([1, 0]))
    expected = 1.0 - stay_prob(1.0)  # = (1 - e^-2)/2 = 0.43233235...
    assert expected == pytest.approx(0.4323323583816936, abs=1e-13)
    assert occupation_mean(table, eta, 1) == pytest.approx(expected, abs=1e-11)
    with pytest.raises(ValueError):
        occupation_mean(table, eta, 99)


def test_occupation_profile_matches_table():
    for k in preset_kernels():
        w = k.window
        eta = step_configuration(w, Partition.split(w, 0))
        table = semigroup(k, 0.8, tol=1e-12)
        prof = occupation_profile(k, eta, 0.8, tol=1e-12)
        for x in w.sites:
            assert prof[w.index(x)] == pytest.approx(
                occupation_mean(table, eta, x), abs=1e-10)


def test_balance_profile_start_and_mixing():
    # at t=0 the chain has not moved; late times mix to uniform, so a
    # half/half split gives 1/2 everywhere (verified at t = 10 n^2)
    w = SiteWindow.lattice(-3, 4)
    part = Partition.split(w, 0)
    k = make_nearest_neighbor(w, 1.0)
    prof = balance_profile(k, part, [0.0, 90.0], tol=1e-12)
    for x in w.sites:
        assert prof[x][0] == pytest.approx(1.0 if x <= 0 else 0.0, abs=1e-12)
        assert prof[x][1] == pytest.approx(0.5, abs=1e-4)


def test_balance_profile_two_site():
    k, w = two_site()
    prof = balance_profile(k, Partition.split(w, 0), [1.0], tol=1e-12)
    assert prof[1][0] == pytest.approx(0.4323323583816936, abs=1e-11)


def test_rigidity_profile():
    k, w = two_site()
    eta = Configuration(w, np.array([1, 0]))
    vals = rigidity_profile(k, eta, [0.0, 1.0], tol=1e-12)
    assert vals[0] == pytest.approx(0.0, abs=1e-12)
    assert vals[1] == pytest.approx(0.4323323583816936, abs=1e-11)
    full = Configuration(w, np.array([1, 1]))
    assert rigidity_profile(k, full, [0.5, 2.0]) == pytest.approx([0.0, 0.0], abs=1e-10)
    with pytest.raises(ValueError, match="vacuum"):
        rigidity_profile(k, Configuration(w, np.array([0, 0])), [1.0])


def test_rigidity_monotone_for_step():
    w = SiteWindow.lattice(-4, 5)
    part = Partition.split(w, 0)
    k = make_nearest_neighbor(w, 1.0)
    eta = step_configuration(w, part)
    vals = rigidity_profile(k, eta, geometric_grid(0.25, 6), tol=1e-12)
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_expected_current_zero_at_zero():
    for k in preset_kernels():
        w = k.window
        part = Partition.split(w, 0)
        eta = step_configuration(w, part)
        assert expected_current(k, eta, part, 0.0) == 0.0


def test_expected_current_two_site():
    k, w = two_site()
    part = Partition.split(w, 0)
    eta = step_configuration(w, part)
    assert expected_current(k, eta, part, 1.0, tol=1e-12) == pytest.approx(
        0.4323323583816936, abs=1e-11)


def test_expected_current_translation_identity():
    # for a step profile on a wide window, the mean current equals the mean
    # positive displacement of a single walker started at the split point
    w = SiteWindow.lattice(-20, 20)
    part = Partition.split(w, 0)
    k = make_nearest_neighbor(w, 1.0)
    eta = step_configuration(w, part)
    t = 4.0
    lhs = expected_current(k, eta, part, t, tol=1e-12)
    table = semigroup(k, t, tol=1e-12)
    row0 = table.probs[w.index(0)]
    rhs = sum(n * row0[w.index(n)] for n in range(1, 21))
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_geometric_grid():
    assert geometric_grid(0.5, 4) == [0.5, 1.0, 2.0, 4.0]
    with pytest.raises(ValueError):
        geometric_grid(0.0, 3)


def test_table_csv_export():
    k, _ = two_site()
    text = table_to_csv(semigroup(k, 0.5))
    lines = text.strip().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1] == "row_site,col_site,prob"
    assert len(lines) == 2 + 4
