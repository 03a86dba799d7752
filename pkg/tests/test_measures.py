import math

import numpy as np
import pytest

from yulepaint import measures, rngtools
from yulepaint.errors import DomainError
from yulepaint.measures import (AtomGammaMixture, EmpiricalSample, ExpMixture,
                                cdf, convolve_self, gamma_mixture_cdf,
                                ks_critical_value, ks_distance, ks_two_sample,
                                quantile, sample, shift, shift_cdf)


def test_cdf_closed_form():
    m = ExpMixture(0.25, 1.5)
    x = 0.7
    assert cdf(m, x) == pytest.approx(0.25 + 0.75 * (1 - math.exp(-1.5 * x)),
                                      abs=1e-15)
    assert cdf(m, 0.0) == pytest.approx(0.25)


def test_cdf_rate_zero_boundary():
    m = ExpMixture(0.4, 0.0)
    # degenerate family: the continuous part escapes every compact
    assert cdf(m, 100.0) == pytest.approx(0.4)
    with pytest.raises(DomainError):
        quantile(m, 0.5)
    with pytest.raises(DomainError):
        convolve_self(m)


def test_quantile_inverts_cdf():
    m = ExpMixture(0.3, 2.0)
    for u in (0.0, 0.1, 0.3, 0.31, 0.7, 0.99):
        assert cdf(m, quantile(m, u)) >= u - 1e-12
    for x in (0.0, 0.2, 1.0, 4.0):
        assert quantile(m, cdf(m, x)) <= x + 1e-12


def test_convolution_exact_weights():
    m = ExpMixture(0.2, 3.0)
    g = convolve_self(m)
    assert g.atom_weight == pytest.approx(0.04, abs=1e-15)
    weights = {(shape): w for w, shape, _ in g.components}
    assert weights[1] == pytest.approx(2 * 0.2 * 0.8, abs=1e-15)
    assert weights[2] == pytest.approx(0.8 ** 2, abs=1e-15)
    assert g.mean() == pytest.approx(2 * m.mean(), abs=1e-12)


def test_convolution_cdf_matches_numerical():
    # CDF of X+X' via numerical convolution of the density on a fine grid
    m = ExpMixture(0.3, 1.0)
    g = convolve_self(m)
    x = 1.3
    from scipy.integrate import quad
    dens = lambda y: (1 - m.p) * m.rate * math.exp(-m.rate * y)
    inner = lambda y: dens(y) * cdf(m, x - y)
    val, _ = quad(inner, 0.0, x)
    expected = m.p * cdf(m, x) + val
    assert gamma_mixture_cdf(g, x) == pytest.approx(expected, abs=1e-9)


def test_shift_closed_form_agrees_with_shift_cdf():
    g = convolve_self(ExpMixture(0.15, 0.8))
    for s in (0.0, 0.4, 1.7):
        h = shift(g, s)
        for x in (0.0, 0.3, 1.1, 5.0):
            if x == 0.0:
                assert h.atom_weight == pytest.approx(shift_cdf(g, s, 0.0),
                                                      abs=1e-12)
            else:
                assert gamma_mixture_cdf(h, x) == pytest.approx(
                    shift_cdf(g, s, x), abs=1e-12)


def test_shift_mass_conserved():
    g = convolve_self(ExpMixture(0.15, 0.8))
    h = shift(g, 2.3)
    total = h.atom_weight + sum(w for w, _, _ in h.components)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_sampling_matches_law():
    m = ExpMixture(0.35, 1.2)
    rng = rngtools.master_stream(123)
    v = sample(m, rng, size=10 ** 5)
    s = EmpiricalSample.from_values(v, seed=123)
    assert ks_distance(s, m) < ks_critical_value(10 ** 5, level=0.01)
    # atom hit exactly, not approximately
    zero_frac = np.mean(v == 0.0)
    assert abs(zero_frac - 0.35) < 3 * math.sqrt(0.35 * 0.65 / 10 ** 5)


def test_ks_distance_atom_handling():
    # sample that is exactly the model's own quantiles should score tiny
    m = ExpMixture(0.2, 1.0)
    u = (np.arange(2000) + 0.5) / 2000
    s = EmpiricalSample.from_values(quantile(m, u))
    assert ks_distance(s, m) < 1.5e-3
    # all-zero sample against an atomless law scores 1
    s0 = EmpiricalSample(np.zeros(10))
    assert ks_distance(s0, ExpMixture(0.0, 1.0)) == pytest.approx(1.0)


def test_ks_two_sample_basics():
    a = EmpiricalSample(np.array([0.0, 1.0, 2.0]))
    b = EmpiricalSample(np.array([0.0, 1.0, 2.0]))
    assert ks_two_sample(a, b) == 0.0
    c = EmpiricalSample(np.array([10.0, 11.0, 12.0]))
    assert ks_two_sample(a, c) == 1.0


def test_empirical_sample_validation():
    with pytest.raises(DomainError):
        EmpiricalSample(np.array([1.0, 0.5]))
    with pytest.raises(DomainError):
        EmpiricalSample(np.array([-1.0, 0.5]))
    with pytest.raises(DomainError):
        ExpMixture(1.2, 1.0)
    with pytest.raises(DomainError):
        ExpMixture(0.2, -1.0)
    with pytest.raises(DomainError):
        AtomGammaMixture(0.5, ((0.6, 1, 1.0),))  # mass 1.1


def test_ks_critical_values():
    assert ks_critical_value(100, level=0.01) == pytest.approx(0.163)
    assert ks_critical_value(100, 100, level=0.05) == pytest.approx(
        1.36 * math.sqrt(2 / 100))
