import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mexneedlets.correlation import CorrelationQuery, correlation
from mexneedlets.cubature import build_grid
from mexneedlets.errors import DegenerateError, ValidationError
from mexneedlets.harmonics import FOUR_PI, SphericalPoint, angular_distance, spherical_harmonic
from mexneedlets.kernels import MexicanKernel, NPWKernel
from mexneedlets.simulation import (
    HarmonicCoefficients,
    RingSynthesizer,
    _Sampler,
    _synthesize_points,
    monte_carlo_correlation,
    needlet_coefficients_harmonic,
    needlet_coefficients_quadrature,
    packed_index,
    pearson_jackknife,
    sample_alm,
    simulate_coefficients,
    synthesize_field,
    write_beta_csv,
)
from mexneedlets.spectra import AlphaRegular, Tabulated

S3 = AlphaRegular(3.0)
MEX2 = MexicanKernel(2.0, 2)


def test_sampling_deterministic_and_structured():
    a = sample_alm(S3, 20, seed=5)
    b = sample_alm(S3, 20, seed=5)
    np.testing.assert_array_equal(a.alm, b.alm)
    c = sample_alm(S3, 20, seed=5, replicate=1)
    assert not np.array_equal(a.alm, c.alm)
    assert a.get(0, 0) == 0
    for l in range(1, 21):
        assert a.get(l, 0).imag == 0.0
    assert a.get(4, -3) == pytest.approx(-np.conj(a.get(4, 3)))


def test_sampling_moments():
    R = 10_000
    sam = _Sampler(S3, 6)
    A = sam.many(3, range(R))
    x = A[:, packed_index(6, 4, 2)]
    m2 = np.abs(x) ** 2
    assert abs(m2.mean() - 4**-3) <= 3 * m2.std(ddof=1) / math.sqrt(R)
    for part in (x.real, x.imag):
        assert abs(part.mean()) <= 3 * part.std(ddof=1) / math.sqrt(R)
    x0 = A[:, packed_index(6, 3, 0)].real
    assert abs((x0**2).mean() - 3**-3) <= 3 * (x0**2).std(ddof=1) / math.sqrt(R)


def test_constant_field():
    c = HarmonicCoefficients.zeros(3)
    alm = c.alm.copy()
    alm[0] = 2.5
    vals = synthesize_field(HarmonicCoefficients(3, alm), [SphericalPoint(0.3, 1.0), SphericalPoint(2.0, 5.0)])
    np.testing.assert_allclose(vals, 2.5 / math.sqrt(FOUR_PI), rtol=1e-15)


def test_synthesis_matches_explicit_sum():
    c = sample_alm(S3, 6, seed=1)
    pt = SphericalPoint(0.7, 2.1)
    explicit = sum(
        c.get(l, m) * spherical_harmonic(l, m, pt.theta, pt.phi) for l in range(7) for m in range(-l, l + 1)
    )
    assert abs(explicit.imag) < 1e-12
    assert synthesize_field(c, [pt])[0] == pytest.approx(explicit.real, abs=1e-12)


def test_antipodal_dipole():
    c = sample_alm(Tabulated((1.0,)), 1, seed=2)
    th, ph = 0.8, 0.4
    v = synthesize_field(c, [SphericalPoint(th, ph), SphericalPoint(math.pi - th, ph + math.pi)])
    assert v[0] == pytest.approx(-v[1], abs=1e-14)


def test_point_variance_matches_addition_theorem():
    R, L = 4000, 12
    A = _Sampler(S3, L).many(11, range(R))
    v = _synthesize_points(A, L, [1.1], [0.3])[:, 0]
    target = sum((2 * l + 1) * l**-3.0 for l in range(1, L + 1)) / FOUR_PI
    se = (v**2).std(ddof=1) / math.sqrt(R)
    assert abs((v**2).mean() - target) <= 3 * se


def test_isotropy_of_covariance():
    R, L = 4000, 10
    A = _Sampler(S3, L).many(12, range(R))
    # pair one along a parallel, pair two along a meridian at the same separation
    th = np.array([2.0, 2.0, 0.5, 0.0])
    ph = np.array([0.2, 0.6, 1.0, 1.0])
    th[3] = 0.5 + angular_distance(th[0], ph[0], th[1], ph[1])
    v = _synthesize_points(A, L, th, ph)
    diff = v[:, 0] * v[:, 1] - v[:, 2] * v[:, 3]
    assert abs(diff.mean()) <= 3 * diff.std(ddof=1) / math.sqrt(R)


@settings(max_examples=12, deadline=None)
@given(st.integers(1, 30), st.integers(1, 40), st.integers(0, 1000))
def test_ring_synthesis_matches_direct(l_max, degree, seed):
    g = build_grid(2.0, 0, exact_degree=degree)
    c = sample_alm(S3, l_max, seed)
    fast = RingSynthesizer(g, l_max).synthesize(c.alm[None])[0]
    np.testing.assert_allclose(fast, synthesize_field(c, g), atol=1e-12)


def test_harmonic_coefficients_single_multipole():
    L, j = 3, 1.0
    k = MexicanKernel(2.0, 1)
    spec = Tabulated((1e-300, 1e-300, 1.0))
    c = sample_alm(spec, 60, seed=4)
    alm = np.where(np.arange(c.alm.size) == 0, 0, c.alm)
    only = np.zeros_like(alm)
    for m in range(L + 1):
        only[packed_index(60, L, m)] = alm[packed_index(60, L, m)]
    c = HarmonicCoefficients(60, only)
    g = build_grid(2.0, j)
    f = needlet_coefficients_harmonic(c, k, g, j)
    expect = np.sqrt(g.weights) * k.weight(L, j) * synthesize_field(c, g)
    np.testing.assert_allclose(f.values, expect, atol=1e-14)


def test_harmonic_zero_and_band_check():
    g = build_grid(2.0, 2)
    f = needlet_coefficients_harmonic(HarmonicCoefficients.zeros(40), MEX2, g, 2)
    assert np.all(f.values == 0)
    with pytest.raises(ValidationError, match="truncation degree"):
        needlet_coefficients_harmonic(HarmonicCoefficients.zeros(10), MEX2, g, 2)


def test_quadrature_paths_agree_and_linear():
    L, j = 24, 2
    fine = build_grid(2.0, 0, exact_degree=2 * L + 1)
    an = build_grid(2.0, j)
    syn = RingSynthesizer(fine, L)
    c1, c2 = sample_alm(S3, L, 1), sample_alm(S3, L, 2)
    q = [needlet_coefficients_quadrature(syn.synthesize(c.alm[None])[0], fine, MEX2, j, an, field_lmax=L)
         for c in (c1, c2, c1 + c2)]
    h = needlet_coefficients_harmonic(c1, MEX2, an, j, cutoff=5)
    assert np.max(np.abs(h.values - q[0].values)) <= 1e-10 * np.max(np.abs(h.values))
    np.testing.assert_allclose(q[2].values, q[0].values + q[1].values, atol=1e-13)


def test_quadrature_constant_field_and_grid_check():
    fine = build_grid(2.0, 0, exact_degree=41)
    an = build_grid(2.0, 1)
    f = needlet_coefficients_quadrature(np.full(fine.size, 3.0), fine, MEX2, 1, an, field_lmax=20)
    assert np.max(np.abs(f.values)) < 1e-14
    with pytest.raises(ValidationError, match="fine grid"):
        needlet_coefficients_quadrature(np.zeros(fine.size), fine, MEX2, 1, an, field_lmax=30)


def test_npw_coefficients():
    k = NPWKernel(2.0)
    g = build_grid(2.0, 2)
    c = sample_alm(S3, k.truncation_degree(2), 3)
    f = needlet_coefficients_harmonic(c, k, g, 2)
    assert np.all(np.isfinite(f.values)) and np.any(f.values != 0)


def test_simulation_independent_of_threads():
    g = build_grid(2.0, 3)
    a = simulate_coefficients(S3, MEX2, 3, g, 40, seed=9, threads=1)
    b = simulate_coefficients(S3, MEX2, 3, g, 40, seed=9, threads=4)
    np.testing.assert_array_equal(a, b)
    # a replicate's coefficients do not depend on the replicate count
    c = simulate_coefficients(S3, MEX2, 3, g, 17, seed=9)
    np.testing.assert_array_equal(a[:17], c)


def test_pearson_jackknife_matches_brute_force():
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    y = 0.5 * x + rng.normal(size=50)
    r, se = pearson_jackknife(x, y)
    assert r == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-13)
    loo = np.array([np.corrcoef(np.delete(x, i), np.delete(y, i))[0, 1] for i in range(50)])
    assert se == pytest.approx(math.sqrt(49 / 50 * np.sum((loo - loo.mean()) ** 2)), rel=1e-10)
    with pytest.raises(DegenerateError):
        pearson_jackknife(np.ones(10), y[:10])


def test_monte_carlo_correlation_basics():
    pt = SphericalPoint(1.0, 1.0)
    mc = monte_carlo_correlation(S3, MEX2, 3, (pt, pt), 200, seed=1)
    assert mc.corr == pytest.approx(1.0, abs=1e-12)
    p2 = SphericalPoint(1.0, 1.3)
    a = monte_carlo_correlation(S3, MEX2, 3, (pt, p2), 300, seed=4, threads=1)
    b = monte_carlo_correlation(S3, MEX2, 3, (pt, p2), 300, seed=4, threads=3)
    assert a.corr == b.corr and a.se == b.se
    with pytest.raises(ValidationError):
        monte_carlo_correlation(S3, MEX2, 3, (pt, p2), 50, seed=1)


def test_monte_carlo_against_series():
    p1, p2 = SphericalPoint(math.pi / 2, 0.0), SphericalPoint(math.pi / 2, 0.15)
    mc = monte_carlo_correlation(S3, MEX2, 4, (p1, p2), 1000, seed=21)
    an = correlation(CorrelationQuery(MEX2, S3, 4, 4, 0.15))
    assert abs(mc.corr - an) <= 3 * mc.se


def test_beta_csv(tmp_path):
    p = tmp_path / "b.csv"
    write_beta_csv(p, np.arange(6.0).reshape(2, 3), "dig")
    lines = open(p).read().splitlines()
    assert lines[0] == "# dig" and lines[1] == "replicate,k,beta"
    assert lines[-1] == "1,2,5.0"
