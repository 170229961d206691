import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mexneedlets.cubature import build_grid
from mexneedlets.errors import DomainError, ValidationError
from mexneedlets.kernels import (
    MexicanKernel,
    NPWKernel,
    SMHWProfile,
    build_bump,
    kernel_from_params,
    mexican_weight,
    needlet_profile,
    npw_window,
    smhw_approximation_gap,
)
from mexneedlets.harmonics import FOUR_PI, legendre_batch


def test_bump_plateaus_and_bridge():
    phi = build_bump(2.0)
    assert phi(0.1) == 1.0
    assert phi(0.5) == 1.0
    assert phi(1.5) == 0.0
    assert phi(1.0) == 0.0
    mid = phi(0.75)
    assert 0.0 < mid < 1.0
    assert phi(0.74) > mid > phi(0.76)


def test_bump_rejects_bad_base():
    with pytest.raises(DomainError):
        build_bump(1.0)


@given(st.floats(1.05, 4.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_bump_monotone_in_unit_range(B, a, b):
    phi = build_bump(B)
    lo, hi = min(a, b), max(a, b)
    assert 0.0 <= phi(hi) <= phi(lo) <= 1.0


def test_bump_derivatives_continuous_at_joins():
    B = 2.0
    phi = build_bump(B)
    h = 1e-4
    for edge in (1 / B, 1.0):
        x = np.array([edge - 2 * h, edge - h, edge, edge + h, edge + 2 * h])
        v = phi(x)
        d1 = np.diff(v) / h
        d2 = np.diff(v, 2) / h**2
        # all derivatives of the mollifier vanish at the joins
        assert np.max(np.abs(d1)) < 1e-6
        assert np.max(np.abs(d2)) < 1e-3


def test_npw_support_is_exact():
    k = NPWKernel(2.0)
    assert npw_window(k, 1 / (2 * 2.0)) == 0.0
    assert npw_window(k, 0.5) == 0.0
    assert npw_window(k, 2.0) == 0.0
    assert npw_window(k, 4.0) == 0.0
    assert npw_window(k, 1.0) > 0.0


def test_partition_of_unity():
    k = NPWKernel(2.0)
    l = np.arange(1, 2001, dtype=float)
    total = sum(k.window(l / 2.0**j) ** 2 for j in range(0, 14))
    assert np.max(np.abs(total - 1.0)) < 1e-10


@given(st.floats(1.2, 3.0), st.floats(1.0, 500.0))
def test_partition_of_unity_any_base(B, xi):
    k = NPWKernel(B)
    J = int(math.log(xi, B)) + 3
    total = sum(k.window(xi / B**j) ** 2 for j in range(J + 1))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_mexican_weight_closed_forms():
    k1, k2 = MexicanKernel(2.0, 1), MexicanKernel(2.0, 2)
    # l(l+1) = 2 = B^(2j) with j = 1/2
    assert mexican_weight(k1, 1, 0.5) == pytest.approx(math.exp(-1), rel=1e-15)
    assert mexican_weight(k2, 7, 3) / mexican_weight(k1, 7, 3) == pytest.approx(56 / 64)
    assert mexican_weight(k1, 3, 30) < 1e-16


def test_mexican_unimodal_with_peak_near_prediction():
    k = MexicanKernel(2.0, 2)
    l = np.arange(1, 700)
    w = k.weight(l, 6)
    assert np.all(w > 0)
    i = int(np.argmax(w))
    assert np.all(np.diff(w[: i + 1]) > 0) and np.all(np.diff(w[i:]) < 0)
    assert abs(l[i] - k.peak_degree(6)) <= 1


def test_truncation_degree_definition():
    k = MexicanKernel(2.0, 1)
    L = k.truncation_degree(5)
    assert k.s(L, 5) > 41 >= k.s(L - 1, 5)


def test_kind_mismatch_errors():
    with pytest.raises(ValidationError):
        npw_window(MexicanKernel(), 1.0)
    with pytest.raises(ValidationError):
        mexican_weight(NPWKernel(), 3, 1)
    with pytest.raises(ValidationError):
        kernel_from_params({"kind": "mexican", "p": "1.5"})
    with pytest.raises(ValidationError):
        MexicanKernel(B=0.5)


def test_needlet_profile_matches_direct_sum():
    k = MexicanKernel(2.0, 1)
    theta = np.array([0.0, 0.05, 0.3])
    L = k.truncation_degree(3)
    l = np.arange(L + 1)
    coef = k.weight(l, 3) * (2 * l + 1) / FOUR_PI
    direct = coef @ legendre_batch(L, np.cos(theta))
    np.testing.assert_allclose(needlet_profile(k, 3, theta), direct, rtol=1e-14)


def test_smhw_closed_forms():
    prof = SMHWProfile(2.0, 3)
    t = 2.0**-3
    top = 2 / (math.sqrt(2 * math.pi) * math.sqrt(2) * t * math.sqrt(1 + t**2 + t**4))
    assert prof(0.0) == pytest.approx(top, rel=1e-14)
    # zero crossing at y = 2t
    theta0 = 2 * math.atan(t)
    assert abs(prof(theta0)) < 1e-12 * top
    assert prof(theta0 * 0.9) > 0 > prof(theta0 * 1.1)
    assert abs(prof(2.0)) < 1e-20
    with pytest.raises(DomainError):
        prof(math.pi)


def test_smhw_single_point_fit_is_ratio():
    prof = SMHWProfile(2.0, 4)
    k = MexicanKernel(2.0, 1)
    K, gap = smhw_approximation_gap(prof, k, [0.01])
    assert K == pytest.approx(prof(0.01) / needlet_profile(k, 4, 0.01))
    assert gap[0] < 1e-12 * abs(prof(0.01))


def test_smhw_gap_with_grid_scaling():
    prof = SMHWProfile(2.0, 3)
    k = MexicanKernel(2.0, 1)
    g = build_grid(2.0, 3)
    K0, gap0 = smhw_approximation_gap(prof, k, np.linspace(0, 1, 50))
    K1, gap1 = smhw_approximation_gap(prof, k, np.linspace(0, 1, 50), grid=g)
    assert K1 == pytest.approx(K0 / math.sqrt(FOUR_PI / g.size))
    np.testing.assert_allclose(gap0, gap1, rtol=1e-9, atol=1e-12)
    with pytest.raises(ValidationError):
        smhw_approximation_gap(prof, MexicanKernel(3.0, 1), [0.1])
