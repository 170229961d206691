import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mexneedlets.cubature import build_grid, exactness_check, integrate
from mexneedlets.errors import DomainError, ResourceError, ValidationError
from mexneedlets.harmonics import FOUR_PI, spherical_harmonic, ylm_table


def test_constant_and_y00():
    g = build_grid(2.0, 3)
    assert integrate(g, np.ones(g.size)) == pytest.approx(FOUR_PI, abs=1e-12)
    assert g.weights.sum() == pytest.approx(FOUR_PI, abs=1e-10)
    y00 = np.full(g.size, 1 / math.sqrt(FOUR_PI))
    assert integrate(g, y00) == pytest.approx(math.sqrt(FOUR_PI), abs=1e-12)
    assert np.all(g.weights > 0)


def test_orthonormality_products():
    g = build_grid(2.0, 2, exact_degree=8)
    y21 = spherical_harmonic(2, 1, g.theta, g.phi)
    assert abs(integrate(g, y21)) < 1e-12
    y32 = spherical_harmonic(3, 2, g.theta, g.phi)
    assert integrate(g, np.abs(y32) ** 2) == pytest.approx(1.0, abs=1e-10)


def test_exactness_full_table_direct():
    g = build_grid(2.0, 0, exact_degree=21)
    Y = ylm_table(20, g.theta, g.phi)
    I = Y @ g.weights
    I[0, 0] -= math.sqrt(FOUR_PI)
    assert np.max(np.abs(I)) < 1e-12
    assert exactness_check(g, 20) < 1e-12


def test_not_exact_beyond_degree():
    g = build_grid(2.0, 0, exact_degree=10)
    # |Y_{l,l}|^2-type aliasing shows up right above the exact degree
    vals = spherical_harmonic(11, 11, g.theta, g.phi)
    assert abs(integrate(g, vals)) > 1e-6
    with pytest.raises(DomainError):
        exactness_check(g, 10)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 40))
def test_exactness_any_degree(L):
    g = build_grid(2.0, 0, exact_degree=L)
    assert exactness_check(g, L - 1) < 1e-11


def test_point_count_scaling():
    for B in (1.5, 2.0, 2.5):
        for j in range(2, 7):
            g = build_grid(B, j)
            assert 0.25 <= g.size / B ** (2 * j) <= 4.0


def test_point_count_ratio_grows_like_half_B_squared():
    # a product rule exact to degree B^(j+1) needs about B^(2j+2)/2 points
    g = build_grid(3.0, 5)
    assert g.size / 3.0**10 == pytest.approx(4.5, rel=0.05)


def test_errors():
    g = build_grid(2.0, 2)
    with pytest.raises(ValidationError):
        integrate(g, np.ones(g.size + 1))
    with pytest.raises(ResourceError):
        build_grid(2.0, 20)
    with pytest.raises(DomainError):
        build_grid(2.0, 1, exact_degree=0)


def test_csv_export(tmp_path):
    g = build_grid(2.0, 1)
    p = tmp_path / "grid.csv"
    g.to_csv(p, header_comment="x")
    with open(p) as fh:
        assert fh.readline() == "# x\n"
        rows = list(csv.reader(fh))
    assert rows[0] == ["theta", "phi", "weight"]
    assert len(rows) == g.size + 1
    assert sum(float(r[2]) for r in rows[1:]) == pytest.approx(FOUR_PI)
    assert len(g.points) == g.size
