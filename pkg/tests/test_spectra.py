import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mexneedlets.errors import DomainError, RegimeError, ValidationError
from mexneedlets.spectra import (
    AlphaRegular,
    Exponential,
    Tabulated,
    single_multipole,
    spectrum_from_params,
    summability_check,
    validate_condition_A,
)


def test_alpha_regular_power_law():
    s = AlphaRegular(3.0)
    assert s(1) == 1.0
    assert s(10) == pytest.approx(1e-3)
    np.testing.assert_allclose(s(np.array([2, 4])), [1 / 8, 1 / 64])


def test_alpha_regular_rejects_alpha_le_2():
    with pytest.raises(ValidationError, match="α > 2"):
        AlphaRegular(1.5)
    with pytest.raises(ValidationError, match="α > 2"):
        spectrum_from_params({"variant": "alpha_regular", "alpha": "2"})


def test_monopole_excluded():
    with pytest.raises(DomainError):
        AlphaRegular(3.0)(0)


def test_modulating_function_uses_scale_ratio():
    s = AlphaRegular(4.0, g=lambda u: 1.0 + 0.0 * u + 0.5 * np.cos(u), g_label="c")
    l = 12.0
    j = math.floor(math.log2(l) + 0.5)
    assert s(l) == pytest.approx(l**-4 * (1 + 0.5 * math.cos(l / 2**j)))


def test_exponential():
    s = Exponential()
    assert s(3) == pytest.approx(math.exp(-3))
    s2 = Exponential(H=(1.0, 2.0), p_exp=0.5)
    assert s2(4) == pytest.approx(9 * math.exp(-2))


def test_tabulated_bounds_and_file(tmp_path):
    t = Tabulated((1.0, 0.5, 0.25))
    assert t.lmax == 3 and t(2) == 0.5
    with pytest.raises(DomainError):
        t(4)
    f = tmp_path / "cl.txt"
    f.write_text("# l C_l\n1 1.0\n2 0.5\n")
    assert Tabulated.from_file(f).values == (1.0, 0.5)
    f.write_text("1 1.0\n3 0.5\n")
    with pytest.raises(ValidationError, match=":2"):
        Tabulated.from_file(f)
    f.write_text("1 1.0\n2 -0.5\n")
    with pytest.raises(ValidationError):
        Tabulated.from_file(f)


def test_single_multipole():
    s = single_multipole(5)
    assert s(5) == 1.0 and s(3) < 1e-299


def test_condition_check_passes_for_smooth_g():
    rep = validate_condition_A(AlphaRegular(3.0), B=2.0, p=2)
    assert rep.passed and rep.alpha_ok
    assert rep.subcritical is True
    assert rep.c0_estimate == pytest.approx(1.0)


def test_condition_check_regime():
    with pytest.raises(RegimeError):
        validate_condition_A(Exponential(), B=2.0)


@given(st.integers(10, 2000))
def test_summability_tail_bounds_true_remainder(L):
    s = AlphaRegular(3.0)
    partial, tail = summability_check(s, L)
    # true remainder from a long finite sum plus an integral bound
    l = np.arange(L + 1, 200_000)
    rest = np.sum((2 * l + 1) * l**-3.0)
    assert tail >= rest
    assert tail <= rest * 1.5 + 1e-12
    assert partial == pytest.approx(np.sum((2 * np.arange(1, L + 1) + 1) * np.arange(1, L + 1) ** -3.0))


def test_spectrum_from_params_variants(tmp_path):
    assert isinstance(spectrum_from_params({"variant": "exponential"}), Exponential)
    with pytest.raises(ValidationError, match="spectrum.variant"):
        spectrum_from_params({"variant": "nope"})
    with pytest.raises(ValidationError, match="spectrum.g"):
        spectrum_from_params({"variant": "alpha_regular", "alpha": "3", "g": "__import__('os')"})
