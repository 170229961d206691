"""Legendre polynomials, normalized associated Legendre functions and Y_lm.

Conventions
-----------
* ``theta`` is colatitude in ``[0, pi]``, ``phi`` longitude in ``[0, 2 pi)``.
* ``Y_lm(theta, phi) = lambda_lm(cos theta) exp(i m phi)`` with the
  Condon-Shortley phase folded into ``lambda_lm``, normalized so that
  ``int |Y_lm|^2 dx = 1`` over the unit sphere.
* ``Y_{l,-m} = (-1)^m conj(Y_lm)``.

The associated functions are computed in fully normalized form with the
sectoral start ``lambda_mm`` followed by the upward recurrence in ``l`` at
fixed ``m``; nothing is ever formed in unnormalized form, so degrees of a few
thousand are safe. Sectoral values that underflow are flushed to zero; this
only happens where the true values are below ~1e-300.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class SphericalPoint:
    """A point on the unit sphere in colatitude/longitude."""

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise DomainError(f"colatitude {self.theta} outside [0, pi]")
        if not 0.0 <= self.phi < 2.0 * math.pi:
            raise DomainError(f"longitude {self.phi} outside [0, 2 pi)")

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    def distance(self, other: "SphericalPoint") -> float:
        """Geodesic distance ``arccos <xi, eta>`` in radians."""
        return float(angular_distance(self.theta, self.phi, other.theta, other.phi))


@dataclass(frozen=True)
class HarmonicIndex:
    l: int
    m: int

    def __post_init__(self):
        if self.l < 0 or abs(self.m) > self.l:
            raise DomainError(f"invalid harmonic index (l={self.l}, m={self.m})")


def angular_distance(theta1, phi1, theta2, phi2):
    """Great-circle distance, stable for small and near-antipodal separations."""
    theta1, phi1, theta2, phi2 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (theta1, phi1, theta2, phi2))
    )
    # haversine form, accurate at small angles
    h = np.sin((theta2 - theta1) / 2) ** 2 + np.sin(theta1) * np.sin(theta2) * np.sin((phi2 - phi1) / 2) ** 2
    return 2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def cos_angle(theta1, phi1, theta2, phi2):
    """``<xi, eta>`` clamped into ``[-1, 1]``."""
    c = np.cos(theta1) * np.cos(theta2) + np.sin(theta1) * np.sin(theta2) * np.cos(phi1 - phi2)
    return np.clip(c, -1.0, 1.0)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0) or np.any(np.isnan(x)):
        raise DomainError("Legendre argument must satisfy |x| <= 1")
    return x


def legendre_batch(l_max: int, x):
    """``P_0(x) .. P_{l_max}(x)`` by the three-term recurrence.

    Returns shape ``(l_max + 1,)`` for scalar ``x`` and ``(l_max + 1,) + x.shape``
    otherwise.
    """
    if l_max < 0:
        raise DomainError("degree must be nonnegative")
    x = _check_x(x)
    out = np.empty((l_max + 1,) + x.shape)
    out[0] = 1.0
    if l_max >= 1:
        out[1] = x
    for l in range(1, l_max):
        out[l + 1] = ((2 * l + 1) * x * out[l] - l * out[l - 1]) / (l + 1)
    return out


def legendre_poly(l: int, x):
    """Degree-``l`` Legendre polynomial; same recurrence as :func:`legendre_batch`."""
    if l < 0:
        raise DomainError("degree must be nonnegative")
    res = legendre_batch(l, x)[l]
    return float(res) if np.ndim(res) == 0 else res


def legendre_series(coeffs, x):
    """``sum_l coeffs[l] P_l(x)`` for an array of arguments, summed in ascending ``l``."""
    coeffs = np.asarray(coeffs, dtype=float)
    x = _check_x(x)
    acc = np.zeros(x.shape)
    if coeffs.size == 0:
        return acc
    p_prev = np.ones(x.shape)
    acc += coeffs[0] * p_prev
    if coeffs.size == 1:
        return acc
    p = x.copy()
    acc += coeffs[1] * p
    for l in range(1, coeffs.size - 1):
        p_prev, p = p, ((2 * l + 1) * x * p - l * p_prev) / (l + 1)
        acc += coeffs[l + 1] * p
    return acc


def addition_kernel(l: int, cos_angle_value):
    """``sum_m Y_lm(xi) conj(Y_lm(eta)) = (2l+1)/(4 pi) P_l(<xi, eta>)``."""
    return (2 * l + 1) / FOUR_PI * legendre_poly(l, cos_angle_value)


def _sectoral_factors(l_max):
    m = np.arange(1, l_max + 1)
    return -np.sqrt((2 * m + 1) / (2 * m))


def normalized_legendre(l_max: int, cos_theta, sin_theta=None):
    """Table of ``lambda_lm(cos theta)`` for ``0 <= m <= l <= l_max``.

    Parameters
    ----------
    l_max : int
    cos_theta : array_like
        Clamped into ``[-1, 1]``.
    sin_theta : array_like, optional
        Supply when known (e.g. from ``np.sin(theta)``) for accuracy near the
        poles; otherwise ``sqrt(1 - x^2)``.

    Returns
    -------
    ndarray, shape ``(l_max + 1, l_max + 1) + cos_theta.shape``
        Indexed ``[l, m, ...]``; entries with ``m > l`` are zero.
    """
    if l_max < 0:
        raise DomainError("degree must be nonnegative")
    x = np.clip(np.asarray(cos_theta, dtype=float), -1.0, 1.0)
    s = np.sqrt(np.maximum(1.0 - x * x, 0.0)) if sin_theta is None else np.abs(np.asarray(sin_theta, float))
    shape = x.shape
    x = x.reshape(1, -1)
    s = np.broadcast_to(s, shape).reshape(1, -1)
    n = l_max + 1
    out = np.zeros((n, n, x.shape[1]))
    fac = _sectoral_factors(l_max)
    with np.errstate(under="ignore"):
        sect = np.empty((n, x.shape[1]))
        sect[0] = 1.0 / math.sqrt(FOUR_PI)
        for m in range(1, n):
            sect[m] = fac[m - 1] * s[0] * sect[m - 1]
        out[0, 0] = sect[0]
        if n > 1:
            # lambda_{1,0} from the general recurrence with lambda_{-1,0} = 0
            out[1, 0] = math.sqrt(3.0) * x[0] * sect[0]
            out[1, 1] = sect[1]
        for l in range(2, n):
            m = np.arange(l)
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))[:, None]
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))[:, None]
            out[l, :l] = a * (x * out[l - 1, :l] - b * out[l - 2, :l])
            out[l, l] = sect[l]
    return out.reshape((n, n) + shape)


def _lambda_column(l: int, m: int, x, s):
    """``lambda_{l', m}`` for ``l' = m .. l`` only, at fixed ``m >= 0``."""
    with np.errstate(under="ignore"):
        val = np.full(np.shape(x), 1.0 / math.sqrt(FOUR_PI))
        for k in range(1, m + 1):
            val = -math.sqrt((2 * k + 1) / (2 * k)) * s * val
        prev = np.zeros_like(val)
        for ll in range(m + 1, l + 1):
            a = math.sqrt((4.0 * ll * ll - 1.0) / (ll * ll - m * m))
            b = math.sqrt(((ll - 1.0) ** 2 - m * m) / (4.0 * (ll - 1.0) ** 2 - 1.0))
            prev, val = val, a * (x * val - b * prev)
    return val


def spherical_harmonic(l: int, m: int, theta, phi):
    """Fully normalized complex ``Y_lm(theta, phi)`` (Condon-Shortley phase)."""
    HarmonicIndex(l, m)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    x = np.clip(np.cos(theta), -1.0, 1.0)
    s = np.abs(np.sin(theta))
    mm = abs(m)
    val = _lambda_column(l, mm, x, s) * np.exp(1j * mm * phi)
    if m < 0:
        val = (-1) ** mm * np.conj(val)
    return complex(val) if val.ndim == 0 else val


def ylm_table(l_max: int, theta, phi):
    """``Y_lm`` for ``0 <= m <= l <= l_max`` at a set of points, shape ``[l, m, point]``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    lam = normalized_legendre(l_max, np.cos(theta), np.sin(theta))
    phase = np.exp(1j * np.arange(l_max + 1)[:, None] * phi[None, :])
    return lam * phase[None, :, :]
