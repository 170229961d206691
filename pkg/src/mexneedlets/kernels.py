"""Needlet frequency windows and the SMHW real-space profile.

Two kernel families share one surface, ``kernel.weight(l, j)``:

* :class:`NPWKernel` -- compactly supported window ``b(l / B^j)`` built from a
  C-infinity bump, so that ``sum_j b^2(xi / B^j) = 1`` for ``xi >= 1``.
* :class:`MexicanKernel` -- ``f(s) = s^p exp(-s)`` at ``s = l(l+1) / B^(2j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, TruncationError, ValidationError
from .harmonics import FOUR_PI, legendre_batch

#: ``psi`` series cut: smallest l with s > p + PSI_CUTOFF
PSI_CUTOFF = 40.0


def _h(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


@dataclass(frozen=True)
class Bump:
    """Smooth nonincreasing ``phi`` with ``phi = 1`` on ``[0, 1/B]``, ``0`` on ``[1, inf)``.

    On the bridge ``phi(xi) = h(u) / (h(u) + h(1 - u))`` with
    ``h(x) = exp(-1/x)`` and ``u = (1 - xi) / (1 - 1/B)``.
    """

    B: float

    def __post_init__(self):
        if not self.B > 1:
            raise DomainError(f"bump needs B > 1, got {self.B}")

    def __call__(self, xi):
        xi = np.abs(np.asarray(xi, dtype=float))
        u = np.clip((1.0 - xi) / (1.0 - 1.0 / self.B), 0.0, 1.0)
        hu, hv = _h(u), _h(1.0 - u)
        out = hu / (hu + hv)
        out = np.where(xi <= 1.0 / self.B, 1.0, np.where(xi >= 1.0, 0.0, out))
        return float(out) if out.ndim == 0 else out


def build_bump(B: float) -> Bump:
    return Bump(B)


class NeedletKernel:
    kind: str
    B: float

    def weight(self, l, j):
        raise NotImplementedError

    def peak_degree(self, j) -> float:
        """Degree where ``weight(., j)`` is largest."""
        raise NotImplementedError

    def truncation_degree(self, j, cutoff=None) -> int:
        """Degree beyond which the weight is treated as zero."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NPWKernel(NeedletKernel):
    B: float = 2.0
    kind = "npw"

    def __post_init__(self):
        if not self.B > 1:
            raise ValidationError(f"B must exceed 1, got {self.B}", field="kernel.B")

    @property
    def bump(self) -> Bump:
        return Bump(self.B)

    def window(self, xi):
        """``b(xi) = sqrt(max(phi(xi/B) - phi(xi), 0))``."""
        phi = self.bump
        b2 = np.asarray(phi(np.asarray(xi, dtype=float) / self.B) - phi(xi))
        out = np.sqrt(np.maximum(b2, 0.0))
        return float(out) if out.ndim == 0 else out

    def weight(self, l, j):
        return self.window(np.asarray(l, dtype=float) / self.B**j)

    def peak_degree(self, j):
        return float(self.B**j)

    def truncation_degree(self, j, cutoff=None):
        # b(l / B^j) vanishes for l >= B^(j+1)
        return int(math.ceil(self.B ** (j + 1)))

    def describe(self):
        return {"kind": "npw", "B": self.B}


@dataclass(frozen=True)
class MexicanKernel(NeedletKernel):
    B: float = 2.0
    p: int = 1
    kind = "mexican"

    def __post_init__(self):
        if not self.B > 1:
            raise ValidationError(f"B must exceed 1, got {self.B}", field="kernel.B")
        if int(self.p) != self.p or self.p < 1:
            raise ValidationError(f"order p must be a positive integer, got {self.p}", field="kernel.p")

    def s(self, l, j):
        l = np.asarray(l, dtype=float)
        return l * (l + 1.0) / self.B ** (2.0 * j)

    def weight(self, l, j):
        s = self.s(l, j)
        out = s**self.p * np.exp(-s)
        return float(out) if np.ndim(out) == 0 else out

    def peak_degree(self, j):
        # l(l+1) = p B^(2j)
        return 0.5 * (math.sqrt(1.0 + 4.0 * self.p * self.B ** (2.0 * j)) - 1.0)

    def truncation_degree(self, j, cutoff=None):
        """Smallest ``l`` with ``s > p + cutoff`` (default cutoff 40)."""
        cutoff = PSI_CUTOFF if cutoff is None else cutoff
        target = (self.p + cutoff) * self.B ** (2.0 * j)
        l = int(math.floor(0.5 * (math.sqrt(1.0 + 4.0 * target) - 1.0)))
        while l * (l + 1.0) <= target:
            l += 1
        return max(l, 1)

    def describe(self):
        return {"kind": "mexican", "B": self.B, "p": self.p}


def npw_window(kernel: NeedletKernel, xi):
    if not isinstance(kernel, NPWKernel):
        raise ValidationError(f"expected an npw kernel, got {kernel.kind}", field="kernel.kind")
    return kernel.window(xi)


def mexican_weight(kernel: NeedletKernel, l, j):
    if not isinstance(kernel, MexicanKernel):
        raise ValidationError(f"expected a mexican kernel, got {kernel.kind}", field="kernel.kind")
    return kernel.weight(l, j)


def kernel_from_params(params: dict) -> NeedletKernel:
    kind = params.get("kind", "mexican")
    B = float(params.get("B", 2.0))
    if kind == "npw":
        return NPWKernel(B)
    if kind == "mexican":
        p = float(params.get("p", 1))
        if p != int(p):
            raise ValidationError(f"order p must be a positive integer, got {p}", field="kernel.p")
        return MexicanKernel(B, int(p))
    raise ValidationError(f"unknown kernel kind {kind!r}", field="kernel.kind")


# ---------------------------------------------------------------------------
# real-space profiles


def needlet_profile(kernel: NeedletKernel, j, theta, tol: float = 1e-12, cutoff=None):
    """``sum_l w_j(l) (2l+1)/(4 pi) P_l(cos theta)`` without the sqrt(lambda) factor.

    Raises :class:`TruncationError` when the neglected tail, bounded by
    ``B^(2j)/(4 pi) Gamma(p+1, s_L)`` for Mexican kernels, exceeds ``tol``
    relative to the value at the origin.
    """
    theta = np.asarray(theta, dtype=float)
    L = kernel.truncation_degree(j, cutoff)
    l = np.arange(L + 1)
    w = np.asarray(kernel.weight(l, j), dtype=float)
    w[0] = 0.0
    coef = w * (2 * l + 1) / FOUR_PI
    if isinstance(kernel, MexicanKernel):
        s_L = float(kernel.s(L, j))
        tail = kernel.B ** (2.0 * j) / FOUR_PI * special.gammaincc(kernel.p + 1, s_L) * special.gamma(kernel.p + 1)
        head = float(np.sum(coef))
        if tail > tol * head:
            raise TruncationError(f"profile tail {tail:.3e} exceeds {tol:g} x {head:.3e} at L={L}")
    P = legendre_batch(L, np.clip(np.cos(theta), -1.0, 1.0))
    return np.tensordot(coef, P, axes=(0, 0))


@dataclass(frozen=True)
class SMHWProfile:
    """Stereographic Mexican hat at scale ``t = B^-j``, evaluated literally.

    ``Psi(theta) = N [1 + (y/2)^2]^2 [2 - y^2 / (2 t^2)] exp(-y^2 / (4 t^2))``
    with ``y = 2 tan(theta/2)`` and
    ``N = 1 / (sqrt(2 pi) sqrt(2) t sqrt(1 + t^2 + t^4))``.
    """

    B: float
    j: float

    def __post_init__(self):
        if not self.B > 1:
            raise DomainError("B must exceed 1")

    @property
    def scale_t(self) -> float:
        return self.B ** (-self.j)

    @property
    def norm(self) -> float:
        t = self.scale_t
        return 1.0 / (math.sqrt(2 * math.pi) * math.sqrt(2.0) * t * math.sqrt(1 + t**2 + t**4))

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < 0) or np.any(theta >= math.pi):
            raise DomainError("SMHW profile needs theta in [0, pi); theta = pi is the projection pole")
        t = self.scale_t
        y = 2.0 * np.tan(theta / 2.0)
        out = self.norm * (1 + (y / 2) ** 2) ** 2 * (2 - y**2 / (2 * t**2)) * np.exp(-(y**2) / (4 * t**2))
        return float(out) if out.ndim == 0 else out


def smhw_profile(prof: SMHWProfile, theta):
    return prof(theta)


def smhw_approximation_gap(prof: SMHWProfile, kernel: MexicanKernel, theta_grid, grid=None, fit_grid=None):
    """Fit ``K`` in ``Psi ~ K psi`` by least squares and return ``(K, |Psi - K psi|)``.

    ``K`` is fitted on ``fit_grid`` when given, otherwise on ``theta_grid``.
    When a cubature ``grid`` is passed, ``psi`` carries the typical
    ``sqrt(lambda) = sqrt(4 pi / N_j)`` factor of a needlet at that grid.
    """
    if not isinstance(kernel, MexicanKernel):
        raise ValidationError("the SMHW comparison needs a mexican kernel", field="kernel.kind")
    if not math.isclose(kernel.B, prof.B):
        raise ValidationError("profile and kernel must share B", field="kernel.B")
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    fit = theta_grid if fit_grid is None else np.atleast_1d(np.asarray(fit_grid, dtype=float))
    scale = 1.0 if grid is None else math.sqrt(FOUR_PI / grid.size)
    psi_fit = scale * needlet_profile(kernel, prof.j, fit)
    Psi_fit = prof(fit)
    denom = float(psi_fit @ psi_fit)
    if denom == 0.0:
        raise DomainError("needlet profile vanishes on the fit grid")
    K = float(psi_fit @ Psi_fit) / denom
    gap = np.abs(prof(theta_grid) - K * scale * needlet_profile(kernel, prof.j, theta_grid))
    return K, gap
