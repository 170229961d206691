"""Gauss-Legendre x equiangular product cubature on the sphere."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError, ResourceError, ValidationError
from .harmonics import FOUR_PI, SphericalPoint, normalized_legendre

DEFAULT_POINT_CAP = 40_000_000


@dataclass(frozen=True, eq=False)
class CubatureGrid:
    """Product grid: ``n_theta`` Gauss-Legendre rings times ``n_phi`` longitudes.

    Points are stored ring-major: index ``k = i * n_phi + q`` is ring ``i``
    (colatitude ``ring_theta[i]``, ascending) and longitude ``2 pi q / n_phi``.
    Every polynomial of degree ``< exact_degree`` integrates exactly.
    """

    B: float
    j: float
    exact_degree: int
    ring_cos: np.ndarray = field(repr=False)
    ring_weights: np.ndarray = field(repr=False)
    n_phi: int

    @property
    def n_theta(self) -> int:
        return self.ring_cos.size

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    def __len__(self):
        return self.size

    @cached_property
    def ring_theta(self) -> np.ndarray:
        return np.arccos(self.ring_cos)

    @cached_property
    def phi_nodes(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi

    @cached_property
    def theta(self) -> np.ndarray:
        return np.repeat(self.ring_theta, self.n_phi)

    @cached_property
    def phi(self) -> np.ndarray:
        return np.tile(self.phi_nodes, self.n_theta)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.repeat(self.ring_weights * (2.0 * math.pi / self.n_phi), self.n_phi)

    @property
    def points(self) -> list[SphericalPoint]:
        return [SphericalPoint(float(t), float(p)) for t, p in zip(self.theta, self.phi)]

    def unit_vectors(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.stack([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)], axis=-1)

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["theta", "phi", "weight"])
            for t, p, wt in zip(self.theta, self.phi, self.weights):
                w.writerow([repr(float(t)), repr(float(p)), repr(float(wt))])


def default_exact_degree(B: float, j: float) -> int:
    return max(int(math.ceil(B ** (j + 1))), 1)


def build_grid(B: float, j: float, exact_degree: int | None = None, point_cap: int = DEFAULT_POINT_CAP) -> CubatureGrid:
    """Product grid exact for spherical polynomials of degree ``< exact_degree``.

    With ``L = exact_degree`` the grid has ``ceil((L + 1) / 2)`` Gauss-Legendre
    nodes in ``cos theta`` (exact to degree ``L``) and ``L + 1`` longitudes.
    """
    if not B > 1:
        raise ValidationError(f"B must exceed 1, got {B}", field="kernel.B")
    L = default_exact_degree(B, j) if exact_degree is None else int(exact_degree)
    if L < 1:
        raise DomainError(f"exact_degree must be at least 1, got {L}")
    n_theta = (L + 2) // 2
    n_phi = L + 1
    if n_theta * n_phi > point_cap:
        raise ResourceError(f"grid with exact_degree {L} needs {n_theta * n_phi} points, cap is {point_cap}")
    x, w = leggauss(n_theta)
    # ascending colatitude = descending cos
    order = np.argsort(-x)
    return CubatureGrid(B, j, L, x[order], w[order], n_phi)


def integrate(grid: CubatureGrid, values) -> complex | float:
    values = np.asarray(values)
    if values.shape[-1] != grid.size:
        raise ValidationError(f"got {values.shape[-1]} values for {grid.size} points", field="values")
    out = values @ grid.weights
    return out.item() if np.ndim(out) == 0 else out


def exactness_check(grid: CubatureGrid, l_max: int) -> float:
    """Max over ``l <= l_max``, ``|m| <= l`` of ``|integral Y_lm - delta_l0 sqrt(4 pi)|``.

    Uses the product structure: ring integrals of ``lambda_lm`` times the
    longitude sums of ``exp(i m phi)``. Negative ``m`` are conjugates and
    share the same error.
    """
    if l_max >= grid.exact_degree:
        raise DomainError(f"l_max {l_max} must be below the exactness degree {grid.exact_degree}")
    if l_max < 0:
        raise DomainError("l_max must be nonnegative")
    lam = normalized_legendre(l_max, grid.ring_cos, np.sqrt(1.0 - grid.ring_cos**2))
    m = np.arange(l_max + 1)
    phase_sum = np.exp(1j * m[:, None] * grid.phi_nodes[None, :]).sum(axis=1) * (2.0 * math.pi / grid.n_phi)
    # integral of Y_lm = sum_rings w_i lambda_lm(x_i) * longitudinal sum
    ring_int = np.tensordot(lam, grid.ring_weights, axes=(2, 0))
    vals = ring_int * phase_sum[None, :]
    target = np.zeros_like(vals)
    target[0, 0] = math.sqrt(FOUR_PI)
    mask = m[None, :] <= np.arange(l_max + 1)[:, None]
    return float(np.max(np.abs(vals - target)[mask]))
